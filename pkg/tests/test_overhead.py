from __future__ import annotations

import json

import pytest

from tagstack.analysis import analyze
from tagstack.harness.overhead import OverheadReport, frame_bytes, instruction_count, measure_overhead
from tagstack.instrument import InstrumentOptions, instrument

from .conftest import corpus_files, load


def report(rel, **opts):
    p = load(rel)
    r = analyze(p)
    ip, _ = instrument(p, r, InstrumentOptions(**opts))
    return measure_overhead(p, ip, r, rel)


@pytest.mark.parametrize("rel", corpus_files())
@pytest.mark.parametrize("elision", [True, False])
def test_deltas_are_non_negative(rel, elision):
    rep = report(rel, elision=elision)
    for f in rep.functions:
        assert f.insts_after >= f.insts_before
        assert f.frame_after >= f.frame_before
        assert 0 <= f.safe_bytes <= f.total_bytes


def test_one_byte_unsafe_alloca_costs_a_granule():
    rep = report("special/one_byte_unsafe.ir")
    (f,) = rep.functions
    assert (f.frame_before, f.frame_after) == (1, 16)
    assert f.safe_bytes == 0 and f.total_bytes == 1


def test_fully_safe_program_has_no_frame_cost():
    rep = report("special/fully_safe.ir")
    assert rep.frame_before == rep.frame_after == 24
    assert rep.frame_delta_pct == 0.0 and rep.safe_proportion == 1.0


def test_guards_are_counted():
    rep = report("listing_frame.ir")
    fill = next(f for f in rep.functions if f.function == "fill")
    assert (fill.frame_before, fill.frame_after) == (136, 160)


def test_reports_are_deterministic():
    a = report("listing_frame.ir").dumps()
    assert a == report("listing_frame.ir").dumps()
    j = json.loads(a)
    assert j["schema"] == 1 and set(j["totals"]) >= {"insts_delta_pct", "frame_delta_pct", "safe_proportion"}


def test_merge_and_table():
    total = OverheadReport(name="all").merge(report("listing_frame.ir")).merge(report("special/fully_safe.ir"))
    names = [f.function for f in total.functions]
    assert "listing_frame.ir:fill" in names and "special/fully_safe.ir:main" in names
    table = total.table()
    assert table.splitlines()[-1].startswith("total")


def test_counting_helpers():
    p = load("special/fully_safe.ir")
    f = p.function("main")
    assert instruction_count(f) == 8
    assert frame_bytes(f) == 24
