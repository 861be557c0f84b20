"""Acceptance criteria 1 to 8, each timed against its budget.

Every test prints one ``criterion N: PASS|FAIL`` line, visible even when
pytest captures output.
"""

from __future__ import annotations

import time
from contextlib import contextmanager

import pytest

from tagstack.analysis import GUARDED, IMPLICIT, PROVABLE, UNSAFE, analyze
from tagstack.harness.fuzz import fuzz_conservativeness, generate_program
from tagstack.harness.overhead import measure_overhead
from tagstack.harness.scenarios import run_suite
from tagstack.instrument import InstrumentOptions, instrument
from tagstack.interp import RunConfig, run_paired
from tagstack.ir import parse_program, print_program
from tagstack.mte import (
    ALLOWED,
    GRANULE,
    MteConfig,
    TagMemory,
    check_access,
    granule_round,
    set_allocation_tags,
    tag_of,
    with_tag,
)

from .conftest import benign_files, corpus_files, load


@pytest.fixture
def criterion(capsys):
    @contextmanager
    def measure(n: int, title: str, budget: float):
        t = time.perf_counter()
        ok = False
        detail = ""
        try:
            yield
            elapsed = time.perf_counter() - t
            detail = f"{elapsed:.2f}s (budget {budget:g}s)"
            assert elapsed < budget, f"took {elapsed:.2f}s, budget {budget}s"
            ok = True
        finally:
            if not detail:
                detail = f"{time.perf_counter() - t:.2f}s"
            with capsys.disabled():
                print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} {title} [{detail}]")

    return measure


def test_criterion_1_golden_classification(criterion):
    with criterion(1, "golden classification", 1.0):
        r = analyze(load("listing_classes.ir"))
        assert r.of("func_1", "%A").cls == PROVABLE
        assert r.of("func_1", "%B").cls == PROVABLE
        assert analyze(load("listing_classes.ir"), module_pass=False).of("func_1", "%B").cls == UNSAFE
        f = analyze(load("listing_frame.ir"))
        lin = f.of("fill", "%buf_lin")
        assert lin.cls == GUARDED and lin.linear.max_step < GRANULE
        assert f.of("fill", "%buf_bad").cls == UNSAFE
        assert f.of("fill", "%leak").cls == UNSAFE


def test_criterion_2_security_scenarios(criterion):
    with criterion(2, "security scenarios S1-S6", 5.0):
        reports = {r.scenario: r for r in run_suite()}
        assert sorted(reports) == ["s1", "s2", "s3", "s4", "s5", "s6"]
        for sid in ("s1", "s3", "s4", "s5"):
            assert reports[sid].passed and reports[sid].outcome.trapped, (sid, reports[sid].detail)
        assert reports["s2"].passed, reports["s2"].detail
        assert reports["s6"].passed and reports["s6"].outcome.finished


def test_criterion_3_conservativeness_fuzzing(criterion):
    with criterion(3, "conservativeness fuzzing 1000 x 4 plus mutation self-test", 120.0):
        r = fuzz_conservativeness(count=1000, seed=0, inputs_per_program=4)
        assert r.programs == 1000 and r.runs == 4000
        assert r.safe_violations == 0, [f.to_json() for f in r.findings[:5]]
        assert r.guarded_escapes == 0
        assert r.guarded_trapped == r.guarded_oob
        m = fuzz_conservativeness(count=100, seed=0, mutation="trust-unknown-index")
        assert m.safe_violations >= 1


def test_criterion_4_transparency(criterion, golden_table):
    with criterion(4, f"transparency over {len(benign_files())} benign programs", 10.0):
        files = benign_files()
        assert len(files) >= 20
        for elision in (True, False):
            for rel in files:
                p = load(rel)
                ip, _ = instrument(p, options=InstrumentOptions(elision=elision))
                for g in golden_table[rel]:
                    v = run_paired(p, ip, g["args"], RunConfig())
                    assert v.equal, (rel, g["args"], elision, v.reason)
                    assert not v.instrumented.trapped
                    assert (v.plain.value, v.plain.output) == (g["value"], g["output"])


def test_criterion_5_machine_model(criterion):
    with criterion(5, "machine-model conformance", 1.0):
        base = 0x2000
        for wildcard in (False, True):
            cfg = MteConfig(wildcard_enabled=wildcard)
            for alloc in range(16):
                tm = TagMemory()
                tm.map("m", base, 2 * GRANULE)
                set_allocation_tags(tm, base, GRANULE, alloc)
                for atag in range(16):
                    v = check_access(tm, with_tag(base, atag), 8, cfg)
                    assert (v is ALLOWED) == (atag == alloc or (wildcard and atag == 0))
        assert MteConfig().wildcard_enabled is False
        for t in range(16):
            assert tag_of(with_tag(base, t)) == t
        tm = TagMemory()
        tm.map("m", base, 2 * GRANULE)
        set_allocation_tags(tm, base, GRANULE, 1)
        set_allocation_tags(tm, base + GRANULE, GRANULE, 2)
        assert check_access(tm, with_tag(base + 8, 1), 8) is ALLOWED
        assert check_access(tm, with_tag(base + 12, 1), 8) is not ALLOWED
        assert check_access(tm, with_tag(base + 12, 9), 8, via_frame_base=True) is ALLOWED
        assert [granule_round(n) for n in (1, 16, 17)] == [16, 16, 32]


def test_criterion_6_static_overhead(criterion):
    with criterion(6, "static-overhead analogue", 30.0):
        for rel in corpus_files():
            p = load(rel)
            r = analyze(p)
            for elision in (True, False):
                ip, _ = instrument(p, r, InstrumentOptions(elision=elision))
                a = measure_overhead(p, ip, r, rel).dumps()
                b = measure_overhead(p, instrument(p, r, InstrumentOptions(elision=elision))[0], r, rel).dumps()
                assert a == b
                for f in measure_overhead(p, ip, r, rel).functions:
                    assert f.insts_after >= f.insts_before and f.frame_after >= f.frame_before
        p = load("special/one_byte_unsafe.ir")
        r = analyze(p)
        (f,) = measure_overhead(p, instrument(p, r)[0], r).functions
        assert (f.frame_before, f.frame_after) == (1, 16)
        p = load("special/fully_safe.ir")
        r = analyze(p)
        rep = measure_overhead(p, instrument(p, r)[0], r)
        assert rep.frame_before == rep.frame_after


def test_criterion_7_fixpoint_termination(criterion):
    with criterion(7, "fixpoint termination under LIMIT", 5.0):
        p = load("special/mutual_recursion.ir")
        n = len(p.functions)
        for limit in (1, 2, 4, 8, 16, 32, 64):
            r = analyze(p, limit=limit)
            s = r.stats
            assert max(s.visits.values()) == limit
            assert s.iterations <= (limit + 1) * n + n
            assert s.limit_hits > 0 and {"ping", "pong"} <= set(s.limited_functions)
            assert r.of("main", "%arr").cls == UNSAFE


def test_criterion_8_parser_round_trip(criterion):
    with criterion(8, "parse-print-parse over corpus plus 500 generated programs", 60.0):
        texts = [load(rel) for rel in corpus_files()]
        texts += [parse_program(generate_program(seed)) for seed in range(500)]
        for p in texts:
            assert parse_program(print_program(p)) == p
        for rel in corpus_files():
            ip, _ = instrument(load(rel))
            assert parse_program(print_program(ip)) == ip
