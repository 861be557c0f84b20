from __future__ import annotations

import pytest

from tagstack.instrument import InstrumentOptions, instrument
from tagstack.interp import EXHAUSTED, FINISHED, TRAPPED, Breakpoint, Machine, RunConfig, run, run_paired
from tagstack.ir import parse_program

from .conftest import benign_files, load


@pytest.mark.parametrize("rel", benign_files())
def test_plain_run_matches_golden(rel, golden_table):
    p = load(rel)
    for g in golden_table[rel]:
        o = run(p, g["args"], RunConfig(mte=False))
        assert o.status == FINISHED
        assert (o.value, o.output) == (g["value"], g["output"])


@pytest.mark.parametrize("rel", benign_files())
def test_instrumented_run_matches_golden(rel, golden_table):
    ip, _ = instrument(load(rel))
    for g in golden_table[rel]:
        o = run(ip, g["args"], RunConfig(check_hygiene=True))
        assert o.status == FINISHED, o.trap and o.trap.describe()
        assert (o.value, o.output) == (g["value"], g["output"])


def test_listing_frame_overflow_traps():
    p = load("listing_frame.ir")
    ip, plan = instrument(p)
    assert run(ip, [16, 3]).finished
    o = run(ip, [17, 3])
    assert o.status == TRAPPED and o.trap.kind == "tag-mismatch" and o.trap.function == "fill"
    assert run(p, [17, 3], RunConfig(mte=False)).finished


def test_unsafe_index_into_neighbour_traps():
    ip, _ = instrument(load("listing_frame.ir"))
    assert run(ip, [4, 15]).finished
    assert run(ip, [4, 16]).trapped
    assert run(ip, [4, -1]).trapped


def test_step_budget():
    p = parse_program("func @main() -> i64 {\nentry:\n  br entry2\nentry2:\n  br entry2\n}\n")
    o = run(p, [], RunConfig(step_budget=100))
    assert o.status == EXHAUSTED and o.steps == 100


def test_division_by_zero_is_a_trap():
    p = parse_program("func @main(%x: i64) -> i64 {\nentry:\n  %y = sdiv 1, %x\n  ret %y\n}\n")
    o = run(p, [0])
    assert o.trapped and o.trap.kind == "div-zero"
    assert run(p, [1]).value == 1


def test_signed_division_truncates():
    p = parse_program(
        "func @main(%a: i64, %b: i64) -> i64 {\nentry:\n  %q = sdiv %a, %b\n  %r = srem %a, %b\n  output %q\n  output %r\n  ret 0\n}\n"
    )
    assert run(p, [-7, 2]).output == [-3, -1]
    assert run(p, [7, -2]).output == [-3, 1]


def test_recursion_depth_is_bounded():
    p = parse_program("func @main(%n: i64) -> i64 {\nentry:\n  %r = call @main(%n)\n  ret %r\n}\n")
    o = run(p, [1], RunConfig(max_depth=50))
    assert o.trapped and o.trap.kind == "stack-depth"


def test_paired_reports_difference():
    ip, _ = instrument(load("listing_frame.ir"))
    v = run_paired(load("listing_frame.ir"), ip, [17, 3])
    assert not v.equal and v.instrumented.trapped


def test_mte_off_runs_instrumented_code_unchecked():
    ip, _ = instrument(load("listing_frame.ir"))
    o = run(ip, [17, 3], RunConfig(mte=False))
    assert o.finished


def test_trace_records_checks_and_steps():
    ip, _ = instrument(load("listing_classes.ir"))
    o = run(ip, [3], RunConfig(trace=True))
    kinds = {e.get("event", "check") for e in o.trace}
    assert {"step", "check"} <= kinds
    assert all(e["verdict"] == "allowed" for e in o.trace if "verdict" in e)


def test_breakpoint_sees_live_frame():
    ip, _ = instrument(load("listing_classes.ir"))
    seen = []
    m = Machine(ip, RunConfig())
    m.run([3], [Breakpoint("func_1", 0, 1, lambda mm: seen.append(mm.slot_span("func_1:%A")))])
    assert seen and seen[0][1] == 16


def test_dynamic_alloca_negative_size_faults():
    p = parse_program("func @main(%n: i64) -> i64 {\nentry:\n  %a = alloca %n x 4\n  ret 0\n}\n")
    assert run(p, [2]).finished
    assert run(p, [-1]).trapped


@pytest.mark.parametrize("elision", [True, False])
def test_sentinel_pointer_compare(elision):
    p = load("attacks/s6_null_sentinel.ir")
    ip, _ = instrument(p, options=InstrumentOptions(elision=elision))
    assert run_paired(p, ip, [2]).equal
