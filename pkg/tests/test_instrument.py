from __future__ import annotations

import json

import pytest

from tagstack.analysis import GUARDED, UNSAFE, analyze
from tagstack.harness.fuzz import generate_program
from tagstack.instrument import (
    InstrumentError,
    InstrumentOptions,
    check_layout,
    check_tag_plan,
    instrument,
)
from tagstack.ir import parse_program, print_program, validate
from tagstack.mte import GRANULE, PTR_UNSAFE, SAFE_DEFAULT, UNSAFE_CYCLE, is_pointer_safe_tag

from .conftest import corpus_files, load


def _check(p, options=InstrumentOptions()):
    r = analyze(p, guard_width=options.guard_width)
    ip, plan = instrument(p, r, options)
    assert validate(ip) == []
    assert check_tag_plan(plan, r) == []
    for layout in plan.layouts.values():
        assert check_layout(layout) == []
    return r, ip, plan


@pytest.mark.parametrize("rel", corpus_files())
@pytest.mark.parametrize("elision", [True, False])
def test_corpus_plans_are_consistent(rel, elision):
    _check(load(rel), InstrumentOptions(elision=elision))


def test_generated_plans_are_consistent():
    for seed in range(40):
        _check(parse_program(generate_program(seed)))


def test_tags_follow_class():
    r, _, plan = _check(load("attacks/s2_unsafe_corruption.ir"))
    assert plan.tag_of("main", "%tbl") == SAFE_DEFAULT
    assert plan.tag_of("main", "%mix") == PTR_UNSAFE
    assert plan.tag_of("main", "%buf") in UNSAFE_CYCLE
    for (f, n), t in plan.tags.items():
        if r.of(f, n).cls == UNSAFE:
            assert not is_pointer_safe_tag(t) and not t & 0b1000


def test_guarded_buffer_sits_between_guards():
    r, _, plan = _check(load("listing_frame.ir"))
    layout = plan.layouts["fill"]
    slots = list(layout.slots)
    i = next(k for k, s in enumerate(slots) if s.name == "%buf_lin")
    lin = slots[i]
    assert r.of("fill", "%buf_lin").cls == GUARDED
    for nb in (slots[i - 1] if i else None, slots[i + 1] if i + 1 < len(slots) else None):
        if nb is not None:
            assert nb.tag != lin.tag
    assert all(s.offset % GRANULE == 0 for s in slots if s.tagged)


def test_wider_guards():
    _, _, plan = _check(load("special/mutual_recursion.ir"), InstrumentOptions(guard_width=2))
    _, _, plan = _check(load("benign/b23_guarded_sizes.ir"), InstrumentOptions(guard_width=2))
    assert all(g.padded_size == 2 * GRANULE for g in plan.layouts["main"].guards)


def test_refuses_double_instrumentation():
    ip, _ = instrument(load("listing_classes.ir"))
    with pytest.raises(InstrumentError):
        instrument(ip)


def test_guard_width_mismatch_is_rejected():
    p = load("listing_frame.ir")
    with pytest.raises(InstrumentError):
        instrument(p, analyze(p, guard_width=1), InstrumentOptions(guard_width=2))


def test_elision_removes_checks():
    p = load("attacks/s2_unsafe_corruption.ir")
    on = print_program(instrument(p, options=InstrumentOptions(elision=True))[0])
    off = print_program(instrument(p, options=InstrumentOptions(elision=False))[0])
    assert on.count("tfpload") + on.count("cleartag") <= off.count("tfpload") + off.count("cleartag")


def test_plan_json_is_deterministic():
    p = load("listing_frame.ir")
    a = instrument(p)[1].dumps()
    b = instrument(p)[1].dumps()
    assert a == b
    j = json.loads(a)
    assert j["schema"] == 1 and j["guards"] and j["tfp_sites"] is not None


def test_frame_resets_before_return():
    text = print_program(instrument(load("listing_frame.ir"))[0])
    fill = text.split("func @fill")[1].split("func @main")[0]
    tail = fill.split("after:")[1]
    for slot in ("%guard.0, 16", "%buf_bad, 64", "%leak, 8"):
        assert f"settag {slot}" in tail
    assert tail.index("settag %leak") < tail.index("ret %first")


def test_dynamic_frames_are_retagged_whole():
    text = print_program(instrument(load("benign/b10_dynamic.ir"))[0])
    assert "retagframe" in text.split("func @vla")[1].split("func @main")[0]
