from __future__ import annotations

import dataclasses
import json

import pytest

from tagstack.analysis import (
    DEFAULT_LIMIT,
    EMPTY,
    FULL,
    GUARDED,
    IMPLICIT,
    PROVABLE,
    UNSAFE,
    AnalysisOptions,
    ByteRange,
    analyze,
)
from tagstack.analysis.classify import TFP_CLEAR, TFP_NONE, TFP_UNTAG
from tagstack.harness.fuzz import generate_program
from tagstack.ir import parse_program

from .conftest import corpus_files, load


def classes(p, **kw) -> dict:
    return {k: a.cls for k, a in analyze(p, **kw).allocas.items()}


def test_listing_classes():
    c = classes(load("listing_classes.ir"))
    assert c[("func_1", "%A")] == PROVABLE
    assert c[("func_1", "%B")] == PROVABLE
    assert c[("func_1", "%ptr")] == IMPLICIT


def test_b_needs_the_module_pass():
    c = classes(load("listing_classes.ir"), module_pass=False)
    assert c[("func_1", "%B")] == UNSAFE
    assert c[("func_1", "%A")] == PROVABLE


def test_listing_frame_classes():
    r = analyze(load("listing_frame.ir"))
    lin = r.of("fill", "%buf_lin")
    assert lin.cls == GUARDED and lin.linear.max_step == 4
    assert r.of("fill", "%buf_bad").cls == UNSAFE
    assert r.of("fill", "%leak").cls == UNSAFE


def test_stored_pointer_is_not_pointer_safe_target():
    r = analyze(load("listing_classes.ir"))
    assert r.of("func_1", "%ptr").pointer_safe
    assert r.tfp[("func_1", "%p")] == TFP_NONE


def test_tfp_actions_for_unsafe_loads_and_casts():
    r = analyze(load("attacks/s1_forged_pointer.ir"))
    assert r.tfp[("main", "%p")] == TFP_CLEAR
    r = analyze(load("attacks/s5_inttoptr_forgery.ir"))
    assert TFP_UNTAG in r.tfp.values()


def test_pointer_safety_of_unsafe_tag_class():
    r = analyze(load("attacks/s2_unsafe_corruption.ir"))
    assert r.of("main", "%tbl").pointer_safe
    assert r.of("main", "%mix").cls == PROVABLE and not r.of("main", "%mix").pointer_safe
    assert r.of("main", "%buf").cls == UNSAFE


def _guarded_invariants(p):
    r = analyze(p)
    for a in r.allocas.values():
        if a.cls == GUARDED:
            assert a.linear.max_step is not None and a.linear.max_step < 16
            assert a.linear.start_range.within(0, a.size)
        if a.cls == UNSAFE:
            assert not a.pointer_safe


@pytest.mark.parametrize("rel", corpus_files())
def test_guarded_precondition_on_corpus(rel):
    _guarded_invariants(load(rel))


def test_guarded_precondition_on_generated():
    for seed in range(60):
        _guarded_invariants(parse_program(generate_program(seed)))


@pytest.mark.parametrize("rel", corpus_files())
def test_independent_of_function_order(rel):
    p = load(rel)
    q = dataclasses.replace(p, functions=tuple(reversed(p.functions)))
    a, b = analyze(p), analyze(q)
    assert json.dumps(a.to_json(), sort_keys=True) == json.dumps(b.to_json(), sort_keys=True)


def test_limit_telemetry_on_mutual_recursion():
    p = load("special/mutual_recursion.ir")
    funcs = len(p.functions)
    for limit in (1, 2, 4, 8, DEFAULT_LIMIT):
        r = analyze(p, limit=limit)
        s = r.stats
        assert max(s.visits.values()) <= limit
        assert s.iterations <= (limit + 1) * funcs + funcs
        assert s.limit_hits > 0 and {"ping", "pong"} <= set(s.limited_functions)
        assert r.of("main", "%arr").cls == UNSAFE
        assert r.of("main", "%arr").reason == "analysis depth limit reached"


def test_limit_not_reached_on_acyclic_corpus():
    for rel in ("listing_classes.ir", "listing_frame.ir", "benign/b18_call_chain.ir"):
        r = analyze(load(rel))
        assert r.stats.limit_hits == 0


def test_mutation_flag_is_validated():
    with pytest.raises(ValueError):
        AnalysisOptions(mutation="nope")
    with pytest.raises(ValueError):
        AnalysisOptions(limit=0)


def test_mutation_weakens_classification():
    p = load("listing_frame.ir")
    assert classes(p)[("fill", "%buf_bad")] == UNSAFE
    assert classes(p, mutation="trust-unknown-index")[("fill", "%buf_bad")] != UNSAFE


def test_refuses_instrumented_input():
    from tagstack.instrument import instrument

    ip, _ = instrument(load("listing_frame.ir"))
    with pytest.raises(ValueError):
        analyze(ip)


def test_byte_range_algebra():
    a, b = ByteRange.span(0, 4), ByteRange.span(8, 12)
    assert a.union(b) == ByteRange.span(0, 12)
    assert a.union(EMPTY) == a and EMPTY.union(a) == a
    assert a.union(FULL) == FULL
    assert a.shift(4) == ByteRange.span(4, 8)
    assert a.within(0, 4) and not a.within(0, 3)
    assert not FULL.within(0, 1 << 40)
