from __future__ import annotations

from hypothesis import given, settings
from hypothesis import strategies as st

from tagstack.analysis import EMPTY, FULL, ByteRange
from tagstack.harness.fuzz import GenParams, generate_program
from tagstack.harness.oracle import run_oracle
from tagstack.instrument import InstrumentOptions, instrument
from tagstack.interp import RunConfig, run, run_paired
from tagstack.ir import parse_program, print_program
from tagstack.mte import ALLOWED, GRANULE, TagMemory, check_access, set_allocation_tags, with_tag

tags = st.integers(0, 15)
ranges = st.one_of(
    st.just(EMPTY),
    st.just(FULL),
    st.builds(lambda a, n: ByteRange.span(a, a + n), st.integers(-64, 64), st.integers(1, 64)),
)


@given(st.lists(tags, min_size=4, max_size=4), st.integers(0, 63), st.integers(1, 16), tags, st.booleans())
def test_check_access_matches_definition(granule_tags, off, width, addr_tag, wildcard):
    from tagstack.mte import MteConfig

    base = 0x4000
    tm = TagMemory()
    tm.map("m", base, 4 * GRANULE)
    for i, t in enumerate(granule_tags):
        set_allocation_tags(tm, base + i * GRANULE, GRANULE, t)
    v = check_access(tm, with_tag(base + off, addr_tag), width, MteConfig(wildcard_enabled=wildcard))
    end = off + width
    if end > 4 * GRANULE:
        assert v is not ALLOWED and v.kind == "unmapped"
        return
    touched = {granule_tags[g] for g in range(off // GRANULE, (end - 1) // GRANULE + 1)}
    expect = (wildcard and addr_tag == 0) or touched == {addr_tag}
    assert (v is ALLOWED) == expect


@given(ranges, ranges, ranges)
def test_range_union_is_a_semilattice(a, b, c):
    assert a.union(b) == b.union(a)
    assert a.union(a) == a
    assert a.union(b).union(c) == a.union(b.union(c))
    assert a.union(EMPTY) == a


@given(ranges, st.integers(-100, 100))
def test_shift_keeps_size(r, d):
    s = r.shift(d)
    assert s.is_empty == r.is_empty
    if not r.is_empty and r != FULL:
        assert (s.hi - s.lo) == (r.hi - r.lo)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_generated_programs_round_trip(seed):
    p = parse_program(generate_program(seed))
    assert parse_program(print_program(p)) == p


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.lists(st.integers(-40, 40), min_size=3, max_size=3), st.booleans())
def test_clean_runs_are_transparent(seed, args, elision):
    p = parse_program(generate_program(seed, GenParams(max_functions=2, max_segments=5)))
    rep = run_oracle(p, args, 200_000)
    if rep.status != "finished" or rep.violations:
        return
    ip, _ = instrument(p, options=InstrumentOptions(elision=elision))
    v = run_paired(p, ip, args, RunConfig(step_budget=400_000, check_hygiene=True))
    assert v.equal, v.reason
    assert v.plain.value == rep.value and v.plain.output == rep.output


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_instrumented_text_round_trips(seed):
    ip, _ = instrument(parse_program(generate_program(seed)))
    assert parse_program(print_program(ip)) == ip
    assert run(ip, [1, 2, 3], RunConfig(step_budget=1000)).status in ("finished", "trapped", "exhausted")
