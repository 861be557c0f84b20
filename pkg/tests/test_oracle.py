from __future__ import annotations

import pytest

from tagstack.harness.oracle import DEAD, OOB, run_oracle
from tagstack.instrument import instrument
from tagstack.ir import parse_program

from .conftest import benign_files, load


@pytest.mark.parametrize("rel", benign_files())
def test_benign_corpus_is_clean(rel, golden_table):
    p = load(rel)
    for g in golden_table[rel]:
        rep = run_oracle(p, g["args"])
        assert rep.status == "finished" and rep.violations == []
        assert (rep.value, rep.output) == (g["value"], g["output"])


def test_linear_overflow_is_reported_once_per_access():
    rep = run_oracle(load("listing_frame.ir"), [18, 3])
    v = [x for x in rep.violations if x.site == ("fill", "%buf_lin")]
    assert [x.offset for x in v] == [64, 68] and all(x.kind == OOB and x.op == "store" for x in v)


def test_unchecked_index():
    rep = run_oracle(load("listing_frame.ir"), [4, 16])
    assert [(v.site, v.offset) for v in rep.violations] == [(("fill", "%buf_bad"), 64)]
    rep = run_oracle(load("listing_frame.ir"), [4, -1])
    assert rep.violations[0].offset == -4


def test_out_of_bounds_never_aliases_a_neighbour():
    # the overflowing store must not change the neighbour's contents
    p = parse_program(
        """
        func @main(%i: i64) -> i64 {
        entry:
          %a = alloca 8
          %b = alloca 8
          store.i64 [%b + 0] = 5
          %p = gep %a, %i, scale 8, off 0
          store.i64 [%p + 0] = 9
          %v = load.i64 [%b + 0]
          ret %v
        }
        """
    )
    for i in (1, -1, 2):
        rep = run_oracle(p, [i])
        assert rep.value == 5 and len(rep.violations) == 1


def test_use_after_return():
    rep = run_oracle(load("attacks/s4_use_after_return.ir"), [5])
    assert rep.violations and rep.violations[0].kind == DEAD


def test_provenance_survives_memory():
    rep = run_oracle(load("benign/b13_linked_list.ir"), [3])
    assert rep.violations == [] and rep.value == 8


def test_casts_drop_provenance():
    # a pointer rebuilt from an integer carries no provenance, so nothing is attributed
    rep = run_oracle(load("attacks/s5_inttoptr_forgery.ir"), [1])
    assert rep.violations == []


def test_rejects_instrumented_programs():
    ip, _ = instrument(load("listing_classes.ir"))
    with pytest.raises(ValueError):
        run_oracle(ip, [1])


def test_budget_and_faults():
    loop = parse_program("func @main() -> i64 {\nentry:\n  br l\nl:\n  br l\n}\n")
    assert run_oracle(loop, [], step_budget=50).status == "exhausted"
    div = parse_program("func @main(%x: i64) -> i64 {\nentry:\n  %y = sdiv 1, %x\n  ret %y\n}\n")
    assert run_oracle(div, [0]).status == "stopped"
