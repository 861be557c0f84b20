from __future__ import annotations

import random

from tagstack.harness.fuzz import GenParams, check_run, fuzz_conservativeness, generate_program, random_inputs
from tagstack.harness.oracle import OracleReport, Violation
from tagstack.interp import Outcome
from tagstack.mte import Trap
from tagstack.ir import parse_program, validate


def test_generator_is_deterministic_and_valid():
    for seed in range(30):
        text = generate_program(seed)
        assert text == generate_program(seed)
        assert validate(parse_program(text)) == []
    assert generate_program(1) != generate_program(2)


def test_generator_respects_params():
    small = GenParams(max_functions=1, max_loops=0, max_allocas=1, max_segments=2)
    for seed in range(20):
        p = parse_program(generate_program(seed, small))
        assert len(p.functions) <= 2


def test_inputs_are_deterministic():
    assert random_inputs(random.Random(4)) == random_inputs(random.Random(4))


def test_small_campaign_is_clean():
    r = fuzz_conservativeness(count=60, seed=7)
    assert r.programs == 60 and r.runs == 240
    assert r.findings == []
    assert r.guarded_trapped == r.guarded_oob


def test_campaign_is_reproducible():
    a = fuzz_conservativeness(count=15, seed=3).to_json()
    b = fuzz_conservativeness(count=15, seed=3).to_json()
    assert a == b


def test_mutation_is_caught():
    r = fuzz_conservativeness(count=100, seed=0, mutation="trust-unknown-index")
    assert r.safe_violations >= 1


def _violation(site):
    return Violation(site, "out-of-bounds", 16, 4, "store", 1, site[0])


def test_judge_rules():
    site = ("main", "%x")
    oracle = OracleReport("finished", 1, [], [_violation(site)])
    fin = Outcome("finished", 1)
    trap = Outcome("trapped", trap=Trap("tag-mismatch", 0x100, 1, 2))
    assert [f.kind for f in check_run(0, [], {site: "provable"}, oracle, trap)] == ["safe-violation"]
    assert [f.kind for f in check_run(0, [], {site: "implicit"}, oracle, fin)] == ["safe-violation"]
    assert [f.kind for f in check_run(0, [], {site: "guarded"}, oracle, fin)] == ["guarded-escape"]
    assert check_run(0, [], {site: "guarded"}, oracle, trap) == []
    assert check_run(0, [], {site: "unsafe"}, oracle, fin) == []
    clean = OracleReport("finished", 1, [], [])
    assert [f.kind for f in check_run(0, [], {}, clean, trap)] == ["spurious-trap"]
    assert [f.kind for f in check_run(0, [], {}, clean, Outcome("finished", 2))] == ["divergence"]
