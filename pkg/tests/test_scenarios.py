from __future__ import annotations

import copy
import time

import pytest

from tagstack.harness.scenarios import (
    SUITE,
    AdversaryScript,
    ScenarioError,
    run_builtin,
    run_scenario,
    run_suite,
    scenario,
)
from tagstack.instrument import InstrumentOptions, instrument
from tagstack.interp import RunConfig
from tagstack.ir import parse_program


def _setup(sid: str, script_edit=None, **instr):
    s = scenario(sid)
    plain = parse_program(s.source())
    ip, plan = instrument(plain, options=InstrumentOptions(**instr))
    d = copy.deepcopy(s.script)
    if script_edit:
        script_edit(d)
    return ip, plan, plain, AdversaryScript.from_json(d)


@pytest.mark.parametrize("elision", [True, False])
def test_suite_passes(elision):
    t = time.perf_counter()
    reports = run_suite(InstrumentOptions(elision=elision))
    assert time.perf_counter() - t < 5
    assert [r.scenario for r in reports] == [s.id for s in SUITE]
    for r in reports:
        assert r.passed, (r.scenario, r.detail)


def test_trap_scenarios_trap_and_others_finish():
    kinds = {r.scenario: r.outcome.status for r in run_suite()}
    assert kinds["s1"] == kinds["s3"] == kinds["s4"] == kinds["s5"] == "trapped"
    assert kinds["s6"] == "finished"


def test_disclosure_learned_the_real_tag():
    r = run_builtin("s1")
    assert r.disclosed["secret"]["tag"] == 0b1100
    assert r.outcome.trap.address_tag != 0b1100  # forgery prevention changed the planted tag


def test_report_json():
    j = run_builtin("s2").to_json()
    assert j["pass"] and j["expectation"] == "must_preserve"


# -- adversary capability limits ---------------------------------------------------


def test_cannot_corrupt_safe_memory():
    def edit(d):
        d["actions"] = [{"op": "corrupt_unsafe", "target": {"slot": "main:%key"}, "bytes": "00", "len": 8}]

    ip, plan, plain, script = _setup("s2", edit)
    with pytest.raises(ScenarioError, match="only top-bit-0"):
        run_scenario(ip, script, plan, plain)


def test_cannot_inject_into_pointer_safe_slot():
    def edit(d):
        d["actions"] = [{"op": "inject_pointer", "target": {"slot": "main:%tbl"}, "value": 0}]
        d["expect"] = {"kind": "must_trap"}

    ip, plan, plain, script = _setup("s2", edit)
    with pytest.raises(ScenarioError, match="pointer-safe"):
        run_scenario(ip, script, plan, plain)


def test_cannot_inject_into_guard():
    def edit(d):
        d["breakpoint"] = {"function": "fill", "index": 12}
        d["actions"] = [{"op": "inject_pointer", "target": {"slot": "fill:%guard.0"}, "value": 0}]

    ip, plan, plain, script = _setup("s3", edit)
    with pytest.raises(ScenarioError):
        run_scenario(ip, script, plan, plain)


def test_scenarios_require_tag_checking():
    ip, plan, plain, script = _setup("s4")
    with pytest.raises(ScenarioError):
        run_scenario(ip, script, plan, plain, config=RunConfig(mte=False))


@pytest.mark.parametrize(
    "bad",
    [
        {"id": "x", "extra": 1},
        {"id": "x", "schema": 2},
        {"id": "x", "expect": {"kind": "must_win"}},
        {"id": "x", "expect": {"kind": "must_trap", "foo": 1}},
        {"id": "x", "actions": [{"op": "disclose", "target": {"slot": "main:%a"}}]},
        {"id": "x", "breakpoint": {"function": "main"}, "actions": [{"op": "jump"}]},
        {"id": "x", "breakpoint": {"function": "main", "index": 0, "before": "%a"}, "actions": []},
    ],
)
def test_malformed_scripts_are_rejected(bad):
    with pytest.raises(ScenarioError):
        AdversaryScript.from_json(bad)


def test_unresolved_reference():
    def edit(d):
        d["actions"] = d["actions"][1:]  # drop the disclosure, keep "$secret.tag"

    ip, plan, plain, script = _setup("s1", edit)
    with pytest.raises(ScenarioError, match="unresolved"):
        run_scenario(ip, script, plan, plain)


# -- negative controls: the judge must be able to say no ----------------------------


def test_control_no_overflow_means_no_trap():
    ip, plan, plain, script = _setup("s3")
    r = run_scenario(ip, script, plan, plain, args=[16])
    assert not r.passed and r.outcome.finished


def test_control_wildcard_lets_untagged_forgery_through():
    def edit(d):
        d["actions"][1]["value"]["tag"] = 0

    ip, plan, plain, script = _setup("s1", edit)
    assert run_scenario(ip, script, plan, plain).passed
    r = run_scenario(ip, script, plan, plain, config=RunConfig(wildcard=True))
    assert not r.passed


def test_control_wrong_expected_value_fails():
    ip, plan, _, _ = _setup("s6")
    script = AdversaryScript.from_json({"id": "s6x", "args": [2], "expect": {"kind": "must_finish_equal", "value": 0}})
    assert not run_scenario(ip, script, plan).passed
    script = AdversaryScript.from_json({"id": "s6y", "args": [2], "expect": {"kind": "must_finish_equal", "value": 322}})
    assert run_scenario(ip, script, plan).passed


def test_control_preserve_detects_program_writes():
    # the program itself writes %key after the snapshot, so a check at ret must see a change
    def edit(d):
        d["breakpoint"] = {"function": "main", "index": 0}
        d["actions"] = []
        d["expect"]["slots"] = ["main:%key"]

    ip, plan, plain, script = _setup("s2", edit)
    r = run_scenario(ip, script, plan, plain)
    assert not r.passed and "main:%key" in r.detail


def test_control_trap_location_is_checked():
    def edit(d):
        d["expect"]["at"] = "main:%data"

    ip, plan, plain, script = _setup("s1", edit)
    assert not run_scenario(ip, script, plan, plain).passed


def test_unknown_scenario():
    with pytest.raises(KeyError):
        scenario("s9")
