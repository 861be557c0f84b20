"""Adversary scripts and the fixed security scenario suite S1 to S6.

The adversary may read any memory and any allocation tag, write granules
whose allocation tag has its top bit clear, and overwrite 8-byte pointer
slots inside pointer-unsafe allocations.  Scripts are plain JSON so the
CLI can load them from disk.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Optional

from ..instrument.rewrite import InstrumentOptions, TagPlan, instrument
from ..interp import Breakpoint, Machine, Outcome, RunConfig, run
from ..ir.nodes import Program, Return
from ..ir.parser import parse_program
from ..mte import ADDR_MASK, GRANULE, MachineFault, is_pointer_safe_tag, with_tag

SCRIPT_SCHEMA = 1

DISCLOSE = "disclose"
CORRUPT_UNSAFE = "corrupt_unsafe"
INJECT_POINTER = "inject_pointer"

MUST_TRAP = "must_trap"
MUST_PRESERVE = "must_preserve"
MUST_FINISH_EQUAL = "must_finish_equal"

_ACTION_KEYS = {
    DISCLOSE: {"op", "target", "len", "as"},
    CORRUPT_UNSAFE: {"op", "target", "bytes", "value", "len"},
    INJECT_POINTER: {"op", "target", "value"},
}
_EXPECT_KEYS = {
    MUST_TRAP: {"kind", "at"},
    MUST_PRESERVE: {"kind", "slots", "check"},
    MUST_FINISH_EQUAL: {"kind", "value", "output"},
}


class ScenarioError(Exception):
    """The script is malformed or asks for something outside the adversary model."""


def _only(d: dict, allowed: set, what: str) -> None:
    extra = set(d) - allowed
    if extra:
        raise ScenarioError(f"unknown keys in {what}: {sorted(extra)}")


@dataclass(frozen=True)
class BreakpointSpec:
    function: str
    index: Optional[int] = None
    before: Optional[str] = None  # "%value" defined by the instruction, or "ret"
    hit: int = 1

    @classmethod
    def from_json(cls, d: dict) -> "BreakpointSpec":
        _only(d, {"function", "index", "before", "hit"}, "breakpoint")
        if ("index" in d) == ("before" in d):
            raise ScenarioError("breakpoint needs exactly one of 'index' or 'before'")
        return cls(d["function"], d.get("index"), d.get("before"), int(d.get("hit", 1)))

    def resolve(self, p: Program) -> tuple[str, int]:
        try:
            fn = p.function(self.function)
        except KeyError:
            raise ScenarioError(f"breakpoint in unknown function @{self.function}") from None
        flat = fn.flat()
        if self.index is not None:
            if not 0 <= self.index < len(flat):
                raise ScenarioError(f"breakpoint index {self.index} outside @{self.function}")
            return self.function, self.index
        for i, ins in enumerate(flat):
            if self.before == "ret" and isinstance(ins, Return):
                return self.function, i
            if getattr(ins, "result", None) == self.before:
                return self.function, i
        raise ScenarioError(f"no instruction {self.before!r} in @{self.function}")


@dataclass(frozen=True)
class AdversaryScript:
    id: str
    breakpoint: Optional[BreakpointSpec]
    actions: tuple
    expect: dict
    args: tuple = ()
    description: str = ""

    @classmethod
    def from_json(cls, d: dict) -> "AdversaryScript":
        _only(d, {"schema", "id", "breakpoint", "actions", "expect", "args", "description"}, "script")
        if d.get("schema", SCRIPT_SCHEMA) != SCRIPT_SCHEMA:
            raise ScenarioError(f"unsupported script schema {d.get('schema')}")
        actions = tuple(d.get("actions", ()))
        for a in actions:
            op = a.get("op")
            if op not in _ACTION_KEYS:
                raise ScenarioError(f"unknown action {op!r}")
            _only(a, _ACTION_KEYS[op], f"{op} action")
        expect = d.get("expect") or {"kind": MUST_FINISH_EQUAL}
        if expect.get("kind") not in _EXPECT_KEYS:
            raise ScenarioError(f"unknown expectation {expect.get('kind')!r}")
        _only(expect, _EXPECT_KEYS[expect["kind"]], "expectation")
        bp = d.get("breakpoint")
        if actions and bp is None:
            raise ScenarioError("actions need a breakpoint")
        return cls(
            str(d.get("id", "script")),
            BreakpointSpec.from_json(bp) if bp else None,
            actions,
            expect,
            tuple(d.get("args", ())),
            d.get("description", ""),
        )

    @classmethod
    def loads(cls, text: str) -> "AdversaryScript":
        return cls.from_json(json.loads(text))


@dataclass
class ScenarioReport:
    scenario: str
    expectation: str
    passed: bool
    outcome: Outcome
    detail: str = ""
    disclosed: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "scenario": self.scenario,
            "expectation": self.expectation,
            "pass": self.passed,
            "outcome": self.outcome.to_json(),
            "detail": self.detail,
            "disclosed": self.disclosed,
        }


class _Adversary:
    """Applies one script's actions to a live machine under the capability checks."""

    def __init__(self, machine: Machine, plan: Optional[TagPlan]):
        self.m = machine
        self.plan = plan
        self.disclosed: dict[str, dict] = {}

    def address(self, target) -> int:
        if isinstance(target, int):
            return target & ADDR_MASK
        if not isinstance(target, dict) or not ({"slot", "address"} & set(target)):
            raise ScenarioError(f"bad target {target!r}")
        _only(target, {"slot", "address", "offset"}, "target")
        if "address" in target:
            base = int(target["address"]) & ADDR_MASK
        else:
            try:
                base = self.m.slot_span(target["slot"])[0]
            except KeyError as e:
                raise ScenarioError(str(e)) from None
        return base + int(target.get("offset", 0))

    def value(self, spec) -> int:
        if isinstance(spec, int):
            return spec & ((1 << 64) - 1)
        if isinstance(spec, str) and spec.startswith("$"):
            return self._ref(spec)
        if isinstance(spec, dict) and "address_of" in spec:
            _only(spec, {"address_of", "tag"}, "pointer value")
            addr = self.address(spec["address_of"])
            tag = spec.get("tag", 0)
            tag = self._ref(tag) if isinstance(tag, str) else int(tag)
            return with_tag(addr, tag)
        raise ScenarioError(f"bad value {spec!r}")

    def _ref(self, ref: str) -> int:
        name, _, fld = ref[1:].partition(".")
        if name not in self.disclosed or fld not in ("tag", "address", "value"):
            raise ScenarioError(f"unresolved reference {ref}")
        return self.disclosed[name][fld]

    def apply(self, action: dict) -> None:
        op = action["op"]
        if op == DISCLOSE:
            self.disclose(action)
        elif op == CORRUPT_UNSAFE:
            self.corrupt(action)
        else:
            self.inject(action)

    def disclose(self, a: dict) -> None:
        addr = self.address(a["target"])
        n = int(a.get("len", GRANULE))
        try:
            data = self.m.read_bytes(addr, n)
            tags = [self.m.tag_at(g) for g in range(addr & ~(GRANULE - 1), addr + n, GRANULE)]
        except MachineFault as e:
            raise ScenarioError(f"disclose of unmapped memory: {e}") from None
        self.disclosed[a.get("as", f"d{len(self.disclosed)}")] = {
            "address": addr,
            "bytes": data.hex(),
            "tags": tags,
            "tag": tags[0],
            "value": int.from_bytes(data[:8].ljust(8, b"\0"), "little"),
        }

    def corrupt(self, a: dict) -> None:
        addr = self.address(a["target"])
        if "bytes" in a:
            data = bytes.fromhex(a["bytes"])
        elif "value" in a:
            data = self.value(a["value"]).to_bytes(8, "little")
        else:
            raise ScenarioError("corrupt_unsafe needs 'bytes' or 'value'")
        if "len" in a:
            n = int(a["len"])
            data = (data * (n // max(len(data), 1) + 1))[:n]
        if not data:
            return
        try:
            tags = [self.m.tag_at(g) for g in range(addr & ~(GRANULE - 1), addr + len(data), GRANULE)]
        except MachineFault:
            raise ScenarioError("corrupt_unsafe reaches unmapped memory") from None
        bad = [t for t in tags if t & 0b1000]
        if bad:
            raise ScenarioError(f"corrupt_unsafe touches granules tagged {bad[0]:#06b}; only top-bit-0 granules are writable")
        self.m.write_bytes(addr, data)

    def inject(self, a: dict) -> None:
        addr = self.address(a["target"])
        where = self.m.slot_at(addr)
        if where is None:
            raise ScenarioError(f"inject_pointer target {addr:#x} is not inside an allocation")
        fn, name, base, size = where
        if (addr - base) % 8 or addr + 8 > base + size:
            raise ScenarioError(f"inject_pointer target is not an 8-byte slot of {name}")
        if fn != "@":
            if name.startswith("%guard"):
                raise ScenarioError("inject_pointer cannot target a guard")
            if self.plan is not None and (fn, name) in self.plan.tags and is_pointer_safe_tag(self.plan.tags[(fn, name)]):
                raise ScenarioError(f"{fn}:{name} is pointer-safe; its pointer slots cannot be injected")
        try:
            live = self.m.tag_at(addr)
        except MachineFault:
            raise ScenarioError("inject_pointer target is unmapped") from None
        if is_pointer_safe_tag(live):
            raise ScenarioError(f"{name} carries tag {live:#06b}; its pointer slots cannot be injected")
        self.m.write_bytes(addr, self.value(a["value"]).to_bytes(8, "little"))

    def snapshot(self, refs) -> dict:
        snap = {}
        for ref in refs:
            try:
                addr, size = self.m.slot_span(ref)
            except KeyError as e:
                raise ScenarioError(str(e)) from None
            tag = self.m.tag_at(addr)
            if not tag & 0b1000:
                raise ScenarioError(f"{ref} is tagged {tag:#06b}; only safe allocations can be preserved")
            snap[ref] = (addr, self.m.read_bytes(addr, size))
        return snap


def run_scenario(
    p_instr: Program,
    script: AdversaryScript,
    plan: Optional[TagPlan] = None,
    p_plain: Optional[Program] = None,
    args=None,
    config: RunConfig = RunConfig(),
) -> ScenarioReport:
    """Run ``p_instr`` under ``script`` and judge the outcome against its expectation."""
    if not config.mte:
        raise ScenarioError("scenarios run with tag checking on")
    args = list(script.args if args is None else args)
    machine = Machine(p_instr, config)
    adv = _Adversary(machine, plan)
    expect = script.expect
    kind = expect["kind"]
    state: dict = {}
    breakpoints = []

    def guarded(fn: Callable) -> Callable:
        def action(m):
            try:
                fn(m)
            except MachineFault as e:
                raise ScenarioError(f"adversary action faulted: {e}") from None

        return action

    if script.breakpoint is not None:
        fname, idx = script.breakpoint.resolve(p_instr)

        def attack(m):
            if kind == MUST_PRESERVE:
                state["snapshot"] = adv.snapshot(expect.get("slots", ()))
            for a in script.actions:
                adv.apply(a)
            state["attacked"] = True

        breakpoints.append(Breakpoint(fname, idx, script.breakpoint.hit, guarded(attack)))
    elif kind == MUST_PRESERVE:
        raise ScenarioError("must_preserve needs a breakpoint to take its snapshot")

    if kind == MUST_PRESERVE and expect.get("check"):
        cname, cidx = BreakpointSpec.from_json(expect["check"]).resolve(p_instr)
        hit = int(expect["check"].get("hit", 1))

        def check(m):
            if "snapshot" in state and "checked" not in state:
                state["checked"] = _compare(m, state["snapshot"])

        breakpoints.append(Breakpoint(cname, cidx, hit, guarded(check)))

    outcome = machine.run(args, breakpoints)
    if script.actions and not state.get("attacked"):
        return ScenarioReport(script.id, kind, False, outcome, "breakpoint never reached", adv.disclosed)

    if kind == MUST_TRAP:
        if not outcome.trapped:
            return ScenarioReport(script.id, kind, False, outcome, f"run {outcome.status} without a trap", adv.disclosed)
        at = expect.get("at")
        if at is not None:
            try:
                lo, size = machine.slot_span(at)
            except KeyError as e:
                raise ScenarioError(str(e)) from None
            addr = outcome.trap.address
            if addr is None or not lo <= addr < lo + max(size, 1):
                return ScenarioReport(script.id, kind, False, outcome, f"trap at {addr!r} is outside {at}", adv.disclosed)
        return ScenarioReport(script.id, kind, True, outcome, outcome.trap.describe(), adv.disclosed)

    if kind == MUST_PRESERVE:
        if "snapshot" not in state:
            return ScenarioReport(script.id, kind, False, outcome, "snapshot never taken", adv.disclosed)
        changed = state.get("checked")
        if changed is None:
            changed = _compare(machine, state["snapshot"])
        ok = not changed
        detail = "safe slots unchanged" if ok else f"changed: {', '.join(changed)}"
        return ScenarioReport(script.id, kind, ok, outcome, f"{detail}; run {outcome.status}", adv.disclosed)

    # must_finish_equal
    if not outcome.finished:
        why = outcome.trap.describe() if outcome.trap else outcome.status
        return ScenarioReport(script.id, kind, False, outcome, f"did not finish: {why}", adv.disclosed)
    want_value, want_output = expect.get("value"), expect.get("output")
    if p_plain is not None:
        plain = run(p_plain, args, RunConfig(mte=False, step_budget=config.step_budget))
        want_value, want_output = plain.value, plain.output
    if want_value is not None and outcome.value != want_value:
        return ScenarioReport(script.id, kind, False, outcome, f"value {outcome.value} != {want_value}", adv.disclosed)
    if want_output is not None and list(outcome.output) != list(want_output):
        return ScenarioReport(script.id, kind, False, outcome, "output differs", adv.disclosed)
    return ScenarioReport(script.id, kind, True, outcome, "finished equal", adv.disclosed)


def _compare(m: Machine, snapshot: dict) -> list[str]:
    return [ref for ref, (addr, data) in snapshot.items() if m.read_bytes(addr, len(data)) != data]


# -- the fixed suite ------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    id: str
    program: str  # file under corpus/attacks
    script: dict
    goal: str

    def source(self) -> str:
        return resources.files("tagstack.corpus").joinpath("attacks", self.program).read_text()


SUITE: tuple[Scenario, ...] = (
    Scenario(
        "s1",
        "s1_forged_pointer.ir",
        {
            "id": "s1",
            "description": "learn the tag of a safe local, then plant a pointer to it carrying that tag",
            "args": [0],
            "breakpoint": {"function": "main", "before": "%p"},
            "actions": [
                {"op": DISCLOSE, "target": {"slot": "main:%secret"}, "len": 16, "as": "secret"},
                {
                    "op": INJECT_POINTER,
                    "target": {"slot": "main:%rec", "offset": 0},
                    "value": {"address_of": {"slot": "main:%secret"}, "tag": "$secret.tag"},
                },
            ],
            "expect": {"kind": MUST_TRAP, "at": "main:%secret"},
        },
        "forged address tags cannot reach safe memory, even after disclosure",
    ),
    Scenario(
        "s2",
        "s2_unsafe_corruption.ir",
        {
            "id": "s2",
            "description": "overwrite every unsafe byte the adversary can reach",
            "args": [3],
            "breakpoint": {"function": "main", "before": "%v"},
            "actions": [
                {"op": CORRUPT_UNSAFE, "target": {"slot": "main:%buf"}, "bytes": "41", "len": 32},
                {"op": CORRUPT_UNSAFE, "target": {"slot": "@cfg"}, "bytes": "ff", "len": 16},
            ],
            "expect": {
                "kind": MUST_PRESERVE,
                "slots": ["main:%key", "main:%tbl", "main:%mix"],
                "check": {"function": "main", "before": "ret"},
            },
        },
        "unsafe allocations are isolated from safe ones",
    ),
    Scenario(
        "s3",
        "s3_guarded_overflow.ir",
        {"id": "s3", "description": "loop bound one past the buffer", "args": [17], "expect": {"kind": MUST_TRAP, "at": "fill:%guard.1"}},
        "linear overflow of a guarded buffer stops at its guard",
    ),
    Scenario(
        "s4",
        "s4_use_after_return.ir",
        {"id": "s4", "description": "dereference a leaked pointer to a dead frame", "args": [5], "expect": {"kind": MUST_TRAP}},
        "dangling pointers into released frames trap",
    ),
    Scenario(
        "s5",
        "s5_inttoptr_forgery.ir",
        {
            "id": "s5",
            "description": "plant a correctly tagged address as an integer that the program casts to a pointer",
            "args": [1],
            "breakpoint": {"function": "main", "before": "%raw"},
            "actions": [
                {"op": DISCLOSE, "target": {"slot": "main:%secret"}, "len": 16, "as": "secret"},
                {
                    "op": CORRUPT_UNSAFE,
                    "target": {"slot": "main:%in", "offset": 8},
                    "value": {"address_of": {"slot": "main:%secret"}, "tag": "$secret.tag"},
                },
            ],
            "expect": {"kind": MUST_TRAP, "at": "main:%secret"},
        },
        "integer-to-pointer casts cannot produce safe address tags",
    ),
    Scenario(
        "s6",
        "s6_null_sentinel.ir",
        {"id": "s6", "description": "benign list walk ending at NULL", "args": [2], "expect": {"kind": MUST_FINISH_EQUAL}},
        "sentinel comparisons see the loaded pointer unchanged",
    ),
)


def scenario(sid: str) -> Scenario:
    for s in SUITE:
        if s.id == sid:
            return s
    raise KeyError(f"unknown scenario {sid!r}; known: {', '.join(s.id for s in SUITE)}")


def run_builtin(sid: str, options: InstrumentOptions = InstrumentOptions(), config: RunConfig = RunConfig()) -> ScenarioReport:
    """Instrument the scenario's program and run its script."""
    s = scenario(sid)
    plain = parse_program(s.source())
    p_instr, plan = instrument(plain, options=options)
    return run_scenario(p_instr, AdversaryScript.from_json(s.script), plan, plain, config=config)


def run_suite(options: InstrumentOptions = InstrumentOptions(), config: RunConfig = RunConfig()) -> list[ScenarioReport]:
    return [run_builtin(s.id, options, config) for s in SUITE]
