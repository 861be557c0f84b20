"""Tag-blind provenance and bounds oracle.

A separate interpreter over the *uninstrumented* program.  Every pointer
value carries the allocation instance it was derived from; every access
through such a pointer is checked against that instance's bounds and
lifetime.  Allocation instances sit in disjoint address windows so an
out-of-bounds access never aliases another object.  The oracle never
reads allocation tags, tag plans or analysis results.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..ir.nodes import (
    INT,
    Alloca,
    Branch,
    Call,
    Cmp,
    CondBranch,
    Const,
    Gep,
    IntOp,
    IntToPtr,
    Load,
    Output,
    Program,
    PtrToInt,
    Store,
    is_global,
    is_local,
)

U64 = (1 << 64) - 1
WINDOW = 1 << 32  # address space reserved per allocation instance
OOB = "out-of-bounds"
DEAD = "post-lifetime"


def _s64(x: int) -> int:
    x &= U64
    return x - (1 << 64) if x >> 63 else x


@dataclass
class Instance:
    ident: int
    site: tuple[str, str]  # (function, alloca) or ("@", global)
    base: int
    size: int
    alive: bool = True


@dataclass(frozen=True)
class Violation:
    site: tuple[str, str]
    kind: str
    offset: int
    width: int
    op: str
    step: int
    function: str

    def to_json(self) -> dict:
        return {
            "site": list(self.site),
            "kind": self.kind,
            "offset": self.offset,
            "width": self.width,
            "op": self.op,
            "step": self.step,
            "function": self.function,
        }


@dataclass
class OracleReport:
    status: str  # finished | stopped | exhausted
    value: Optional[int] = None
    output: list = field(default_factory=list)
    violations: list[Violation] = field(default_factory=list)
    steps: int = 0
    reason: str = ""

    def sites(self) -> set:
        return {v.site for v in self.violations}

    def first(self) -> Optional[Violation]:
        return self.violations[0] if self.violations else None


class _Stop(Exception):
    pass


def _signed(rel: str, x: int, y: int) -> bool:
    if rel in ("ult", "ule", "ugt", "uge"):
        x &= U64
        y &= U64
    else:
        x = _s64(x)
        y = _s64(y)
    return {
        "eq": x == y,
        "ne": x != y,
        "slt": x < y,
        "ult": x < y,
        "sle": x <= y,
        "ule": x <= y,
        "sgt": x > y,
        "ugt": x > y,
        "sge": x >= y,
        "uge": x >= y,
    }[rel]


def _intop(op: str, x: int, y: int) -> int:
    if op == "add":
        return _s64(x + y)
    if op == "sub":
        return _s64(x - y)
    if op == "mul":
        return _s64(x * y)
    if op in ("sdiv", "srem"):
        if y == 0:
            raise _Stop("division by zero")
        q = abs(x) // abs(y)
        if (x < 0) != (y < 0):
            q = -q
        return _s64(q) if op == "sdiv" else _s64(x - y * q)
    if op == "and":
        return _s64(x & y)
    if op == "or":
        return _s64(x | y)
    if op == "xor":
        return _s64(x ^ y)
    if op == "shl":
        return _s64(x << (y & 63))
    if op == "lshr":
        return _s64((x & U64) >> (y & 63))
    if op == "ashr":
        return _s64(x) >> (y & 63)
    raise ValueError(op)


_PURE = {"abs": lambda a: _s64(abs(a[0])), "min": min, "max": max, "sink_i64": lambda a: 0}


class BoundsOracle:
    """Runs one program on one input and collects based-on violations."""

    def __init__(self, program: Program, step_budget: int = 10**7, max_depth: int = 512):
        self.p = program
        self.fns = program.function_map()
        self.step_budget = step_budget
        self.max_depth = max_depth
        self.mem: dict[int, int] = {}  # sparse bytes
        self.shadow: dict[int, tuple[int, int]] = {}  # addr -> (stored value, instance id)
        self.instances: list[Instance] = []
        self.violations: list[Violation] = []
        self.output: list[int] = []
        self.steps = 0
        self.globals: dict[str, tuple[int, int]] = {}
        for g in program.globals:
            inst = self._new(("@", g.name), g.size)
            for i, b in enumerate(g.initial or b""):
                self.mem[inst.base + i] = b
            self.globals[g.name] = (inst.base, inst.ident)

    def _new(self, site, size: int) -> Instance:
        ident = len(self.instances)
        inst = Instance(ident, site, (ident + 1) * WINDOW, size)
        self.instances.append(inst)
        return inst

    # -- memory ----------------------------------------------------------------

    def _check(self, addr: int, prov: Optional[int], width: int, op: str, fn: str) -> None:
        if prov is None:
            return
        inst = self.instances[prov]
        off = addr - inst.base
        if not inst.alive:
            self.violations.append(Violation(inst.site, DEAD, off, width, op, self.steps, fn))
        elif off < 0 or off + width > inst.size:
            self.violations.append(Violation(inst.site, OOB, off, width, op, self.steps, fn))

    def _read(self, addr: int, width: int) -> int:
        return int.from_bytes(bytes(self.mem.get((addr + i) & U64, 0) for i in range(width)), "little")

    def _write(self, addr: int, width: int, value: int) -> None:
        for i, b in enumerate((value & ((1 << (8 * width)) - 1)).to_bytes(width, "little")):
            self.mem[(addr + i) & U64] = b
        for a in range(addr - 7, addr + width):
            self.shadow.pop(a & U64, None)

    # -- execution -------------------------------------------------------------

    def run(self, args) -> OracleReport:
        entry = self.fns[self.p.entry]
        try:
            value = self._call(entry, [(_s64(a), None) for a in args], 0)
            return OracleReport("finished", value[0], self.output, self.violations, self.steps)
        except _Stop as e:
            status = "exhausted" if str(e) == "step budget" else "stopped"
            return OracleReport(status, None, self.output, self.violations, self.steps, str(e))

    def _call(self, fn, args: list, depth: int):
        if depth >= self.max_depth:
            raise _Stop("call depth")
        env: dict[str, tuple[int, Optional[int]]] = {p.name: a for p, a in zip(fn.params, args)}
        owned: list[Instance] = []
        blocks = {b.label: b for b in fn.blocks}
        block = fn.blocks[0]
        pred = None

        def val(op):
            if is_local(op):
                return env[op]
            if is_global(op):
                return self.globals[op[1:]]
            return (op, None)

        try:
            while True:
                if block.phis:
                    incoming = []
                    for phi in block.phis:
                        for lbl, v in phi.incoming:
                            if lbl == pred:
                                incoming.append((phi.result, val(v)))
                                break
                    env.update(incoming)
                for ins in block.body:
                    self.steps += 1
                    if self.steps > self.step_budget:
                        raise _Stop("step budget")
                    self._exec(ins, env, val, owned, fn.name, depth)
                self.steps += 1
                if self.steps > self.step_budget:
                    raise _Stop("step budget")
                t = block.terminator
                pred = block.label
                if isinstance(t, Branch):
                    block = blocks[t.target]
                elif isinstance(t, CondBranch):
                    block = blocks[t.if_true if val(t.cond)[0] != 0 else t.if_false]
                else:
                    return val(t.value) if t.value is not None else (0, None)
        finally:
            for inst in owned:
                inst.alive = False

    def _exec(self, ins, env, val, owned, fname: str, depth: int) -> None:
        if isinstance(ins, Load):
            p, prov = val(ins.addr)
            addr = (p + ins.offset) & U64
            self._check(addr, prov, ins.width, "load", fname)
            raw = self._read(addr, ins.width)
            if ins.kind == INT:
                env[ins.result] = (_s64(raw) if ins.width == 8 else raw, None)
            else:
                sh = self.shadow.get(addr)
                env[ins.result] = (raw, sh[1] if sh is not None and sh[0] == raw else None)
        elif isinstance(ins, Store):
            p, prov = val(ins.addr)
            addr = (p + ins.offset) & U64
            self._check(addr, prov, ins.width, "store", fname)
            v, vprov = val(ins.value)
            self._write(addr, ins.width, v)
            if ins.kind != INT and vprov is not None:
                self.shadow[addr] = (v & U64, vprov)
        elif isinstance(ins, Gep):
            b, prov = val(ins.base)
            i = val(ins.index)[0]
            env[ins.result] = ((b + i * ins.scale + ins.offset) & U64, prov)
        elif isinstance(ins, Alloca):
            if ins.is_dynamic:
                size = val(ins.size)[0] * ins.elem_size
                if size < 0:
                    raise _Stop("negative allocation")
            else:
                size = ins.static_bytes
            inst = self._new((fname, ins.result), size)
            for a in range(inst.base, inst.base + size):
                self.mem.pop(a, None)
            owned.append(inst)
            env[ins.result] = (inst.base, inst.ident)
        elif isinstance(ins, IntOp):
            env[ins.result] = (_intop(ins.op, val(ins.lhs)[0], val(ins.rhs)[0]), None)
        elif isinstance(ins, Cmp):
            env[ins.result] = (1 if _signed(ins.relation, val(ins.lhs)[0], val(ins.rhs)[0]) else 0, None)
        elif isinstance(ins, Const):
            env[ins.result] = ((ins.value & U64) if ins.kind != INT else _s64(ins.value), None)
        elif isinstance(ins, PtrToInt):
            env[ins.result] = (_s64(val(ins.value)[0]), None)
        elif isinstance(ins, IntToPtr):
            env[ins.result] = (val(ins.value)[0] & U64, None)
        elif isinstance(ins, Output):
            self.output.append(val(ins.value)[0])
        elif isinstance(ins, Call):
            args = [val(a) for a in ins.args]
            callee = self.fns.get(ins.callee)
            if callee is None:
                if ins.callee not in _PURE:
                    raise _Stop(f"unknown extern @{ins.callee}")
                r = (_PURE[ins.callee]([a[0] for a in args]), None)
            else:
                r = self._call(callee, args, depth + 1)
            if ins.result is not None:
                env[ins.result] = r
        else:
            raise _Stop(f"oracle cannot execute {type(ins).__name__}")


def run_oracle(program: Program, args, step_budget: int = 10**7) -> OracleReport:
    if program.is_instrumented():
        raise ValueError("the oracle runs the original, uninstrumented program")
    return BoundsOracle(program, step_budget).run(args)
