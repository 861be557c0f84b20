"""Intraprocedural use-chain walk producing one UseInfo per pointer base."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from ..ir.nodes import (
    PTR,
    Alloca,
    Call,
    ClearTopTagBit,
    Cmp,
    Const,
    Function,
    Gep,
    IntOp,
    KeepTag,
    Load,
    Output,
    Param,
    Phi,
    Program,
    Return,
    Store,
    TagPtr,
    TfpLoad,
    is_global,
    is_local,
)
from ..ir.validate import dominators
from .ranges import FULL, ByteRange
from .useinfo import Key, LinearAccessInfo, UseInfo

DEFAULT_PURE_EXTERNS = frozenset({"abs", "min", "max", "sink_i64"})
MUTATIONS = ("trust-unknown-index",)


@dataclass(frozen=True)
class Induction:
    """A header phi ``i = phi [pre: init], [latch: i + inc]``."""

    phi: str
    init: int
    inc: int
    header: str
    latch: str


@dataclass(frozen=True)
class Linear:
    """Offset ``start + k * step`` on the k-th iteration of the loop at ``header``."""

    start: int
    step: int
    header: str
    latch: str

    def shifted(self, delta: int) -> "Linear":
        return Linear(self.start + delta, self.step, self.header, self.latch)


Offset = Union[int, Linear]


class FunctionFacts:
    """Dominators, users, definitions and induction phis of one function."""

    def __init__(self, fn: Function):
        self.fn = fn
        self.defs = fn.definitions()
        self.dom = dominators(fn)
        self.users: dict[str, list[tuple[str, object]]] = {}
        self.block_of: dict[str, str] = {}
        for b in fn.blocks:
            for phi in b.phis:
                self.block_of[phi.result] = b.label
                for v in set(phi.operands()):
                    if is_local(v):
                        self.users.setdefault(v, []).append((b.label, phi))
            for ins in b.instructions():
                d = getattr(ins, "result", None)
                if d:
                    self.block_of[d] = b.label
                for v in dict.fromkeys(ins.operands()):
                    if is_local(v):
                        self.users.setdefault(v, []).append((b.label, ins))
        self._inductions: dict[str, Optional[Induction]] = {}

    def dominates(self, a: str, b: str) -> bool:
        return b in self.dom and a in self.dom[b]

    def const_value(self, v) -> Optional[int]:
        if isinstance(v, int):
            return v
        d = self.defs.get(v)
        if isinstance(d, Const) and d.kind != PTR:
            return d.value
        return None

    def induction(self, name: str) -> Optional[Induction]:
        if name not in self._inductions:
            self._inductions[name] = self._find_induction(name)
        return self._inductions[name]

    def _find_induction(self, name: str) -> Optional[Induction]:
        phi = self.defs.get(name)
        if not isinstance(phi, Phi) or len(phi.incoming) != 2:
            return None
        header = self.block_of[name]
        if header not in self.dom:
            return None
        entries = [(lbl, v) for lbl, v in phi.incoming if not self.dominates(header, lbl)]
        backs = [(lbl, v) for lbl, v in phi.incoming if self.dominates(header, lbl)]
        if len(entries) != 1 or len(backs) != 1:
            return None
        init = self.const_value(entries[0][1])
        latch, nxt = backs[0]
        step = self._increment(nxt, name)
        if init is None or not step:
            return None
        return Induction(name, init, step, header, latch)

    def _increment(self, v, phi: str) -> Optional[int]:
        d = self.defs.get(v) if is_local(v) else None
        if not isinstance(d, IntOp):
            return None
        if d.op == "add":
            if d.lhs == phi:
                return self.const_value(d.rhs)
            if d.rhs == phi:
                return self.const_value(d.lhs)
        if d.op == "sub" and d.lhs == phi:
            c = self.const_value(d.rhs)
            return None if c is None else -c
        return None

    def affine_index(self, v) -> Optional[tuple[Induction, int]]:
        """``(induction, shift)`` when ``v`` is an induction phi plus a constant."""
        if not is_local(v):
            return None
        ind = self.induction(v)
        if ind is not None:
            return ind, 0
        d = self.defs.get(v)
        if not isinstance(d, IntOp):
            return None
        pairs = ((d.lhs, d.rhs, 1), (d.rhs, d.lhs, 1)) if d.op == "add" else ((d.lhs, d.rhs, -1),) if d.op == "sub" else ()
        for a, b, sign in pairs:
            c = self.const_value(b)
            ind = self.induction(a) if is_local(a) else None
            if c is not None and ind is not None:
                return ind, sign * c
        return None


def detect_linear_access(
    facts: FunctionFacts, index, scale: int, base_offset: int, width: int
) -> Optional[LinearAccessInfo]:
    """Linear fact for an access through ``gep base, index, scale`` at ``base_offset``.

    A constant index yields a degenerate fact (no step); an induction index
    yields its start range and step in bytes; anything else yields ``None``.
    """
    c = facts.const_value(index)
    if c is not None:
        o = base_offset + c * scale
        r = ByteRange.span(o, o + width)
        return LinearAccessInfo(r, r, None, frozenset())
    aff = facts.affine_index(index)
    if aff is None:
        return None
    ind, shift = aff
    step = ind.inc * scale
    if step == 0:
        return None
    start = base_offset + (ind.init + shift) * scale
    return LinearAccessInfo(FULL, ByteRange.span(start, start + width), abs(step), frozenset({1 if step > 0 else -1}))


def pointer_roots(fn: Function, value, defs: Optional[dict] = None) -> set[tuple[str, str]]:
    """Backward walk from a pointer value to the bases it may derive from.

    Roots are ``("alloca"|"arg"|"load"|"global"|"opaque", name)``.
    """
    defs = fn.definitions() if defs is None else defs
    roots: set[tuple[str, str]] = set()
    seen: set = set()
    stack = [value]
    while stack:
        v = stack.pop()
        if v in seen:
            continue
        seen.add(v)
        if is_global(v):
            roots.add(("global", v[1:]))
            continue
        if not is_local(v):
            roots.add(("opaque", str(v)))
            continue
        d = defs.get(v)
        if isinstance(d, Alloca):
            roots.add(("alloca", v))
        elif isinstance(d, Param):
            roots.add(("arg", v))
        elif isinstance(d, Load):
            roots.add(("load", v))
        elif isinstance(d, Gep):
            stack.append(d.base)
        elif isinstance(d, Phi):
            stack.extend(d.operands())
        elif isinstance(d, (KeepTag, ClearTopTagBit, TfpLoad, TagPtr)):
            stack.append(d.operands()[0])
        else:
            roots.add(("opaque", v))
    return roots


def constant_offset(fn: Function, value, defs: Optional[dict] = None, facts: Optional[FunctionFacts] = None):
    """``(root, offset)`` when ``value`` is a single root plus a constant, else ``None``."""
    defs = fn.definitions() if defs is None else defs
    off = 0
    v = value
    for _ in range(10_000):
        if is_global(v):
            return ("global", v[1:]), off
        d = defs.get(v)
        if isinstance(d, Alloca):
            return ("alloca", v), off
        if isinstance(d, Param):
            return ("arg", v), off
        if isinstance(d, Load):
            return ("load", v), off
        if isinstance(d, Gep):
            c = facts.const_value(d.index) if facts else (d.index if isinstance(d.index, int) else None)
            if c is None:
                return None
            off += c * d.scale + d.offset
            v = d.base
            continue
        return None
    return None


class _Walker:
    def __init__(self, program: Program, fn: Function, facts: FunctionFacts, allowlist, mutation):
        self.program = program
        self.fn = fn
        self.facts = facts
        self.funcs = program.function_map()
        self.allowlist = allowlist
        self.mutation = mutation

    def walk(self, info: UseInfo, root: str) -> None:
        work: list[tuple[str, Offset]] = [(root, 0)]
        seen: dict[str, Offset] = {root: 0}
        while work and not info.unsafe:
            v, off = work.pop()
            for block, user in self.facts.users.get(v, ()):
                if info.unsafe:
                    return
                nxt = self.use(info, root, v, off, block, user)
                if nxt is None:
                    continue
                val, noff = nxt
                if val in seen:
                    if seen[val] != noff:
                        info.mark_unsafe(f"{val} reached at conflicting offsets")
                    continue
                seen[val] = noff
                work.append((val, noff))

    def use(self, info: UseInfo, root: str, v: str, off: Offset, block: str, ins):
        direct = v == root
        if isinstance(ins, Load):
            if not direct:
                info.direct_only = False
            self.access(info, off, ins.offset, ins.width, ins.kind, block)
            if ins.kind == PTR:
                info.derefed_by.add((self.fn.name, "load", ins.result))
            return None
        if isinstance(ins, Store):
            if ins.addr == v:
                if not direct:
                    info.direct_only = False
                self.access(info, off, ins.offset, ins.width, ins.kind, block)
            if ins.value == v:
                info.direct_only = False
                self.stored(info, off, ins)
            return None
        info.direct_only = False
        if isinstance(ins, Gep):
            return ins.result, self.gep_offset(info, off, ins)
        if isinstance(ins, Phi):
            return ins.result, off
        if isinstance(ins, Call):
            for i, a in enumerate(ins.args):
                if a == v:
                    self.call(info, off, ins, i)
            return None
        if isinstance(ins, Cmp):
            return None
        if isinstance(ins, Return):
            info.mark_unsafe("pointer returned")
            return None
        if isinstance(ins, Output):
            info.mark_unsafe("pointer written to output")
            return None
        info.mark_unsafe(f"{type(ins).__name__} use")
        return None

    def gep_offset(self, info: UseInfo, off: Offset, g: Gep):
        if info.unsafe:
            return 0
        c = self.facts.const_value(g.index)
        if c is not None:
            delta = c * g.scale + g.offset
            return off + delta if isinstance(off, int) else off.shifted(delta)
        aff = self.facts.affine_index(g.index)
        if aff is not None and isinstance(off, int):
            ind, shift = aff
            step = ind.inc * g.scale
            if step != 0:
                return Linear(off + (ind.init + shift) * g.scale + g.offset, step, ind.header, ind.latch)
        if self.mutation == "trust-unknown-index":
            return off + g.offset if isinstance(off, int) else off
        info.mark_unsafe(f"unknown index in {g.result}")
        return 0

    def access(self, info: UseInfo, off: Offset, disp: int, width: int, kind: str, block: str) -> None:
        if info.unsafe:
            return
        if isinstance(off, int):
            info.add_access(off + disp, width, kind)
            return
        f = self.facts
        if f.dominates(off.header, block) and f.dominates(block, off.latch):
            info.direct_only = False
            info.add_linear(off.start + disp, off.step, width, kind)
        else:
            info.mark_unsafe("stepped access not executed on every iteration")

    def stored(self, info: UseInfo, off: Offset, st: Store) -> None:
        if not isinstance(off, int):
            info.mark_unsafe("stepped pointer stored to memory")
            return
        site = constant_offset(self.fn, st.addr, self.facts.defs, self.facts)
        if site is not None and site[0][0] == "alloca":
            info.stored_in.add(((self.fn.name, "alloca", site[0][1]), off))
            return
        roots = pointer_roots(self.fn, st.addr, self.facts.defs)
        if any(r[0] == "global" for r in roots):
            info.pointer_unsafe = True
            info.mark_unsafe("pointer stored to global memory")
        else:
            info.mark_unsafe("pointer stored to untracked memory")

    def call(self, info: UseInfo, off: Offset, c: Call, index: int) -> None:
        if c.callee in self.funcs:
            if not isinstance(off, int):
                info.mark_unsafe("stepped pointer passed to a call")
            else:
                info.calls.add((c.callee, index, off))
        elif c.callee in self.allowlist:
            return
        else:
            info.mark_unsafe(f"escapes to external @{c.callee}")


def run_function_pass(
    program: Program,
    fn: Function,
    allowlist=DEFAULT_PURE_EXTERNS,
    mutation: Optional[str] = None,
    facts: Optional[FunctionFacts] = None,
) -> dict[Key, UseInfo]:
    """One UseInfo per alloca, pointer parameter and pointer-kind load of ``fn``."""
    facts = facts or FunctionFacts(fn)
    walker = _Walker(program, fn, facts, allowlist, mutation)
    table: dict[Key, UseInfo] = {}
    for p in fn.params:
        if p.kind == PTR:
            key = (fn.name, "arg", p.name)
            info = UseInfo(key)
            walker.walk(info, p.name)
            table[key] = info
    for b in fn.blocks:
        for ins in b.body:
            if isinstance(ins, Alloca):
                key = (fn.name, "alloca", ins.result)
                info = UseInfo(key, ins.static_bytes)
                if ins.is_dynamic:
                    info.mark_unsafe("dynamically sized")
                else:
                    walker.walk(info, ins.result)
                table[key] = info
            elif isinstance(ins, Load) and ins.kind == PTR:
                key = (fn.name, "load", ins.result)
                info = UseInfo(key)
                walker.walk(info, ins.result)
                table[key] = info
    return table
