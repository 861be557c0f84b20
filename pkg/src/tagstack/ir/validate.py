"""Structural validation: SSA dominance, terminators, phi edges, operand kinds."""

from __future__ import annotations

from typing import Optional

from .nodes import (
    INT,
    MEM_TYPES,
    PTR,
    Alloca,
    Call,
    ClearTopTagBit,
    Cmp,
    CondBranch,
    Const,
    Diagnostic,
    Function,
    Gep,
    IntOp,
    IntToPtr,
    KeepTag,
    Load,
    MemGuard,
    Program,
    PtrToInt,
    Return,
    SetTag,
    Store,
    TagPtr,
    TfpLoad,
    is_global,
    is_local,
)

_I64_MIN, _I64_MAX = -(2**63), 2**63 - 1


def reachable_blocks(fn: Function) -> list[str]:
    labels = {b.label for b in fn.blocks}
    seen: list[str] = []
    stack = [fn.blocks[0].label] if fn.blocks else []
    while stack:
        lbl = stack.pop()
        if lbl in seen or lbl not in labels:
            continue
        seen.append(lbl)
        term = fn.block(lbl).terminator
        if term is not None:
            stack.extend(reversed(term.successors()))
    return seen


def dominators(fn: Function) -> dict[str, set[str]]:
    """Dominator sets of the reachable blocks (iterative data-flow)."""
    order = reachable_blocks(fn)
    if not order:
        return {}
    preds = fn.predecessors()
    entry = order[0]
    dom = {lbl: set(order) for lbl in order}
    dom[entry] = {entry}
    changed = True
    while changed:
        changed = False
        for lbl in order[1:]:
            ps = [p for p in preds[lbl] if p in dom]
            new = set.intersection(*(dom[p] for p in ps)) if ps else set()
            new = new | {lbl}
            if new != dom[lbl]:
                dom[lbl] = new
                changed = True
    return dom


def value_kinds(fn: Function, program: Optional[Program] = None) -> dict[str, str]:
    """Kind (``i64``/``ptr``) of every SSA value defined in ``fn``."""
    kinds = {p.name: p.kind for p in fn.params}
    funcs = program.function_map() if program else {}
    externs = program.extern_map() if program else {}
    for b in fn.blocks:
        for phi in b.phis:
            kinds[phi.result] = phi.kind
        for ins in b.body:
            res = ins.defined()
            if res is None:
                continue
            if isinstance(ins, (Alloca, Gep, IntToPtr, ClearTopTagBit, TfpLoad, KeepTag, TagPtr, MemGuard)):
                kinds[res] = PTR
            elif isinstance(ins, Load):
                kinds[res] = ins.kind
            elif isinstance(ins, Const):
                kinds[res] = ins.kind
            elif isinstance(ins, Call):
                target = funcs.get(ins.callee) or externs.get(ins.callee)
                kinds[res] = (target.returns if target is not None else None) or INT
            else:
                kinds[res] = INT
    return kinds


class _Checker:
    def __init__(self, program: Program):
        self.program = program
        self.diags: list[Diagnostic] = []
        self.funcs = program.function_map()
        self.externs = program.extern_map()
        self.globals = program.global_map()

    def error(self, msg, fn=None, block=None, index=None):
        self.diags.append(Diagnostic("error", msg, fn, block, index))

    def run(self) -> list[Diagnostic]:
        p = self.program
        seen: set[str] = set()
        for f in p.functions:
            if f.name in seen:
                self.error(f"duplicate function @{f.name}", f.name)
            seen.add(f.name)
        for e in p.externs:
            if e.name in seen:
                self.error(f"duplicate function @{e.name}")
            seen.add(e.name)
        gseen: set[str] = set()
        for g in p.globals:
            if g.name in gseen:
                self.error(f"duplicate global @{g.name}")
            gseen.add(g.name)
            if g.size < 1:
                self.error(f"global @{g.name} must have size >= 1")
            if g.initial is not None and len(g.initial) > g.size:
                self.error(f"initializer of @{g.name} is longer than its size")
        if p.entry not in self.funcs:
            self.error(f"entry function @{p.entry} is not defined")
        else:
            entry = self.funcs[p.entry]
            if any(prm.kind != INT for prm in entry.params):
                self.error(f"entry function @{p.entry} may only take i64 parameters", p.entry)
        for f in p.functions:
            self.check_function(f)
        return self.diags

    def check_function(self, fn: Function) -> None:
        name = fn.name
        if not fn.blocks:
            self.error("function has no blocks", name)
            return
        labels = [b.label for b in fn.blocks]
        if len(set(labels)) != len(labels):
            self.error("duplicate block labels", name)
        preds = fn.predecessors()
        for b in fn.blocks:
            if b.terminator is None:
                self.error(f"block {b.label!r} does not end in a terminator", name, b.label)
                continue
            for s in b.terminator.successors():
                if s not in labels:
                    self.error(f"branch to unknown block {s!r}", name, b.label)
            if isinstance(b.terminator, Return):
                if (b.terminator.value is None) != (fn.returns is None):
                    self.error("return value does not match the function signature", name, b.label)
        if preds.get(fn.blocks[0].label):
            self.error("entry block must not have predecessors", name, fn.blocks[0].label)

        # single definition
        defined: dict[str, tuple[str, int]] = {}
        for prm in fn.params:
            if prm.name in defined:
                self.error(f"duplicate parameter {prm.name}", name)
            defined[prm.name] = ("", -1)
        for b in fn.blocks:
            for i, ins in enumerate(list(b.phis) + list(b.body)):
                d = ins.defined()
                if d is None:
                    continue
                if d in defined:
                    self.error(f"{d} is defined more than once", name, b.label, i)
                else:
                    defined[d] = (b.label, i)

        kinds = value_kinds(fn, self.program)
        dom = dominators(fn)
        reach = set(dom)
        for b in fn.blocks:
            if b.label not in reach:
                self.diags.append(Diagnostic("warning", f"block {b.label!r} is unreachable", name, b.label))

        def dominated(def_site, use_block, use_index) -> bool:
            dblock, didx = def_site
            if dblock == "":
                return True
            if use_block not in reach:
                return True
            if dblock not in reach:
                return False
            if dblock == use_block:
                return didx < use_index
            return dblock in dom[use_block]

        for b in fn.blocks:
            for i, phi in enumerate(b.phis):
                inc_labels = [lbl for lbl, _ in phi.incoming]
                if sorted(inc_labels) != sorted(preds[b.label]) or len(set(inc_labels)) != len(inc_labels):
                    self.error(
                        f"phi {phi.result} incoming edges {sorted(inc_labels)} do not match predecessors {sorted(preds[b.label])}",
                        name,
                        b.label,
                        i,
                    )
                for lbl, v in phi.incoming:
                    self.check_operand(v, phi.kind, name, b.label, i, kinds)
                    if is_local(v) and v in defined and lbl in reach:
                        # the value must be available at the end of the incoming block
                        blk = fn.block(lbl) if lbl in labels else None
                        end = len(blk.phis) + len(blk.body) if blk else 0
                        if not dominated(defined[v], lbl, end + 1):
                            self.error(f"use before def: {v} does not dominate edge from {lbl!r}", name, b.label, i)
            base = len(b.phis)
            seq = list(b.body) + ([b.terminator] if b.terminator is not None else [])
            for j, ins in enumerate(seq):
                idx = base + j
                for v in ins.operands():
                    if is_local(v):
                        if v not in defined:
                            self.error(f"unknown value {v}", name, b.label, idx)
                        elif not dominated(defined[v], b.label, idx):
                            self.error(f"use before def: {v}", name, b.label, idx)
                    elif is_global(v) and v[1:] not in self.globals:
                        self.error(f"unknown global {v}", name, b.label, idx)
                self.check_kinds(ins, fn, kinds, b.label, idx)

    def check_operand(self, v, want, fn, block, idx, kinds) -> None:
        if isinstance(v, int):
            if want != INT:
                self.error(f"integer literal {v} used where {want} is required", fn, block, idx)
            return
        have = PTR if is_global(v) else kinds.get(v)
        if have is not None and have != want:
            self.error(f"{v} has kind {have}, expected {want}", fn, block, idx)

    def check_kinds(self, ins, fn: Function, kinds, block, idx) -> None:
        name = fn.name
        chk = lambda v, k: self.check_operand(v, k, name, block, idx, kinds)  # noqa: E731
        if isinstance(ins, Alloca):
            if ins.elem_size < 1:
                self.error("alloca element size must be >= 1", name, block, idx)
            if isinstance(ins.size, int):
                if ins.size < 1:
                    self.error("alloca size must be >= 1", name, block, idx)
            else:
                chk(ins.size, INT)
        elif isinstance(ins, (Load, Store)):
            if MEM_TYPES.get({1: "i8", 2: "i16", 4: "i32", 8: "ptr" if ins.kind == PTR else "i64"}.get(ins.width, "")) != (
                ins.width,
                ins.kind,
            ):
                self.error(f"invalid access width {ins.width} for kind {ins.kind}", name, block, idx)
            chk(ins.addr, PTR)
            if isinstance(ins, Store):
                if ins.kind == PTR and isinstance(ins.value, int):
                    self.error("pointer store needs a pointer value", name, block, idx)
                else:
                    chk(ins.value, ins.kind)
        elif isinstance(ins, Gep):
            chk(ins.base, PTR)
            chk(ins.index, INT)
            for v in (ins.scale, ins.offset) + ((ins.index,) if isinstance(ins.index, int) else ()):
                if not (_I64_MIN <= v <= _I64_MAX):
                    self.error("gep constant does not fit in 64 bits", name, block, idx)
        elif isinstance(ins, Call):
            target = self.funcs.get(ins.callee)
            if target is not None:
                pk = [p.kind for p in target.params]
                varargs = False
            elif ins.callee in self.externs:
                ext = self.externs[ins.callee]
                pk, varargs = list(ext.params), ext.varargs
                target = ext
            else:
                self.error(f"unknown function @{ins.callee}", name, block, idx)
                return
            if len(ins.args) < len(pk) or (len(ins.args) > len(pk) and not varargs):
                self.error(f"@{ins.callee} expects {len(pk)} arguments, got {len(ins.args)}", name, block, idx)
            for a, k in zip(ins.args, pk):
                chk(a, k)
            if ins.result is not None and target.returns is None:
                self.error(f"@{ins.callee} does not return a value", name, block, idx)
        elif isinstance(ins, IntToPtr):
            chk(ins.value, INT)
        elif isinstance(ins, (PtrToInt, ClearTopTagBit)):
            chk(ins.value, PTR)
        elif isinstance(ins, IntOp):
            chk(ins.lhs, INT)
            chk(ins.rhs, INT)
        elif isinstance(ins, Cmp):
            lk = INT if isinstance(ins.lhs, int) else (PTR if is_global(ins.lhs) else kinds.get(ins.lhs, INT))
            chk(ins.lhs, lk)
            chk(ins.rhs, lk)
        elif isinstance(ins, SetTag):
            chk(ins.addr, PTR)
            chk(ins.size, INT)
        elif isinstance(ins, TagPtr):
            chk(ins.base, PTR)
            if not 0 <= ins.tag <= 15:
                self.error("tag must be a 4-bit value", name, block, idx)
        elif isinstance(ins, TfpLoad):
            chk(ins.value, PTR)
            chk(ins.addr, PTR)
        elif isinstance(ins, KeepTag):
            chk(ins.value, PTR)
            chk(ins.source, PTR)
        elif isinstance(ins, MemGuard):
            if ins.size < 16 or ins.size % 16:
                self.error("memguard size must be a positive multiple of 16", name, block, idx)
        elif isinstance(ins, CondBranch):
            chk(ins.cond, INT)
        elif isinstance(ins, Return):
            if ins.value is not None and fn.returns is not None:
                chk(ins.value, fn.returns)


def validate(p: Program) -> list[Diagnostic]:
    """All structural problems of ``p``; empty when the program is well formed."""
    return _Checker(p).run()
