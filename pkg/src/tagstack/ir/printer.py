"""Canonical text form of a Program."""

from __future__ import annotations

from .nodes import (
    INT,
    WIDTH_NAMES,
    Alloca,
    Branch,
    Call,
    ClearTopTagBit,
    Cmp,
    CondBranch,
    Const,
    Function,
    Gep,
    IntOp,
    IntToPtr,
    KeepTag,
    Load,
    MemGuard,
    Output,
    Phi,
    Program,
    PtrToInt,
    RetagFrame,
    Return,
    SetTag,
    Store,
    TagPtr,
    TfpLoad,
)


def _op(v) -> str:
    return str(v)


def _addr(base, offset: int) -> str:
    sign = "-" if offset < 0 else "+"
    return f"[{_op(base)} {sign} {abs(offset)}]"


def format_instruction(ins) -> str:
    if isinstance(ins, Phi):
        inc = ", ".join(f"[{lbl}: {_op(v)}]" for lbl, v in ins.incoming)
        return f"{ins.result} = phi {ins.kind} {inc}"
    if isinstance(ins, Alloca):
        text = f"{ins.result} = alloca {_op(ins.size)}"
        if ins.elem_size != 1:
            text += f" x {ins.elem_size}"
        if ins.tagged:
            text += " tagged"
        if ins.implicit:
            text += " implicit"
        if ins.at is not None:
            text += f" at {ins.at}"
        return text
    if isinstance(ins, Load):
        return f"{ins.result} = load.{WIDTH_NAMES[(ins.width, ins.kind)]} {_addr(ins.addr, ins.offset)}"
    if isinstance(ins, Store):
        return f"store.{WIDTH_NAMES[(ins.width, ins.kind)]} {_addr(ins.addr, ins.offset)} = {_op(ins.value)}"
    if isinstance(ins, Gep):
        return f"{ins.result} = gep {_op(ins.base)}, {_op(ins.index)}, scale {ins.scale}, off {ins.offset}"
    if isinstance(ins, Call):
        call = f"call @{ins.callee}({', '.join(_op(a) for a in ins.args)})"
        return call if ins.result is None else f"{ins.result} = {call}"
    if isinstance(ins, IntToPtr):
        return f"{ins.result} = inttoptr {_op(ins.value)}"
    if isinstance(ins, PtrToInt):
        return f"{ins.result} = ptrtoint {_op(ins.value)}"
    if isinstance(ins, ClearTopTagBit):
        return f"{ins.result} = cleartag {_op(ins.value)}"
    if isinstance(ins, IntOp):
        return f"{ins.result} = {ins.op} {_op(ins.lhs)}, {_op(ins.rhs)}"
    if isinstance(ins, Cmp):
        return f"{ins.result} = cmp {ins.relation} {_op(ins.lhs)}, {_op(ins.rhs)}"
    if isinstance(ins, Const):
        if ins.kind == INT:
            return f"{ins.result} = const {ins.value}"
        if ins.value == 0:
            return f"{ins.result} = const null"
        return f"{ins.result} = const ptr {ins.value:#x}"
    if isinstance(ins, Output):
        return f"output {_op(ins.value)}"
    if isinstance(ins, SetTag):
        return f"settag {_op(ins.addr)}, {_op(ins.size)}"
    if isinstance(ins, TagPtr):
        return f"{ins.result} = tagptr {_op(ins.base)}, {ins.tag:#06b}"
    if isinstance(ins, TfpLoad):
        return f"{ins.result} = tfpload {_op(ins.value)}, {_addr(ins.addr, ins.offset)}"
    if isinstance(ins, KeepTag):
        return f"{ins.result} = keeptag {_op(ins.value)}, {_op(ins.source)}"
    if isinstance(ins, MemGuard):
        return f"{ins.result} = memguard {ins.size} at {ins.at}"
    if isinstance(ins, RetagFrame):
        return "retagframe"
    if isinstance(ins, Branch):
        return f"br {ins.target}"
    if isinstance(ins, CondBranch):
        return f"condbr {_op(ins.cond)}, {ins.if_true}, {ins.if_false}"
    if isinstance(ins, Return):
        return "ret" if ins.value is None else f"ret {_op(ins.value)}"
    raise TypeError(f"cannot print {ins!r}")


def format_function(fn: Function) -> str:
    params = ", ".join(f"{p.name}: {p.kind}" for p in fn.params)
    header = f"func @{fn.name}({params})"
    if fn.returns is not None:
        header += f" -> {fn.returns}"
    for attr in sorted(fn.attributes):
        header += f" {attr}"
    if fn.frame_size is not None:
        header += f" frame {fn.frame_size}"
    lines = [header + " {"]
    for block in fn.blocks:
        lines.append(f"{block.label}:")
        for ins in block.phis:
            lines.append("  " + format_instruction(ins))
        for ins in block.instructions():
            lines.append("  " + format_instruction(ins))
    lines.append("}")
    return "\n".join(lines)


def print_program(p: Program) -> str:
    out = []
    if p.entry != "main":
        out.append(f"entry @{p.entry}")
    for g in p.globals:
        text = f"global @{g.name} {g.size}"
        if g.initial is not None:
            text += f' = x"{g.initial.hex()}"'
        out.append(text)
    for e in p.externs:
        params = list(e.params) + (["..."] if e.varargs else [])
        text = f"extern @{e.name}({', '.join(params)})"
        if e.returns is not None:
            text += f" -> {e.returns}"
        out.append(text)
    head = "\n".join(out) + "\n\n" if out else ""
    return head + "\n\n".join(format_function(f) for f in p.functions) + "\n"

