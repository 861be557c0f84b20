"""Data types for the SSA intermediate representation.

Operands are plain values: ``"%name"`` for SSA locals, ``"@name"`` for
global addresses and Python ``int`` for integer literals.  Every
instruction is a frozen dataclass so programs compare structurally.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Iterator, Optional, Union

Operand = Union[str, int]

INT = "i64"
PTR = "ptr"
VALUE_KINDS = (INT, PTR)

# memory access type name -> (width in bytes, kind of the SSA value)
MEM_TYPES = {
    "i8": (1, INT),
    "i16": (2, INT),
    "i32": (4, INT),
    "i64": (8, INT),
    "ptr": (8, PTR),
}
WIDTH_NAMES = {(1, INT): "i8", (2, INT): "i16", (4, INT): "i32", (8, INT): "i64", (8, PTR): "ptr"}

INT_OPS = ("add", "sub", "mul", "sdiv", "srem", "and", "or", "xor", "shl", "lshr", "ashr")
CMP_RELATIONS = ("eq", "ne", "slt", "sle", "sgt", "sge", "ult", "ule", "ugt", "uge")

RESET_TAGS = "reset-tags"


def is_local(op: Operand) -> bool:
    return isinstance(op, str) and op.startswith("%")


def is_global(op: Operand) -> bool:
    return isinstance(op, str) and op.startswith("@")


@dataclass(frozen=True)
class Instruction:
    """Base class. ``result`` is ``None`` for instructions without a value."""

    def operands(self) -> tuple[Operand, ...]:
        return ()

    def defined(self) -> Optional[str]:
        return getattr(self, "result", None)

    def replace_operands(self, mapping: dict) -> "Instruction":
        """Return a copy with local operands renamed through ``mapping``."""
        changes = {}
        for f in fields(self):
            if f.name in ("result", "callee"):
                continue
            value = getattr(self, f.name)
            if isinstance(value, str) and value in mapping:
                changes[f.name] = mapping[value]
            elif isinstance(value, tuple) and any(isinstance(v, str) and v in mapping for v in value):
                changes[f.name] = tuple(mapping.get(v, v) if isinstance(v, str) else v for v in value)
        if not changes:
            return self
        return type(self)(**{**{f.name: getattr(self, f.name) for f in fields(self)}, **changes})


@dataclass(frozen=True)
class Alloca(Instruction):
    """Stack allocation of ``size`` * ``elem_size`` bytes.

    ``size`` is a literal for static allocations and an SSA operand for
    dynamically sized ones.  ``tagged``, ``implicit`` and ``at`` only appear
    in instrumented programs: they mark padded/aligned slots, direct
    frame-slot accesses and the fixed offset of the allocation in the frame.
    """

    result: str
    size: Operand
    elem_size: int = 1
    tagged: bool = False
    implicit: bool = False
    at: Optional[int] = None

    def operands(self):
        return (self.size,) if isinstance(self.size, str) else ()

    @property
    def is_dynamic(self) -> bool:
        return not isinstance(self.size, int)

    @property
    def static_bytes(self) -> Optional[int]:
        return None if self.is_dynamic else self.size * self.elem_size


@dataclass(frozen=True)
class Load(Instruction):
    result: str
    addr: Operand
    offset: int
    width: int
    kind: str

    def operands(self):
        return (self.addr,)


@dataclass(frozen=True)
class Store(Instruction):
    addr: Operand
    offset: int
    width: int
    kind: str
    value: Operand

    def operands(self):
        return (self.addr, self.value)


@dataclass(frozen=True)
class Gep(Instruction):
    """``result = base + index * scale + offset`` (bytes)."""

    result: str
    base: Operand
    index: Operand
    scale: int
    offset: int

    def operands(self):
        return (self.base, self.index)


@dataclass(frozen=True)
class Call(Instruction):
    result: Optional[str]
    callee: str
    args: tuple[Operand, ...]

    def operands(self):
        return self.args


@dataclass(frozen=True)
class IntToPtr(Instruction):
    result: str
    value: Operand

    def operands(self):
        return (self.value,)


@dataclass(frozen=True)
class PtrToInt(Instruction):
    result: str
    value: Operand

    def operands(self):
        return (self.value,)


@dataclass(frozen=True)
class IntOp(Instruction):
    result: str
    op: str
    lhs: Operand
    rhs: Operand

    def operands(self):
        return (self.lhs, self.rhs)


@dataclass(frozen=True)
class Cmp(Instruction):
    result: str
    relation: str
    lhs: Operand
    rhs: Operand

    def operands(self):
        return (self.lhs, self.rhs)


@dataclass(frozen=True)
class Const(Instruction):
    """``kind`` is ``i64`` for integers and ``ptr`` for pointer literals (``null``)."""

    result: str
    value: int
    kind: str = INT


@dataclass(frozen=True)
class Output(Instruction):
    value: Operand

    def operands(self):
        return (self.value,)


# -- instrumentation-only operations -----------------------------------------


@dataclass(frozen=True)
class SetTag(Instruction):
    """Write the address tag of ``addr`` to every granule of ``[addr, addr+size)``."""

    addr: Operand
    size: Operand

    def operands(self):
        return (self.addr, self.size)


@dataclass(frozen=True)
class TagPtr(Instruction):
    result: str
    base: Operand
    tag: int

    def operands(self):
        return (self.base,)


@dataclass(frozen=True)
class ClearTopTagBit(Instruction):
    result: str
    value: Operand

    def operands(self):
        return (self.value,)


@dataclass(frozen=True)
class TfpLoad(Instruction):
    """Pass ``value`` through if the granule at ``addr+offset`` is pointer-safe, else clear its top tag bit."""

    result: str
    value: Operand
    addr: Operand
    offset: int

    def operands(self):
        return (self.value, self.addr)


@dataclass(frozen=True)
class KeepTag(Instruction):
    """``value`` with its address tag replaced by the address tag of ``source``."""

    result: str
    value: Operand
    source: Operand

    def operands(self):
        return (self.value, self.source)


@dataclass(frozen=True)
class MemGuard(Instruction):
    result: str
    size: int
    at: int


@dataclass(frozen=True)
class RetagFrame(Instruction):
    pass


INSTRUMENTATION_OPS = (SetTag, TagPtr, ClearTopTagBit, TfpLoad, KeepTag, MemGuard, RetagFrame)


# -- control flow -------------------------------------------------------------


@dataclass(frozen=True)
class Phi:
    result: str
    kind: str
    incoming: tuple[tuple[str, Operand], ...]  # (predecessor label, value)

    def operands(self):
        return tuple(v for _, v in self.incoming)

    def defined(self):
        return self.result

    def replace_operands(self, mapping: dict) -> "Phi":
        inc = tuple((lbl, mapping.get(v, v) if isinstance(v, str) else v) for lbl, v in self.incoming)
        return self if inc == self.incoming else Phi(self.result, self.kind, inc)


@dataclass(frozen=True)
class Branch:
    target: str

    def operands(self):
        return ()

    def successors(self):
        return (self.target,)

    def replace_operands(self, mapping):
        return self


@dataclass(frozen=True)
class CondBranch:
    cond: Operand
    if_true: str
    if_false: str

    def operands(self):
        return (self.cond,)

    def successors(self):
        return (self.if_true, self.if_false)

    def replace_operands(self, mapping):
        if isinstance(self.cond, str) and self.cond in mapping:
            return CondBranch(mapping[self.cond], self.if_true, self.if_false)
        return self


@dataclass(frozen=True)
class Return:
    value: Optional[Operand] = None

    def operands(self):
        return () if self.value is None else (self.value,)

    def successors(self):
        return ()

    def replace_operands(self, mapping):
        if isinstance(self.value, str) and self.value in mapping:
            return Return(mapping[self.value])
        return self


Terminator = Union[Branch, CondBranch, Return]


@dataclass(frozen=True)
class BasicBlock:
    label: str
    phis: tuple[Phi, ...] = ()
    body: tuple[Instruction, ...] = ()
    terminator: Optional[Terminator] = None

    def instructions(self) -> Iterator:
        """Body instructions followed by the terminator (phis excluded)."""
        yield from self.body
        if self.terminator is not None:
            yield self.terminator


@dataclass(frozen=True)
class Param:
    name: str
    kind: str


@dataclass(frozen=True)
class Function:
    name: str
    params: tuple[Param, ...]
    blocks: tuple[BasicBlock, ...]
    returns: Optional[str] = None
    attributes: frozenset = frozenset()
    frame_size: Optional[int] = None

    @property
    def entry(self) -> BasicBlock:
        return self.blocks[0]

    def block(self, label: str) -> BasicBlock:
        for b in self.blocks:
            if b.label == label:
                return b
        raise KeyError(label)

    def flat(self) -> list:
        """Body instructions and terminators in block order; the breakpoint index space."""
        return [ins for b in self.blocks for ins in b.instructions()]

    def predecessors(self) -> dict[str, list[str]]:
        preds: dict[str, list[str]] = {b.label: [] for b in self.blocks}
        for b in self.blocks:
            if b.terminator is None:
                continue
            for s in b.terminator.successors():
                if s in preds and b.label not in preds[s]:
                    preds[s].append(b.label)
        return preds

    def definitions(self) -> dict[str, object]:
        defs: dict[str, object] = {p.name: p for p in self.params}
        for b in self.blocks:
            for phi in b.phis:
                defs[phi.result] = phi
            for ins in b.body:
                d = ins.defined()
                if d is not None:
                    defs[d] = ins
        return defs

    def is_instrumented(self) -> bool:
        return self.frame_size is not None or any(
            isinstance(ins, INSTRUMENTATION_OPS) or (isinstance(ins, Alloca) and (ins.tagged or ins.at is not None))
            for b in self.blocks
            for ins in b.body
        )


@dataclass(frozen=True)
class Extern:
    """Declaration of a function defined outside the program."""

    name: str
    params: tuple[str, ...]
    returns: Optional[str] = None
    varargs: bool = False


@dataclass(frozen=True)
class GlobalDef:
    name: str
    size: int
    initial: Optional[bytes] = None


@dataclass(frozen=True)
class Program:
    globals: tuple[GlobalDef, ...] = ()
    functions: tuple[Function, ...] = ()
    externs: tuple[Extern, ...] = ()
    entry: str = "main"

    def function(self, name: str) -> Function:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)

    def function_map(self) -> dict[str, Function]:
        return {f.name: f for f in self.functions}

    def extern_map(self) -> dict[str, Extern]:
        return {e.name: e for e in self.externs}

    def global_map(self) -> dict[str, GlobalDef]:
        return {g.name: g for g in self.globals}

    def is_instrumented(self) -> bool:
        return any(f.is_instrumented() for f in self.functions)


@dataclass
class Diagnostic:
    severity: str
    message: str
    function: Optional[str] = None
    block: Optional[str] = None
    index: Optional[int] = None
    line: Optional[int] = None
    column: Optional[int] = None

    def __str__(self) -> str:
        where = []
        if self.line is not None:
            where.append(f"{self.line}:{self.column or 1}")
        if self.function is not None:
            loc = f"@{self.function}"
            if self.block is not None:
                loc += f"/{self.block}"
            if self.index is not None:
                loc += f"#{self.index}"
            where.append(loc)
        prefix = " ".join(where)
        return f"{self.severity}: {prefix + ': ' if prefix else ''}{self.message}"


class IRError(Exception):
    """Raised when IR text cannot be turned into a valid Program."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))

