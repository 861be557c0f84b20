"""Per-base-pointer analysis records and their merge operation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .ranges import EMPTY, FULL, ByteRange

# (function, "alloca" | "arg" | "load", SSA name)
Key = tuple[str, str, str]


@dataclass(frozen=True)
class LinearAccessInfo:
    """Facts about accesses whose offset advances by a fixed step per loop iteration.

    ``linear_range`` is empty when there is no linear access and full when
    the trip count is not bounded.  ``max_step`` is the largest step in bytes
    (``None`` when there is no stepped access).  ``directions`` holds the
    signs of the steps seen.
    """

    linear_range: ByteRange = EMPTY
    start_range: ByteRange = EMPTY
    max_step: Optional[int] = None
    directions: frozenset = frozenset()

    @property
    def present(self) -> bool:
        return not self.linear_range.is_empty

    def union(self, other: "LinearAccessInfo") -> "LinearAccessInfo":
        if not other.present:
            return self
        if not self.present:
            return other
        steps = [s for s in (self.max_step, other.max_step) if s is not None]
        return LinearAccessInfo(
            self.linear_range.union(other.linear_range),
            self.start_range.union(other.start_range),
            max(steps) if steps else None,
            self.directions | other.directions,
        )

    def shift(self, delta: int) -> "LinearAccessInfo":
        if not self.present or delta == 0:
            return self
        return LinearAccessInfo(self.linear_range.shift(delta), self.start_range.shift(delta), self.max_step, self.directions)

    def to_json(self):
        if not self.present:
            return None
        return {
            "range": self.linear_range.to_json(),
            "start": self.start_range.to_json(),
            "step": self.max_step,
            "directions": sorted(self.directions),
        }


NO_LINEAR = LinearAccessInfo()


@dataclass
class UseInfo:
    key: Key
    size: Optional[int] = None  # bytes, static allocas only
    range: ByteRange = EMPTY  # arbitrary (non-stepped) accesses
    data_range: ByteRange = EMPTY  # arbitrary accesses of integer kind
    ptr_slots: set = field(default_factory=set)  # offsets of 8-byte pointer-kind accesses
    ptr_imprecise: bool = False  # a pointer-kind access at a non-constant offset
    linear: LinearAccessInfo = NO_LINEAR
    linear_data: bool = False
    calls: set = field(default_factory=set)  # (callee, param index, offset)
    stored_in: set = field(default_factory=set)  # (storage site key, offset of the stored pointer)
    derefed_by: set = field(default_factory=set)  # keys of pointer loads reading this memory
    unsafe: bool = False
    pointer_unsafe: bool = False
    depth: int = 0
    direct_only: bool = True  # every use is a load/store directly through the base value
    reason: Optional[str] = None

    @property
    def function(self) -> str:
        return self.key[0]

    @property
    def kind(self) -> str:
        return self.key[1]

    @property
    def name(self) -> str:
        return self.key[2]

    def mark_unsafe(self, reason: str) -> bool:
        """Set the absorbing unsafe state; returns whether anything changed."""
        if self.unsafe:
            return False
        self.unsafe = True
        self.pointer_unsafe = True
        self.direct_only = False
        self.range = FULL
        self.calls = set()
        self.stored_in = set()
        self.derefed_by = set()
        self.reason = reason
        return True

    def add_access(self, offset: int, width: int, kind: str) -> None:
        r = ByteRange.span(offset, offset + width)
        self.range = self.range.union(r)
        if kind == "ptr":
            self.ptr_slots.add(offset)
        else:
            self.data_range = self.data_range.union(r)

    def add_linear(self, start: int, step: int, width: int, kind: str) -> None:
        fact = LinearAccessInfo(FULL, ByteRange.span(start, start + width), abs(step), frozenset({1 if step > 0 else -1}))
        self.linear = self.linear.union(fact)
        if kind == "ptr":
            self.ptr_imprecise = True
        else:
            self.linear_data = True

    def signature(self) -> tuple:
        return (
            self.range,
            self.data_range,
            frozenset(self.ptr_slots),
            self.ptr_imprecise,
            self.linear,
            self.linear_data,
            frozenset(self.calls),
            frozenset(self.stored_in),
            frozenset(self.derefed_by),
            self.unsafe,
            self.pointer_unsafe,
        )

    def to_json(self) -> dict:
        return {
            "base": list(self.key),
            "size": self.size,
            "range": self.range.to_json(),
            "linear": self.linear.to_json(),
            "ptr_slots": sorted(self.ptr_slots),
            "calls": sorted([c, i, o] for c, i, o in self.calls),
            "stored_in": sorted([list(k), o] for k, o in self.stored_in),
            "derefed_by": sorted(list(k) for k in self.derefed_by),
            "unsafe": self.unsafe,
            "pointer_unsafe": self.pointer_unsafe,
            "depth": self.depth,
            "reason": self.reason,
        }


def merge_use_info(dst: UseInfo, src: UseInfo, offset: Optional[int]) -> bool:
    """Fold ``src``, seen at ``offset`` bytes from ``dst``'s base, into ``dst``.

    Returns whether ``dst`` changed.  An unknown offset makes ``dst`` unsafe.
    Call and store edges of ``src`` are not copied: ``src`` resolves them
    into its own ranges, and the module pass revisits ``dst`` whenever
    ``src`` changes.  Copying them would compose offsets around call
    cycles and grow the edge sets exponentially.
    """
    if dst.unsafe:
        return False
    if offset is None:
        return dst.mark_unsafe("merge at unknown offset")
    if src.unsafe:
        return dst.mark_unsafe(f"inherits unsafe {src.key[0]}:{src.key[2]}")
    before = dst.signature()
    dst.range = dst.range.union(src.range.shift(offset))
    dst.data_range = dst.data_range.union(src.data_range.shift(offset))
    dst.ptr_slots |= {s + offset for s in src.ptr_slots}
    dst.ptr_imprecise |= src.ptr_imprecise
    dst.linear = dst.linear.union(src.linear.shift(offset))
    dst.linear_data |= src.linear_data
    dst.derefed_by |= src.derefed_by
    dst.pointer_unsafe |= src.pointer_unsafe
    dst.direct_only = False
    return dst.signature() != before
