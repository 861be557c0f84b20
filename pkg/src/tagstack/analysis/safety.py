"""Safety classes and the predicates that derive them from a UseInfo."""

from __future__ import annotations

from dataclasses import dataclass

from ..mte import GRANULE
from .ranges import FULL, ByteRange
from .useinfo import UseInfo

IMPLICIT = "implicit"
PROVABLE = "provable"
GUARDED = "guarded"
UNSAFE = "unsafe"
CLASSES = (IMPLICIT, PROVABLE, GUARDED, UNSAFE)


@dataclass(frozen=True)
class SafetyClass:
    cls: str
    pointer_safe: bool

    def __post_init__(self):
        assert self.cls in CLASSES
        assert not (self.cls == UNSAFE and self.pointer_safe)
        assert not (self.cls == IMPLICIT and not self.pointer_safe)

    @property
    def is_safe(self) -> bool:
        return self.cls != UNSAFE


def pointer_layout_ok(u: UseInfo) -> bool:
    """Pointer slots are exact, disjoint and never overlapped by integer accesses."""
    if u.unsafe or u.pointer_unsafe or u.ptr_imprecise:
        return False
    if not u.ptr_slots:
        return True
    slots = sorted(u.ptr_slots)
    if any(b - a < 8 for a, b in zip(slots, slots[1:])):
        return False
    data = u.data_range
    if u.linear_data:
        data = data.union(ByteRange.span(0, u.size) if u.size is not None else FULL)
    return not any(data.overlaps(ByteRange(s, s + 8)) for s in slots)


def class_of(u: UseInfo, guard_width: int = 1) -> str:
    """Safety class of an alloca UseInfo from its accumulated facts."""
    if u.unsafe or u.size is None:
        return UNSAFE
    size = u.size
    if not u.range.within(0, size):
        return UNSAFE
    lin = u.linear
    if not lin.present:
        if u.direct_only and pointer_layout_ok(u):
            return IMPLICIT
        return PROVABLE
    if (
        lin.start_range.within(0, size)
        and lin.max_step is not None
        and lin.max_step < GRANULE * guard_width
        and (size % GRANULE == 0 or len(lin.directions) == 1)
    ):
        return GUARDED
    return UNSAFE


def safety_of(u: UseInfo, guard_width: int = 1) -> SafetyClass:
    cls = class_of(u, guard_width)
    return SafetyClass(cls, cls != UNSAFE and pointer_layout_ok(u))


def site_ok(u: UseInfo, guard_width: int = 1) -> bool:
    """Whether pointers to safe allocations may be stored in the memory of ``u``."""
    return u.kind == "alloca" and safety_of(u, guard_width).pointer_safe
