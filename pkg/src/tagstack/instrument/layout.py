"""Frame layout, guard placement and tag assignment."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..analysis.classify import AnalysisResult
from ..analysis.safety import GUARDED, IMPLICIT, UNSAFE, SafetyClass
from ..ir.nodes import Alloca, Function
from ..mte import GRANULE, GUARD_TAGS, PTR_UNSAFE, SAFE_DEFAULT, UNSAFE_CYCLE, granule_round

GUARD = "guard"


@dataclass(frozen=True)
class FrameSlot:
    """One frame item.  ``offset``/``padded_size`` describe the reserved span;
    the object itself starts at ``alloc_offset`` (end-aligned for upward
    stepping Guarded buffers whose size is not a granule multiple)."""

    name: str
    kind: str  # "alloca" | "guard"
    offset: int
    padded_size: int
    alloc_offset: int
    size: int
    tag: int
    cls: str
    pointer_safe: bool
    tagged: bool  # granule aligned and padded

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "offset": self.offset,
            "padded_size": self.padded_size,
            "alloc_offset": self.alloc_offset,
            "size": self.size,
            "tag": self.tag,
            "class": self.cls,
            "pointer_safe": self.pointer_safe,
        }


@dataclass(frozen=True)
class DynamicSlot:
    name: str
    tag: int


@dataclass(frozen=True)
class FrameLayout:
    function: str
    slots: tuple[FrameSlot, ...]
    frame_size: int
    dynamic: tuple[DynamicSlot, ...] = ()

    def slot(self, name: str) -> FrameSlot:
        for s in self.slots:
            if s.name == name:
                return s
        raise KeyError(name)

    @property
    def guards(self) -> tuple[FrameSlot, ...]:
        return tuple(s for s in self.slots if s.kind == GUARD)

    @property
    def padded_bytes(self) -> int:
        return sum(s.padded_size for s in self.slots)

    def to_json(self) -> dict:
        return {
            "frame_size": self.frame_size,
            "slots": [s.to_json() for s in self.slots],
            "dynamic": [{"name": d.name, "tag": d.tag} for d in self.dynamic],
        }


def base_tag(s: SafetyClass) -> Optional[int]:
    """Tag of a classified allocation; ``None`` for Unsafe ones, which alternate."""
    if s.cls == UNSAFE:
        return None
    return SAFE_DEFAULT if s.pointer_safe else PTR_UNSAFE


def _pick(candidates, *avoid) -> int:
    for t in candidates:
        if t not in avoid:
            return t
    raise AssertionError("no tag left")


@dataclass
class _Item:
    name: str
    size: int
    safety: SafetyClass
    tag: int
    directions: frozenset = field(default_factory=frozenset)

    @property
    def guarded(self) -> bool:
        return self.safety.cls == GUARDED

    @property
    def tagged(self) -> bool:
        return self.guarded or self.tag != SAFE_DEFAULT


def layout_frame(f: Function, result: AnalysisResult, guard_width: int = 1) -> FrameLayout:
    """Place static allocas in input order from the low end of the frame."""
    items: list[_Item] = []
    dynamic: list[DynamicSlot] = []
    prev_unsafe: Optional[int] = None
    for b in f.blocks:
        for ins in b.body:
            if not isinstance(ins, Alloca):
                continue
            a = result.of(f.name, ins.result)
            if ins.is_dynamic:
                continue
            tag = base_tag(a.safety)
            if tag is None:
                tag = _pick(UNSAFE_CYCLE, prev_unsafe)
                prev_unsafe = tag
            else:
                prev_unsafe = None
            items.append(_Item(ins.result, a.size, a.safety, tag, a.linear.directions))
    prev_dyn = items[0].tag if items else None
    for b in f.blocks:
        for ins in b.body:
            if isinstance(ins, Alloca) and ins.is_dynamic:
                prev_dyn = _pick(UNSAFE_CYCLE, prev_dyn)
                dynamic.append(DynamicSlot(ins.result, prev_dyn))

    seq: list = []  # _Item or ("guard", tag)
    guard_size = GRANULE * guard_width

    def tag_of(x) -> int:
        return x[1] if isinstance(x, tuple) else x.tag

    for i, it in enumerate(items):
        nxt = items[i + 1] if i + 1 < len(items) else None
        if it.guarded:
            left = tag_of(seq[-1]) if seq else None
            if left is None or left == it.tag:
                seq.append((GUARD, _pick(GUARD_TAGS, left, it.tag)))
        elif seq and isinstance(seq[-1], _Item) and seq[-1].guarded and seq[-1].tag == it.tag:
            seq.append((GUARD, _pick(GUARD_TAGS, seq[-1].tag, it.tag)))
        seq.append(it)
        if it.guarded and nxt is None:
            seq.append((GUARD, _pick(GUARD_TAGS, it.tag)))

    slots: list[FrameSlot] = []
    cursor = 0
    g = 0
    for x in seq:
        if isinstance(x, tuple):
            cursor = granule_round(cursor)
            slots.append(FrameSlot(f"%guard.{g}", GUARD, cursor, guard_size, cursor, guard_size, x[1], GUARD, False, True))
            g += 1
            cursor += guard_size
            continue
        if x.tagged:
            cursor = granule_round(cursor)
            padded = granule_round(x.size)
            at = cursor
            if x.guarded and x.size % GRANULE and x.directions == frozenset({1}):
                at = cursor + padded - x.size
        else:
            cursor = -(-cursor // 8) * 8
            padded = x.size
            at = cursor
        slots.append(FrameSlot(x.name, "alloca", cursor, padded, at, x.size, x.tag, x.safety.cls, x.safety.pointer_safe, x.tagged))
        cursor += padded
    return FrameLayout(f.name, tuple(slots), granule_round(cursor), tuple(dynamic))


def check_layout(layout: FrameLayout) -> list[str]:
    """Problems with a layout: misaligned tagged slots, overlaps, equal tags around guarded slots."""
    problems = []
    prev_end = 0
    slots = layout.slots
    for i, s in enumerate(slots):
        if s.tag == 0:
            problems.append(f"{s.name} uses the wildcard tag")
        if s.tagged and (s.offset % GRANULE or s.padded_size % GRANULE):
            problems.append(f"{s.name} is not granule aligned")
        if s.offset < prev_end:
            problems.append(f"{s.name} overlaps its predecessor")
        if not (s.offset <= s.alloc_offset and s.alloc_offset + s.size <= s.offset + s.padded_size):
            problems.append(f"{s.name} object outside its slot")
        prev_end = s.offset + s.padded_size
        if s.cls == GUARDED:
            left = slots[i - 1].tag if i > 0 else None
            right = slots[i + 1].tag if i + 1 < len(slots) else None
            if left is None or left == s.tag:
                problems.append(f"{s.name} has no differently tagged lower neighbour")
            if right is None or right == s.tag:
                problems.append(f"{s.name} has no differently tagged upper neighbour")
        if s.cls == IMPLICIT and s.tag != SAFE_DEFAULT:
            problems.append(f"{s.name} is implicit but tagged")
    if prev_end > layout.frame_size:
        problems.append("frame size smaller than its slots")
    return problems
