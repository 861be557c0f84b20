"""Tagged-memory machine model.

Pointers are plain 64-bit unsigned integers.  Bits [59:56] hold the
address tag, bits [55:0] the address, and bits [63:60] are ignored by
address translation.  Memory is a set of mapped regions; every 16-byte
granule of a region carries a 4-bit allocation tag.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

GRANULE = 16
TAG_SHIFT = 56
TAG_BITS = 0xF << TAG_SHIFT
TOP_TAG_BIT = 1 << 59
ADDR_MASK = (1 << 56) - 1
U64 = (1 << 64) - 1

SAFE_DEFAULT = 0b1100
PTR_UNSAFE = 0b1000
WILDCARD = 0b0000
UNSAFE_CYCLE = (0b0001, 0b0010, 0b0011)
GUARD_TAGS = (0b0101, 0b0110, 0b0111, 0b0100)
GLOBAL_TAG = 0b0111


def address_of(p: int) -> int:
    return p & ADDR_MASK


def tag_of(p: int) -> int:
    return (p >> TAG_SHIFT) & 0xF


def with_tag(p: int, t: int) -> int:
    return (p & ~TAG_BITS & U64) | ((t & 0xF) << TAG_SHIFT)


def clear_top_tag_bit(p: int) -> int:
    return p & ~TOP_TAG_BIT & U64


def granule_round(size: int) -> int:
    return -(-size // GRANULE) * GRANULE


def is_pointer_safe_tag(t: int) -> bool:
    """Allocation tags whose top two bits are 11 mark pointer-safe storage."""
    return (t >> 2) == 0b11


@dataclass(frozen=True)
class MteConfig:
    wildcard_enabled: bool = False
    check_mode: str = "sync"


@dataclass(frozen=True)
class Trap:
    """A machine fault.  ``kind`` is ``tag-mismatch``, ``unmapped`` or a runtime error name."""

    kind: str
    address: Optional[int] = None
    address_tag: Optional[int] = None
    allocation_tag: Optional[int] = None
    message: str = ""
    function: Optional[str] = None
    index: Optional[int] = None

    def describe(self) -> str:
        parts = [self.kind]
        if self.address is not None:
            parts.append(f"at {self.address:#x}")
        if self.address_tag is not None:
            parts.append(f"addr_tag={self.address_tag:#06b}")
        if self.allocation_tag is not None:
            parts.append(f"alloc_tag={self.allocation_tag:#06b}")
        if self.function is not None:
            parts.append(f"in @{self.function}#{self.index}")
        if self.message:
            parts.append(self.message)
        return " ".join(parts)


class Allowed:
    """Singleton verdict of a successful check."""

    __slots__ = ()

    def __bool__(self) -> bool:
        return True

    def __repr__(self) -> str:
        return "Allowed"


ALLOWED = Allowed()


class MachineFault(Exception):
    def __init__(self, trap: Trap):
        self.trap = trap
        super().__init__(trap.describe())


class Region:
    """A mapped address range with its data bytes and one tag per granule."""

    __slots__ = ("name", "base", "size", "end", "data", "tags")

    def __init__(self, name: str, base: int, size: int, default_tag: int = SAFE_DEFAULT):
        assert base % GRANULE == 0 and size % GRANULE == 0
        self.name = name
        self.base = base
        self.size = size
        self.end = base + size
        self.data = bytearray(size)
        self.tags = bytearray([default_tag]) * (size // GRANULE)


@dataclass
class TagMemory:
    regions: list[Region] = field(default_factory=list)

    def map(self, name: str, base: int, size: int, default_tag: int = SAFE_DEFAULT) -> Region:
        r = Region(name, base, size, default_tag)
        for o in self.regions:
            if base < o.end and o.base < r.end:
                raise ValueError(f"region {name} overlaps {o.name}")
        self.regions.append(r)
        return r

    def region_of(self, addr: int) -> Optional[Region]:
        for r in self.regions:
            if r.base <= addr < r.end:
                return r
        return None

    def tag_at(self, addr: int) -> int:
        """Allocation tag of the granule holding ``addr``; unmapped granules fault."""
        r = self.region_of(addr)
        if r is None:
            raise MachineFault(Trap("unmapped", addr, message="tag read of unmapped granule"))
        return r.tags[(addr - r.base) >> 4]

    def snapshot(self) -> dict[int, int]:
        out = {}
        for r in self.regions:
            for i, t in enumerate(r.tags):
                out[(r.base >> 4) + i] = t
        return out


def set_allocation_tags(tm: TagMemory, addr: int, size: int, t: int) -> None:
    """Tag every granule overlapping ``[addr, addr + roundup16(size))`` with ``t``."""
    addr = address_of(addr)
    if addr % GRANULE:
        raise MachineFault(Trap("misaligned-settag", addr, message="settag address is not granule aligned"))
    if size <= 0:
        return
    end = addr + granule_round(size)
    r = tm.region_of(addr)
    if r is None or end > r.end:
        bad = addr if r is None else r.end
        raise MachineFault(Trap("unmapped", bad, message="settag reaches unmapped memory"))
    lo = (addr - r.base) >> 4
    hi = (end - r.base) >> 4
    r.tags[lo:hi] = bytes([t & 0xF]) * (hi - lo)


TraceHook = Callable[[dict], None]


def check_access(
    tm: TagMemory,
    p: int,
    width: int,
    cfg: MteConfig = MteConfig(),
    via_frame_base: bool = False,
    op: str = "access",
    trace: Optional[TraceHook] = None,
):
    """Return :data:`ALLOWED` or a :class:`Trap` for an access of ``width`` bytes through ``p``."""
    addr = p & ADDR_MASK
    atag = (p >> TAG_SHIFT) & 0xF
    r = tm.region_of(addr)
    verdict = ALLOWED
    alloc = None
    if r is None or addr + width > r.end:
        verdict = Trap("unmapped", addr, atag, None, f"{op} of {width} bytes")
    else:
        first = (addr - r.base) >> 4
        last = (addr + width - 1 - r.base) >> 4
        alloc = r.tags[first]
        if not via_frame_base and not (cfg.wildcard_enabled and atag == WILDCARD):
            for g in range(first, last + 1):
                if r.tags[g] != atag:
                    alloc = r.tags[g]
                    verdict = Trap("tag-mismatch", addr, atag, alloc, f"{op} of {width} bytes")
                    break
    if trace is not None:
        trace(
            {
                "op": op,
                "address": addr,
                "width": width,
                "addr_tag": atag,
                "alloc_tag": alloc,
                "verdict": "allowed" if verdict is ALLOWED else verdict.kind,
            }
        )
    return verdict
