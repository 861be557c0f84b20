"""Half-open byte ranges relative to a base pointer."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ByteRange:
    """``[lo, hi)`` relative to a base pointer, or the unbounded range when ``full``.

    The empty range is canonically ``ByteRange(0, 0)``.
    """

    lo: int = 0
    hi: int = 0
    full: bool = False

    @staticmethod
    def span(lo: int, hi: int) -> "ByteRange":
        return EMPTY if hi <= lo else ByteRange(lo, hi)

    @property
    def is_empty(self) -> bool:
        return not self.full and self.hi <= self.lo

    def union(self, other: "ByteRange") -> "ByteRange":
        if self.full or other.is_empty:
            return self
        if other.full or self.is_empty:
            return other
        return ByteRange(min(self.lo, other.lo), max(self.hi, other.hi))

    def shift(self, delta: int) -> "ByteRange":
        if self.full or self.is_empty or delta == 0:
            return self
        return ByteRange(self.lo + delta, self.hi + delta)

    def within(self, lo: int, hi: int) -> bool:
        if self.is_empty:
            return True
        return not self.full and lo <= self.lo and self.hi <= hi

    def overlaps(self, other: "ByteRange") -> bool:
        if self.is_empty or other.is_empty:
            return False
        if self.full or other.full:
            return True
        return self.lo < other.hi and other.lo < self.hi

    def to_json(self):
        if self.full:
            return "full"
        if self.is_empty:
            return None
        return [self.lo, self.hi]

    def __str__(self) -> str:
        if self.full:
            return "full"
        if self.is_empty:
            return "empty"
        return f"[{self.lo}, {self.hi})"


EMPTY = ByteRange(0, 0)
FULL = ByteRange(0, 0, True)
