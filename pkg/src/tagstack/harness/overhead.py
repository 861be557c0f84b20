"""Static overhead metrics: instruction counts, frame bytes and the safe-byte share."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from ..analysis.classify import AnalysisResult
from ..analysis.safety import UNSAFE
from ..ir.nodes import Alloca, Function, MemGuard, Program
from ..mte import granule_round

REPORT_SCHEMA = 1


def instruction_count(f: Function) -> int:
    return sum(len(b.phis) + len(b.body) + (b.terminator is not None) for b in f.blocks)


def frame_bytes(f: Function) -> int:
    """Static frame bytes: raw alloca sizes for plain code, padded slots plus guards for tagged code."""
    total = 0
    for b in f.blocks:
        for ins in b.body:
            if isinstance(ins, Alloca) and not ins.is_dynamic:
                total += granule_round(ins.static_bytes) if ins.tagged else ins.static_bytes
            elif isinstance(ins, MemGuard):
                total += ins.size
    return total


def _pct(before: int, after: int) -> float:
    return 0.0 if before == 0 else round(100.0 * (after - before) / before, 3)


@dataclass(frozen=True)
class FunctionOverhead:
    function: str
    insts_before: int
    insts_after: int
    frame_before: int
    frame_after: int
    safe_bytes: int
    total_bytes: int

    def to_json(self) -> dict:
        return {
            "function": self.function,
            "insts_before": self.insts_before,
            "insts_after": self.insts_after,
            "insts_delta_pct": _pct(self.insts_before, self.insts_after),
            "frame_before": self.frame_before,
            "frame_after": self.frame_after,
            "frame_delta_pct": _pct(self.frame_before, self.frame_after),
            "safe_bytes": self.safe_bytes,
            "total_bytes": self.total_bytes,
        }


@dataclass
class OverheadReport:
    functions: list[FunctionOverhead] = field(default_factory=list)
    name: str = ""

    def _sum(self, attr: str) -> int:
        return sum(getattr(f, attr) for f in self.functions)

    @property
    def insts_before(self) -> int:
        return self._sum("insts_before")

    @property
    def insts_after(self) -> int:
        return self._sum("insts_after")

    @property
    def frame_before(self) -> int:
        return self._sum("frame_before")

    @property
    def frame_after(self) -> int:
        return self._sum("frame_after")

    @property
    def insts_delta_pct(self) -> float:
        return _pct(self.insts_before, self.insts_after)

    @property
    def frame_delta_pct(self) -> float:
        return _pct(self.frame_before, self.frame_after)

    @property
    def safe_proportion(self) -> float:
        total = self._sum("total_bytes")
        return 1.0 if total == 0 else round(self._sum("safe_bytes") / total, 6)

    def merge(self, other: "OverheadReport") -> "OverheadReport":
        prefix = f"{other.name}:" if other.name else ""
        return OverheadReport(
            self.functions + [replace(f, function=prefix + f.function) for f in other.functions],
            self.name,
        )

    def to_json(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "name": self.name,
            "totals": {
                "insts_before": self.insts_before,
                "insts_after": self.insts_after,
                "insts_delta_pct": self.insts_delta_pct,
                "frame_before": self.frame_before,
                "frame_after": self.frame_after,
                "frame_delta_pct": self.frame_delta_pct,
                "safe_proportion": self.safe_proportion,
            },
            "functions": [f.to_json() for f in self.functions],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    def table(self) -> str:
        head = f"{'function':<28} {'insts':>11} {'d%':>8} {'frame':>11} {'d%':>8} {'safe':>7}"
        rows = [head, "-" * len(head)]

        def row(name, ib, ia, fb, fa, sb, tb):
            safe = "-" if tb == 0 else f"{sb / tb:.1%}"
            return f"{name:<28} {f'{ib}->{ia}':>11} {_pct(ib, ia):>8.1f} {f'{fb}->{fa}':>11} {_pct(fb, fa):>8.1f} {safe:>7}"

        for f in self.functions:
            rows.append(row(f.function, f.insts_before, f.insts_after, f.frame_before, f.frame_after, f.safe_bytes, f.total_bytes))
        rows.append("-" * len(head))
        rows.append(
            row(
                "total",
                self.insts_before,
                self.insts_after,
                self.frame_before,
                self.frame_after,
                self._sum("safe_bytes"),
                self._sum("total_bytes"),
            )
        )
        return "\n".join(rows)


def measure_overhead(p_plain: Program, p_instr: Program, result: AnalysisResult, name: str = "") -> OverheadReport:
    """Per-function static metrics of an instrumented program against its original."""
    instr = p_instr.function_map()
    rows = []
    for f in p_plain.functions:
        g = instr[f.name]
        safe = total = 0
        for b in f.blocks:
            for ins in b.body:
                if isinstance(ins, Alloca) and not ins.is_dynamic:
                    total += ins.static_bytes
                    if result.of(f.name, ins.result).cls != UNSAFE:
                        safe += ins.static_bytes
        rows.append(FunctionOverhead(f.name, instruction_count(f), instruction_count(g), frame_bytes(f), frame_bytes(g), safe, total))
    return OverheadReport(rows, name)
