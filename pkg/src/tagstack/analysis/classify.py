"""Final per-allocation classification and tag-forgery-prevention site actions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..ir.nodes import PTR, Alloca, Gep, IntToPtr, Load, Program
from ..mte import GRANULE
from .function_pass import DEFAULT_PURE_EXTERNS, MUTATIONS, FunctionFacts, constant_offset, pointer_roots, run_function_pass
from .module_pass import DEFAULT_LIMIT, ModuleStats, Tables, run_module_pass
from .ranges import ByteRange
from .safety import GUARDED, UNSAFE, SafetyClass, pointer_layout_ok, safety_of
from .useinfo import LinearAccessInfo, UseInfo

# TFP actions per site
TFP_NONE = "none"  # pointer load from provably pointer-safe memory
TFP_CLEAR = "clear"  # pointer load from memory that is never pointer-safe
TFP_CHECK = "check"  # pointer load decided at run time by the source granule tag
TFP_KEEPTAG = "keeptag"  # pointer arithmetic not proven in bounds
TFP_UNTAG = "untag"  # integer to pointer cast

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class AnalysisOptions:
    limit: int = DEFAULT_LIMIT
    guard_width: int = 1  # granules
    allowlist: frozenset = DEFAULT_PURE_EXTERNS
    mutation: Optional[str] = None
    module_pass: bool = True

    def __post_init__(self):
        if self.limit < 1:
            raise ValueError("limit must be >= 1")
        if self.guard_width < 1:
            raise ValueError("guard width must be >= 1")
        if self.mutation is not None and self.mutation not in MUTATIONS:
            raise ValueError(f"unknown mutation {self.mutation!r}; known: {', '.join(MUTATIONS)}")


@dataclass(frozen=True)
class AllocaResult:
    function: str
    name: str
    size: Optional[int]
    safety: SafetyClass
    range: ByteRange
    linear: LinearAccessInfo
    reason: Optional[str] = None

    @property
    def cls(self) -> str:
        return self.safety.cls

    @property
    def pointer_safe(self) -> bool:
        return self.safety.pointer_safe

    def to_json(self) -> dict:
        return {
            "function": self.function,
            "alloca": self.name,
            "size": self.size,
            "class": self.cls,
            "pointer_safe": self.pointer_safe,
            "range": self.range.to_json(),
            "linear": None if not self.linear.present else {"start": self.linear.start_range.to_json(), "step": self.linear.max_step},
            "reason": self.reason,
        }


@dataclass
class AnalysisResult:
    allocas: dict[tuple[str, str], AllocaResult]
    tfp: dict[tuple[str, str], str]
    tables: Tables
    stats: ModuleStats
    options: AnalysisOptions = field(default_factory=AnalysisOptions)

    def of(self, function: str, name: str) -> AllocaResult:
        return self.allocas[(function, name)]

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "allocas": [a.to_json() for _, a in sorted(self.allocas.items())],
            "tfp": [{"function": f, "site": s, "action": a} for (f, s), a in sorted(self.tfp.items())],
            "stats": self.stats.to_json(),
            "options": {
                "limit": self.options.limit,
                "guard_width": self.options.guard_width,
                "mutation": self.options.mutation,
                "module_pass": self.options.module_pass,
            },
        }


def check_pointer_safety(tables: Tables) -> int:
    """Set ``pointer_unsafe`` on every UseInfo whose pointer slots are not exact; returns the count."""
    n = 0
    for t in tables.values():
        for u in t.values():
            if not u.pointer_unsafe and not pointer_layout_ok(u):
                u.pointer_unsafe = True
                n += 1
    return n


def _load_action(result: dict, fn_name: str, roots) -> str:
    kinds = set()
    for kind, name in roots:
        if kind == "alloca":
            a = result[(fn_name, name)]
            kinds.add("safe" if a.pointer_safe else "unsafe" if a.cls == UNSAFE else "mixed")
        elif kind == "global":
            kinds.add("unsafe")
        else:
            kinds.add("mixed")
    if kinds == {"safe"}:
        return TFP_NONE
    if kinds == {"unsafe"}:
        return TFP_CLEAR
    return TFP_CHECK


def classify(p: Program, tables: Tables, stats: ModuleStats, options: AnalysisOptions = AnalysisOptions()) -> AnalysisResult:
    gw = options.guard_width
    allocas: dict[tuple[str, str], AllocaResult] = {}
    for f in p.functions:
        t = tables[f.name]
        for b in f.blocks:
            for ins in b.body:
                if isinstance(ins, Alloca):
                    u = t[(f.name, "alloca", ins.result)]
                    s = safety_of(u, gw)
                    if s.cls == GUARDED:
                        assert u.linear.max_step is not None and u.linear.max_step < GRANULE * gw
                        assert u.linear.start_range.within(0, u.size)
                    allocas[(f.name, ins.result)] = AllocaResult(f.name, ins.result, u.size, s, u.range, u.linear, u.reason)
    tfp: dict[tuple[str, str], str] = {}
    for f in p.functions:
        facts = FunctionFacts(f)
        for b in f.blocks:
            for ins in b.body:
                if isinstance(ins, Load) and ins.kind == PTR:
                    tfp[(f.name, ins.result)] = _load_action(allocas, f.name, pointer_roots(f, ins.addr, facts.defs))
                elif isinstance(ins, Gep):
                    if not _gep_in_bounds(f, ins, facts, allocas):
                        tfp[(f.name, ins.result)] = TFP_KEEPTAG
                elif isinstance(ins, IntToPtr):
                    tfp[(f.name, ins.result)] = TFP_UNTAG
    return AnalysisResult(allocas, tfp, tables, stats, options)


def _gep_in_bounds(f, g: Gep, facts: FunctionFacts, allocas) -> bool:
    found = constant_offset(f, g.result, facts.defs, facts)
    if found is None or found[0][0] != "alloca":
        return False
    a = allocas.get((f.name, found[0][1]))
    return a is not None and a.size is not None and 0 <= found[1] <= a.size


def analyze(p: Program, options: Optional[AnalysisOptions] = None, **overrides) -> AnalysisResult:
    """Function pass, module fixpoint, pointer-safety check and classification."""
    if options is None:
        options = AnalysisOptions(**overrides)
    elif overrides:
        options = AnalysisOptions(**{**options.__dict__, **overrides})
    if p.is_instrumented():
        raise ValueError("program is already instrumented; analyze the original program")
    tables: Tables = {}
    for f in p.functions:
        tables[f.name] = run_function_pass(p, f, options.allowlist, options.mutation)
    if options.module_pass:
        stats = run_module_pass(p, tables, options.limit, options.guard_width)
    else:
        stats = ModuleStats()
        for t in tables.values():
            for u in t.values():
                if u.calls or u.stored_in:
                    u.mark_unsafe("call or pointer store left unresolved")
    check_pointer_safety(tables)
    return classify(p, tables, stats, options)


__all__ = [
    "AllocaResult",
    "AnalysisOptions",
    "AnalysisResult",
    "UseInfo",
    "analyze",
    "check_pointer_safety",
    "classify",
]
