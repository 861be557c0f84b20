"""Rewrite a classified program into its tagged form."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional

from ..analysis.classify import (
    TFP_CHECK,
    TFP_CLEAR,
    TFP_KEEPTAG,
    TFP_NONE,
    TFP_UNTAG,
    AnalysisOptions,
    AnalysisResult,
    analyze,
)
from ..analysis.safety import IMPLICIT
from ..ir.nodes import (
    PTR,
    RESET_TAGS,
    Alloca,
    BasicBlock,
    ClearTopTagBit,
    Cmp,
    Function,
    Gep,
    IntOp,
    IntToPtr,
    KeepTag,
    Load,
    MemGuard,
    Program,
    RetagFrame,
    Return,
    SetTag,
    TagPtr,
    TfpLoad,
)
from ..mte import SAFE_DEFAULT
from .layout import FrameLayout, check_layout, layout_frame

SCHEMA_VERSION = 1


class InstrumentError(Exception):
    pass


@dataclass(frozen=True)
class InstrumentOptions:
    elision: bool = True
    guard_width: int = 1


@dataclass
class TagPlan:
    tags: dict[tuple[str, str], int]
    layouts: dict[str, FrameLayout]
    tfp_sites: dict[tuple[str, str], str]
    options: InstrumentOptions = field(default_factory=InstrumentOptions)

    def tag_of(self, function: str, name: str) -> int:
        return self.tags[(function, name)]

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "tags": [{"function": f, "alloca": n, "tag": t} for (f, n), t in sorted(self.tags.items())],
            "layouts": {f: l.to_json() for f, l in sorted(self.layouts.items())},
            "guards": [
                {"function": f, "name": g.name, "offset": g.offset, "size": g.padded_size, "tag": g.tag}
                for f, l in sorted(self.layouts.items())
                for g in l.guards
            ],
            "tfp_sites": [{"function": f, "site": s, "action": a} for (f, s), a in sorted(self.tfp_sites.items())],
            "options": {"elision": self.options.elision, "guard_width": self.options.guard_width},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def assign_tags(result: AnalysisResult, layouts: dict[str, FrameLayout]) -> dict[tuple[str, str], int]:
    """Tag of every alloca site, read off the frame layouts."""
    tags: dict[tuple[str, str], int] = {}
    for fname, layout in layouts.items():
        for s in layout.slots:
            if s.kind == "alloca":
                tags[(fname, s.name)] = s.tag
        for d in layout.dynamic:
            tags[(fname, d.name)] = d.tag
    missing = set(result.allocas) - set(tags)
    if missing:
        raise InstrumentError(f"allocas without a tag: {sorted(missing)}")
    return tags


def check_tag_plan(plan: TagPlan, result: AnalysisResult) -> list[str]:
    """Table-level invariants plus per-frame layout checks."""
    problems = []
    for key, tag in plan.tags.items():
        a = result.allocas[key]
        if tag == 0:
            problems.append(f"{key} uses the wildcard tag")
        if a.cls == "unsafe" and tag & 0b1000:
            problems.append(f"{key} is unsafe but tagged {tag:#06b}")
        if a.cls in ("provable", "guarded"):
            want_ps = tag == SAFE_DEFAULT
            want_pu = tag >> 2 == 0b10
            if (a.pointer_safe and not want_ps) or (not a.pointer_safe and not want_pu):
                problems.append(f"{key} tag {tag:#06b} does not match its class")
        if a.cls == IMPLICIT and tag != SAFE_DEFAULT:
            problems.append(f"{key} is implicit but tagged {tag:#06b}")
    for layout in plan.layouts.values():
        problems.extend(f"@{layout.function}: {p}" for p in check_layout(layout))
    return problems


class _Names:
    def __init__(self, fn: Function):
        self.used = set(fn.definitions())

    def fresh(self, base: str, suffix: str) -> str:
        name = f"{base}.{suffix}"
        n = 1
        while name in self.used:
            name = f"{base}.{suffix}{n}"
            n += 1
        self.used.add(name)
        return name


def _tfp_action(result: AnalysisResult, fname: str, site: str, elision: bool) -> str:
    action = result.tfp.get((fname, site), TFP_NONE)
    if not elision and action in (TFP_NONE, TFP_CLEAR):
        return TFP_CHECK
    return action


def instrument_function(
    fn: Function, result: AnalysisResult, layout: FrameLayout, options: InstrumentOptions, tfp_log: dict
) -> Function:
    """Tagging at entry, tag reset before every return and the TFP rewrites."""
    names = _Names(fn)
    dyn_tag = {d.name: d.tag for d in layout.dynamic}
    attributes = set(fn.attributes) | ({RESET_TAGS} if dyn_tag else set())

    prologue: list = []
    resets: list = []
    rename: dict[str, str] = {}  # every use of a key reads its value instead
    enforced: set[str] = set()  # loaded pointers whose comparisons keep the raw value
    keep: set[int] = set()  # ids of instructions whose operands must not be renamed

    def pin(ins):
        keep.add(id(ins))
        return ins

    for s in layout.slots:
        if s.kind == "guard":
            prologue.append(MemGuard(s.name, s.padded_size, s.offset))
        else:
            implicit = result.of(fn.name, s.name).cls == IMPLICIT
            prologue.append(Alloca(s.name, s.size, 1, s.tagged, implicit, s.alloc_offset))
    for s in layout.slots:
        if s.tag != SAFE_DEFAULT:
            t = names.fresh(s.name, "t")
            prologue.append(pin(TagPtr(t, s.name, s.tag)))
            prologue.append(SetTag(t, s.size))
            resets.append(SetTag(s.name, s.size))
            if s.kind == "alloca":
                rename[s.name] = t
    if RESET_TAGS in attributes:
        resets = [RetagFrame()]

    staged: list[tuple[BasicBlock, list]] = []
    for bi, b in enumerate(fn.blocks):
        body: list = list(prologue) if bi == 0 else []
        for ins in b.body:
            if isinstance(ins, Alloca) and not ins.is_dynamic:
                continue  # placed in the prologue
            if isinstance(ins, Alloca):
                body.append(replace(ins, tagged=True))
                size = ins.size
                if ins.elem_size != 1:
                    size = names.fresh(ins.result, "sz")
                    body.append(IntOp(size, "mul", ins.size, ins.elem_size))
                t = names.fresh(ins.result, "t")
                body.append(pin(TagPtr(t, ins.result, dyn_tag[ins.result])))
                body.append(SetTag(t, size))
                rename[ins.result] = t
            elif isinstance(ins, Load) and ins.kind == PTR:
                action = _tfp_action(result, fn.name, ins.result, options.elision)
                tfp_log[(fn.name, ins.result)] = action
                body.append(ins)
                if action in (TFP_CLEAR, TFP_CHECK):
                    e = names.fresh(ins.result, "e")
                    if action == TFP_CLEAR:
                        body.append(pin(ClearTopTagBit(e, ins.result)))
                    else:
                        body.append(TfpLoad(e, ins.result, ins.addr, ins.offset))
                    enforced.add(ins.result)
                    rename[ins.result] = e
            elif isinstance(ins, Gep) and result.tfp.get((fn.name, ins.result)) == TFP_KEEPTAG:
                tfp_log[(fn.name, ins.result)] = TFP_KEEPTAG
                raw = names.fresh(ins.result, "raw")
                body.append(replace(ins, result=raw))
                body.append(KeepTag(ins.result, raw, ins.base))
            elif isinstance(ins, IntToPtr):
                tfp_log[(fn.name, ins.result)] = TFP_UNTAG
                raw = names.fresh(ins.result, "raw")
                body.append(replace(ins, result=raw))
                body.append(ClearTopTagBit(ins.result, raw))
            else:
                body.append(ins)
        if isinstance(b.terminator, Return):
            body.extend(pin(r) for r in resets)
        staged.append((b, body))

    cmp_rename = {k: v for k, v in rename.items() if k not in enforced}
    blocks = []
    for b, body in staged:
        out = []
        for ins in body:
            if id(ins) in keep:
                out.append(ins)
            elif isinstance(ins, Cmp):
                out.append(ins.replace_operands(cmp_rename))
            elif isinstance(ins, TfpLoad):
                out.append(replace(ins, addr=rename.get(ins.addr, ins.addr)))
            else:
                out.append(ins.replace_operands(rename))
        phis = tuple(p.replace_operands(rename) for p in b.phis)
        term = b.terminator.replace_operands(rename) if b.terminator is not None else None
        blocks.append(BasicBlock(b.label, phis, tuple(out), term))
    return Function(fn.name, fn.params, tuple(blocks), fn.returns, frozenset(attributes), layout.frame_size)


def instrument(
    p: Program,
    result: Optional[AnalysisResult] = None,
    options: InstrumentOptions = InstrumentOptions(),
    analysis_options: Optional[AnalysisOptions] = None,
) -> tuple[Program, TagPlan]:
    """Return the instrumented program and its tag plan."""
    if p.is_instrumented():
        raise InstrumentError("program already contains instrumentation; refusing to instrument twice")
    if result is None:
        result = analyze(p, analysis_options or AnalysisOptions(guard_width=options.guard_width))
    if result.options.guard_width != options.guard_width:
        raise InstrumentError("analysis and instrumentation disagree on the guard width")
    layouts = {f.name: layout_frame(f, result, options.guard_width) for f in p.functions}
    tags = assign_tags(result, layouts)
    tfp_log: dict[tuple[str, str], str] = {}
    functions = tuple(instrument_function(f, result, layouts[f.name], options, tfp_log) for f in p.functions)
    plan = TagPlan(tags, layouts, tfp_log, options)
    return Program(p.globals, functions, p.externs, p.entry), plan


__all__ = ["InstrumentError", "InstrumentOptions", "TagPlan", "assign_tags", "check_tag_plan", "instrument"]
