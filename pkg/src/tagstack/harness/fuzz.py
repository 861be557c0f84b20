"""Random program generator and the conservativeness fuzz driver."""

from __future__ import annotations

import random
import sys
from dataclasses import dataclass, field
from typing import Optional

from ..analysis.classify import AnalysisOptions, analyze
from ..analysis.safety import GUARDED, IMPLICIT, PROVABLE
from ..instrument.rewrite import InstrumentOptions, instrument
from ..interp import RunConfig, run
from ..ir.nodes import Program
from ..ir.parser import parse_program
from .oracle import OracleReport, run_oracle

FUZZ_STEP_BUDGET = 200_000


@dataclass(frozen=True)
class GenParams:
    max_functions: int = 4  # including main
    max_loops: int = 3
    max_allocas: int = 6
    max_segments: int = 7


class _Fn:
    """Text builder for one function."""

    def __init__(self, name: str, params: list[tuple[str, str]], rng: random.Random):
        self.name = name
        self.params = params
        self.rng = rng
        self.n = 0
        self.allocas: list[tuple[str, int]] = []  # static allocas: (name, bytes)
        self.dynamic: list[tuple[str, str]] = []  # (name, byte count value)
        self.entry: list[str] = []
        self.blocks: list[tuple[str, list[str]]] = [("entry", [])]
        self.ints: list[str] = [p for p, k in params if k == "i64"]
        self.ptrs: list[tuple[str, int]] = [(p, 16) for p, k in params if k == "ptr"]
        self.holders: list[tuple[str, int]] = []  # allocas that only hold pointers

    def fresh(self, base: str = "v") -> str:
        self.n += 1
        return f"%{base}{self.n}"

    def label(self, base: str) -> str:
        self.n += 1
        return f"{base}{self.n}"

    def emit(self, line: str) -> None:
        self.blocks[-1][1].append(line)

    def start_block(self, label: str) -> None:
        self.blocks.append((label, []))

    @property
    def current(self) -> str:
        return self.blocks[-1][0]

    def int_value(self) -> str:
        if self.ints and self.rng.random() < 0.8:
            return self.rng.choice(self.ints)
        return str(self.rng.randint(-3, 20))

    def text(self, ret: str) -> str:
        params = ", ".join(f"{p}: {k}" for p, k in self.params)
        lines = [f"func @{self.name}({params}) -> i64 {{"]
        for i, (label, body) in enumerate(self.blocks):
            lines.append(f"{label}:")
            if i == 0:
                lines.extend("  " + l for l in self.entry)
            lines.extend("  " + l for l in body)
        lines.append(f"  ret {ret}")
        lines.append("}")
        return "\n".join(lines)


_WIDTHS = {1: "i8", 2: "i16", 4: "i32", 8: "i64"}
_EXTERN_ARITY = {"abs": 1, "min": 2, "max": 2}


class ProgramGenerator:
    """Builds well-formed programs mixing affine loops, unknown indices, calls and pointer stores."""

    def __init__(self, rng: random.Random, params: GenParams = GenParams()):
        self.rng = rng
        self.params = params

    def generate(self) -> str:
        rng = self.rng
        p = self.params
        n_helpers = rng.randint(0, p.max_functions - 1)
        self.allocas_left = p.max_allocas
        self.loops_left = p.max_loops
        self.uses_global = False
        self.externs: set[str] = set()
        helpers = [f"h{i}" for i in range(n_helpers)]
        funcs = []
        # helpers may only call later helpers, so the call graph is acyclic
        for i in reversed(range(n_helpers)):
            f = _Fn(helpers[i], [("%p", "ptr"), ("%n", "i64")], rng)
            funcs.append(self._body(f, helpers[i + 1 :], rng.randint(1, 4)))
        main = _Fn("main", [("%a", "i64"), ("%b", "i64"), ("%c", "i64")], rng)
        for _ in range(rng.randint(1, 3)):
            self._alloca(main)
        funcs.append(self._body(main, helpers, rng.randint(2, p.max_segments)))
        head = "global @gp 8\n" if self.uses_global else ""
        for e in sorted(self.externs):
            head += f"extern @{e}({', '.join(['i64'] * _EXTERN_ARITY[e])}) -> i64\n"
        head += "\n" if head else ""
        return head + "\n\n".join(reversed(funcs)) + "\n"

    # -- segments --------------------------------------------------------------

    def _body(self, f: _Fn, callees: list[str], segments: int) -> str:
        rng = self.rng
        acc = None
        for _ in range(segments):
            kinds = ["const", "const", "unknown", "intop", "diamond", "ptrstore"]
            if self.loops_left:
                kinds += ["loop", "loop", "loop"]
            if callees:
                kinds += ["call", "call"]
            if self.allocas_left:
                kinds += ["alloca", "dyn"]
            kind = rng.choice(kinds)
            v = getattr(self, f"_seg_{kind}")(f, callees)
            if v is not None:
                acc = v if acc is None else self._combine(f, acc, v)
        if acc is None:
            acc = f.int_value()
        if f.name == "main":
            f.emit(f"output {acc}")
        return f.text(acc)

    def _combine(self, f: _Fn, a: str, b: str) -> str:
        r = f.fresh()
        f.emit(f"{r} = {self.rng.choice(['add', 'xor', 'sub'])} {a}, {b}")
        f.ints.append(r)
        return r

    def _alloca(self, f: _Fn) -> Optional[tuple[str, int]]:
        if not self.allocas_left:
            return None
        self.allocas_left -= 1
        size = self.rng.choice([1, 4, 8, 8, 12, 16, 16, 24, 32, 40, 64])
        name = f.fresh("a")
        f.entry.append(f"{name} = alloca {size}")
        f.allocas.append((name, size))
        f.ptrs.append((name, size))
        return name, size

    def _target(self, f: _Fn) -> Optional[tuple[str, int]]:
        if not f.ptrs:
            return self._alloca(f)
        return self.rng.choice(f.ptrs)

    def _seg_alloca(self, f: _Fn, callees) -> Optional[str]:
        self._alloca(f)
        return None

    def _seg_const(self, f: _Fn, callees) -> Optional[str]:
        t = self._target(f)
        if t is None:
            return None
        base, size = t
        rng = self.rng
        w = rng.choice([w for w in (1, 2, 4, 8) if w <= max(size, 1)] or [1])
        if rng.random() < 0.9:
            off = rng.randint(0, max(size - w, 0))
        else:
            off = rng.choice([size - w + rng.randint(1, 8), -rng.randint(1, 8)])
        f.emit(f"store.{_WIDTHS[w]} [{base} {'+' if off >= 0 else '-'} {abs(off)}] = {f.int_value()}")
        r = f.fresh()
        f.emit(f"{r} = load.{_WIDTHS[w]} [{base} {'+' if off >= 0 else '-'} {abs(off)}]")
        f.ints.append(r)
        return r

    def _seg_unknown(self, f: _Fn, callees) -> Optional[str]:
        t = self._target(f)
        if t is None:
            return None
        base, size = t
        rng = self.rng
        idx = f.int_value()
        if rng.random() < 0.5 and not idx.lstrip("-").isdigit():
            m = f.fresh()
            f.emit(f"{m} = and {idx}, {rng.choice([3, 7, 15])}")
            idx = m
        scale = rng.choice([1, 2, 4])
        g = f.fresh("g")
        f.emit(f"{g} = gep {base}, {idx}, scale {scale}, off 0")
        if rng.random() < 0.5:
            f.emit(f"store.i8 [{g} + 0] = {f.int_value()}")
            return None
        r = f.fresh()
        f.emit(f"{r} = load.i8 [{g} + 0]")
        f.ints.append(r)
        return r

    def _seg_intop(self, f: _Fn, callees) -> Optional[str]:
        rng = self.rng
        op = rng.choice(["add", "sub", "mul", "and", "or", "xor", "shl", "ashr", "lshr", "sdiv", "srem"])
        a = f.int_value()
        b = str(rng.randint(1, 5)) if op in ("sdiv", "srem", "shl", "ashr", "lshr") else f.int_value()
        r = f.fresh()
        f.emit(f"{r} = {op} {a}, {b}")
        f.ints.append(r)
        if rng.random() < 0.3:
            r2 = f.fresh()
            if rng.random() < 0.5:
                callee = rng.choice(["min", "max"])
                f.emit(f"{r2} = call @{callee}({r}, {f.int_value()})")
            else:
                callee = "abs"
                f.emit(f"{r2} = call @abs({r})")
            self.externs.add(callee)
            f.ints.append(r2)
            return r2
        return r

    def _seg_diamond(self, f: _Fn, callees) -> Optional[str]:
        rng = self.rng
        c = f.fresh("c")
        f.emit(f"{c} = cmp {rng.choice(['slt', 'sle', 'eq', 'ne', 'ult', 'sge'])} {f.int_value()}, {f.int_value()}")
        lt, lf, lj = f.label("t"), f.label("f"), f.label("j")
        f.emit(f"condbr {c}, {lt}, {lf}")
        saved = list(f.ints)
        f.start_block(lt)
        x = self._seg_const(f, callees) or f.int_value()
        from_t = f.current
        f.emit(f"br {lj}")
        f.ints = list(saved)
        f.start_block(lf)
        y = f.int_value()
        from_f = f.current
        f.emit(f"br {lj}")
        f.ints = saved
        f.start_block(lj)
        r = f.fresh()
        f.emit(f"{r} = phi i64 [{from_t}: {x}], [{from_f}: {y}]")
        f.ints.append(r)
        return r

    def _seg_loop(self, f: _Fn, callees) -> Optional[str]:
        t = self._target(f)
        if t is None:
            return None
        self.loops_left -= 1
        base, size = t
        rng = self.rng
        scale = rng.choice([s for s in (1, 2, 4, 8) if s <= size] or [1])
        width = rng.choice([w for w in (1, 2, 4, 8) if w <= scale])
        count = size // scale
        step = rng.choice([1, 1, 1, 2, 3])
        up = rng.random() < 0.7
        # bounds come from inputs or constants so trip counts stay small
        inputs = [p for p, k in f.params if k == "i64"]
        bound = rng.choice(inputs) if inputs and rng.random() < 0.8 else str(rng.randint(-2, count + 2))
        if up:
            init = rng.choice([0, 0, 0, 1, -1])
        else:
            init = rng.choice([count - 1, count - 1, count])
        header, body, exit_ = f.label("lh"), f.label("lb"), f.label("lx")
        pre = f.current
        i, nxt, c, g = f.fresh("i"), f.fresh("i"), f.fresh("c"), f.fresh("g")
        bottom_test = rng.random() < 0.5
        if bottom_test:
            # do-while form: the body is its own header and latch
            f.emit(f"br {body}")
            f.start_block(body)
            f.emit(f"{i} = phi i64 [{pre}: {init}], [{body}: {nxt}]")
        else:
            f.emit(f"br {header}")
            f.start_block(header)
            f.emit(f"{i} = phi i64 [{pre}: {init}], [{body}: {nxt}]")
            f.emit(f"{c} = cmp {'slt' if up else 'sgt'} {i}, {bound}")
            f.emit(f"condbr {c}, {body}, {exit_}")
            f.start_block(body)
        f.emit(f"{g} = gep {base}, {i}, scale {scale}, off 0")
        if rng.random() < 0.6:
            f.emit(f"store.{_WIDTHS[width]} [{g} + 0] = {i}")
        else:
            v = f.fresh()
            f.emit(f"{v} = load.{_WIDTHS[width]} [{g} + 0]")
        f.emit(f"{nxt} = {'add' if up else 'sub'} {i}, {step}")
        if bottom_test:
            f.emit(f"{c} = cmp {'slt' if up else 'sgt'} {nxt}, {bound}")
            f.emit(f"condbr {c}, {body}, {exit_}")
        else:
            f.emit(f"br {header}")
        f.start_block(exit_)
        return None

    def _seg_call(self, f: _Fn, callees) -> Optional[str]:
        t = self._target(f)
        if t is None:
            return None
        base, size = t
        rng = self.rng
        arg = base
        if rng.random() < 0.3 and size > 1:
            arg = f.fresh("g")
            f.emit(f"{arg} = gep {base}, {rng.randint(0, size - 1)}, scale 1, off 0")
        r = f.fresh()
        f.emit(f"{r} = call @{rng.choice(callees)}({arg}, {f.int_value()})")
        f.ints.append(r)
        return r

    def _seg_dyn(self, f: _Fn, callees) -> Optional[str]:
        self.allocas_left -= 1
        m = f.fresh()
        f.emit(f"{m} = and {f.int_value()}, 7")
        k = f.fresh()
        f.emit(f"{k} = add {m}, 1")
        d = f.fresh("d")
        f.emit(f"{d} = alloca {k} x 4")
        # in-bounds for every count of at least one element
        f.emit(f"store.i32 [{d} + 0] = {f.int_value()}")
        r = f.fresh()
        f.emit(f"{r} = load.i32 [{d} + 0]")
        f.ints.append(r)
        return r

    def _seg_ptrstore(self, f: _Fn, callees) -> Optional[str]:
        rng = self.rng
        t = self._target(f)
        if t is None:
            return None
        base, size = t
        choice = rng.random()
        if choice < 0.2:
            self.uses_global = True
            f.emit(f"store.ptr [@gp + 0] = {base}")
            q = f.fresh("q")
            f.emit(f"{q} = load.ptr [@gp + 0]")
        elif choice < 0.3:
            x = f.fresh()
            f.emit(f"{x} = ptrtoint {base}")
            z = f.fresh()
            f.emit(f"{z} = sub {x}, {x}")
            f.ints.append(z)
            if rng.random() < 0.5:
                q = f.fresh("q")
                f.emit(f"{q} = inttoptr {x}")
            else:
                return z
        else:
            # holders only ever see pointer-kind accesses, so no output depends on addresses
            if not f.holders or (self.allocas_left and rng.random() < 0.3):
                if not self.allocas_left:
                    return None
                self.allocas_left -= 1
                h = f.fresh("h")
                hsize = rng.choice([8, 16, 24])
                f.entry.append(f"{h} = alloca {hsize}")
                f.holders.append((h, hsize))
            hname, hsize = rng.choice(f.holders)
            off = rng.choice(range(0, hsize - 7, 8))
            f.emit(f"store.ptr [{hname} + {off}] = {base}")
            q = f.fresh("q")
            f.emit(f"{q} = load.ptr [{hname} + {off}]")
        z, c = f.fresh("z"), f.fresh("c")
        f.emit(f"{z} = const null")
        f.emit(f"{c} = cmp eq {q}, {z}")
        lt, lj = f.label("nn"), f.label("j")
        pre = f.current
        f.emit(f"condbr {c}, {lj}, {lt}")
        f.start_block(lt)
        w = rng.choice([w for w in (1, 2, 4, 8) if w <= size] or [1])
        off = rng.randint(0, max(size - w, 0))
        v = f.fresh()
        f.emit(f"{v} = load.{_WIDTHS[w]} [{q} + {off}]")
        f.emit(f"br {lj}")
        f.start_block(lj)
        r = f.fresh()
        f.emit(f"{r} = phi i64 [{pre}: 0], [{lt}: {v}]")
        f.ints.append(r)
        return r


def generate_program(seed: int, params: GenParams = GenParams()) -> str:
    """Deterministic program text for ``seed``."""
    return ProgramGenerator(random.Random(seed), params).generate()


def random_inputs(rng: random.Random, n: int = 3) -> list[int]:
    return [rng.choice([rng.randint(-3, 20), rng.randint(0, 70), rng.randint(0, 8)]) for _ in range(n)]


# -- fuzz driver ---------------------------------------------------------------------


@dataclass
class Finding:
    seed: int
    args: list
    kind: str  # safe-violation | guarded-escape | spurious-trap | divergence
    detail: str

    def to_json(self) -> dict:
        return {"seed": self.seed, "args": self.args, "kind": self.kind, "detail": self.detail}


@dataclass
class FuzzReport:
    programs: int = 0
    runs: int = 0
    findings: list[Finding] = field(default_factory=list)
    class_counts: dict = field(default_factory=dict)
    guarded_oob: int = 0  # runs where the oracle saw a Guarded allocation go out of bounds
    guarded_trapped: int = 0
    oracle_violations: int = 0
    traps: int = 0
    mutation: Optional[str] = None

    def count(self, kind: str) -> int:
        return sum(1 for f in self.findings if f.kind == kind)

    @property
    def safe_violations(self) -> int:
        return self.count("safe-violation")

    @property
    def guarded_escapes(self) -> int:
        return self.count("guarded-escape")

    def to_json(self) -> dict:
        return {
            "programs": self.programs,
            "runs": self.runs,
            "mutation": self.mutation,
            "class_counts": dict(sorted(self.class_counts.items())),
            "oracle_violations": self.oracle_violations,
            "traps": self.traps,
            "guarded_oob": self.guarded_oob,
            "guarded_trapped": self.guarded_trapped,
            "findings_by_kind": {k: self.count(k) for k in ("safe-violation", "guarded-escape", "spurious-trap", "divergence")},
            "findings": [f.to_json() for f in self.findings],
        }


def check_run(seed: int, args: list, classes: dict, oracle: OracleReport, tagged) -> list[Finding]:
    """Compare one oracle run with one tagged run of the instrumented program."""
    out = []
    for v in oracle.violations:
        cls = classes.get(v.site)
        if cls in (PROVABLE, IMPLICIT):
            out.append(Finding(seed, args, "safe-violation", f"{cls} {v.site[0]}:{v.site[1]} {v.kind} at offset {v.offset}"))
            break
    guarded = [v for v in oracle.violations if classes.get(v.site) == GUARDED]
    if guarded and not tagged.trapped:
        v = guarded[0]
        out.append(Finding(seed, args, "guarded-escape", f"{v.site[0]}:{v.site[1]} {v.kind} at offset {v.offset} without a trap"))
    if not oracle.violations and oracle.status == "finished":
        if tagged.trapped:
            out.append(Finding(seed, args, "spurious-trap", tagged.trap.describe()))
        elif tagged.finished and (tagged.value != oracle.value or tagged.output != oracle.output):
            out.append(Finding(seed, args, "divergence", f"value {tagged.value} vs oracle {oracle.value}"))
    return out


def fuzz_conservativeness(
    count: int = 1000,
    seed: int = 0,
    inputs_per_program: int = 4,
    params: GenParams = GenParams(),
    mutation: Optional[str] = None,
    elision: bool = True,
    step_budget: int = FUZZ_STEP_BUDGET,
) -> FuzzReport:
    """Generate, classify, instrument and run ``count`` programs against the bounds oracle."""
    report = FuzzReport(mutation=mutation)
    cfg = RunConfig(mte=True, step_budget=step_budget)
    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 5000))
    try:
        for k in range(count):
            s = seed * 1_000_003 + k
            program = parse_program(generate_program(s, params))
            result = analyze(program, AnalysisOptions(mutation=mutation))
            instrumented, _ = instrument(program, result, InstrumentOptions(elision=elision))
            classes = {key: a.cls for key, a in result.allocas.items()}
            for c in classes.values():
                report.class_counts[c] = report.class_counts.get(c, 0) + 1
            report.programs += 1
            rng = random.Random(s)
            for _ in range(inputs_per_program):
                args = random_inputs(rng)
                oracle = run_oracle(program, args, step_budget)
                tagged = run(instrumented, args, cfg)
                report.runs += 1
                report.oracle_violations += bool(oracle.violations)
                report.traps += tagged.trapped
                if any(classes.get(v.site) == GUARDED for v in oracle.violations):
                    report.guarded_oob += 1
                    report.guarded_trapped += tagged.trapped
                report.findings.extend(check_run(s, args, classes, oracle, tagged))
    finally:
        sys.setrecursionlimit(limit)
    return report
