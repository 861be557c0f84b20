"""Small-step interpreter for plain and instrumented programs on the tagged machine.

Each function is compiled once per run into closures over the machine
state.  Calls use an explicit frame stack, so deep recursion in the
simulated program never touches the Python stack.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .ir.nodes import (
    INT,
    PTR,
    Alloca,
    Branch,
    Call,
    ClearTopTagBit,
    Cmp,
    CondBranch,
    Const,
    Function,
    Gep,
    IntOp,
    IntToPtr,
    KeepTag,
    Load,
    MemGuard,
    Output,
    Program,
    PtrToInt,
    RetagFrame,
    Return,
    SetTag,
    Store,
    TagPtr,
    TfpLoad,
    is_global,
    is_local,
)
from .mte import (
    ADDR_MASK,
    ALLOWED,
    GLOBAL_TAG,
    GRANULE,
    SAFE_DEFAULT,
    TAG_BITS,
    TOP_TAG_BIT,
    U64,
    MachineFault,
    MteConfig,
    TagMemory,
    Trap,
    check_access,
    granule_round,
    is_pointer_safe_tag,
    set_allocation_tags,
    with_tag,
)

GLOBAL_BASE = 0x10000
STACK_TOP = 1 << 40
STACK_SIZE = 1 << 20
DEFAULT_STEP_BUDGET = 10_000_000
DEFAULT_MAX_DEPTH = 512

FINISHED = "finished"
TRAPPED = "trapped"
EXHAUSTED = "exhausted"

_SIGN = 1 << 63
_WRAP = 1 << 64


def s64(x: int) -> int:
    x &= U64
    return x - _WRAP if x & _SIGN else x


@dataclass(frozen=True)
class RunConfig:
    mte: bool = True
    wildcard: bool = False
    step_budget: int = DEFAULT_STEP_BUDGET
    max_depth: int = DEFAULT_MAX_DEPTH
    trace: bool = False
    check_hygiene: bool = False


@dataclass
class Outcome:
    status: str
    value: Optional[int] = None
    trap: Optional[Trap] = None
    output: list = field(default_factory=list)
    steps: int = 0
    trace: Optional[list] = None

    @property
    def finished(self) -> bool:
        return self.status == FINISHED

    @property
    def trapped(self) -> bool:
        return self.status == TRAPPED

    def to_json(self) -> dict:
        out = {"status": self.status, "value": self.value, "output": list(self.output), "steps": self.steps}
        if self.trap is not None:
            t = self.trap
            out["trap"] = {
                "kind": t.kind,
                "address": t.address,
                "address_tag": t.address_tag,
                "allocation_tag": t.allocation_tag,
                "function": t.function,
                "index": t.index,
                "message": t.message,
            }
        return out


@dataclass
class Breakpoint:
    """Calls ``action(machine)`` before the ``hit``-th execution of ``function``'s flat instruction ``index``."""

    function: str
    index: int
    hit: int
    action: Callable


class _Fault(Exception):
    """Non-tag runtime errors raised from compiled closures."""

    def __init__(self, kind: str, message: str = ""):
        self.kind = kind
        self.message = message


def _builtin_abs(args):
    return s64(abs(args[0]))


BUILTINS: dict[str, Callable] = {
    "abs": _builtin_abs,
    "min": lambda a: min(a),
    "max": lambda a: max(a),
    "sink_i64": lambda a: 0,
}


class Frame:
    __slots__ = ("fn", "env", "base", "top", "block", "pc", "ret_to", "slots")

    def __init__(self, fn, env, base, top, slots):
        self.fn = fn
        self.env = env
        self.base = base
        self.top = top
        self.block = None
        self.pc = 0
        self.ret_to = None
        self.slots = slots


class _Block:
    __slots__ = ("label", "phis", "ops", "flat", "term", "term_flat")


class _CompiledFn:
    __slots__ = ("fn", "name", "blocks", "entry", "frame_size", "slots", "sizes", "params", "instrumented", "tagged_slots")


class Machine:
    """Memory, tags and frames of one run.  Adversary actions operate on this object."""

    def __init__(self, program: Program, config: RunConfig = RunConfig()):
        self.program = program
        self.config = config
        self.mte_cfg = MteConfig(wildcard_enabled=config.wildcard)
        self.tags = TagMemory()
        gsize = sum(granule_round(max(g.size, 1)) for g in program.globals) or GRANULE
        self.global_region = self.tags.map("globals", GLOBAL_BASE, granule_round(gsize), GLOBAL_TAG)
        self.stack_region = self.tags.map("stack", STACK_TOP - STACK_SIZE, STACK_SIZE, SAFE_DEFAULT)
        self.global_addr: dict[str, int] = {}
        cursor = GLOBAL_BASE
        for g in program.globals:
            self.global_addr[g.name] = with_tag(cursor, GLOBAL_TAG)
            if g.initial:
                o = cursor - GLOBAL_BASE
                self.global_region.data[o : o + len(g.initial)] = g.initial
            cursor += granule_round(max(g.size, 1))
        self.sp = STACK_TOP
        self.frames: list[Frame] = []
        self.output: list[int] = []
        self.trace: Optional[list] = [] if config.trace else None
        self._trace_hook = self.trace.append if self.trace is not None else None
        self.externs = program.extern_map()
        self.compiled: dict[str, _CompiledFn] = {}
        for f in program.functions:
            self.compiled[f.name] = self._compile(f)

    # -- raw memory ------------------------------------------------------------

    def region(self, addr: int, width: int):
        for r in (self.stack_region, self.global_region):
            if r.base <= addr and addr + width <= r.end:
                return r
        raise MachineFault(Trap("unmapped", addr, message=f"access of {width} bytes"))

    def read_bytes(self, addr: int, n: int) -> bytes:
        addr &= ADDR_MASK
        r = self.region(addr, n)
        o = addr - r.base
        return bytes(r.data[o : o + n])

    def write_bytes(self, addr: int, data: bytes) -> None:
        addr &= ADDR_MASK
        r = self.region(addr, len(data))
        o = addr - r.base
        r.data[o : o + len(data)] = data

    def tag_at(self, addr: int) -> int:
        return self.tags.tag_at(addr & ADDR_MASK)

    def _check(self, p: int, width: int, via_fb: bool, op: str) -> None:
        v = check_access(self.tags, p, width, self.mte_cfg, via_fb, op, self._trace_hook)
        if v is not ALLOWED:
            raise MachineFault(v)

    def slot_span(self, ref: str) -> tuple[int, int]:
        """Untagged address and size of ``@global`` or ``function:%slot`` in the innermost live frame."""
        if ref.startswith("@"):
            g = self.program.global_map().get(ref[1:])
            if g is None:
                raise KeyError(f"no global {ref}")
            return self.global_addr[g.name] & ADDR_MASK, g.size
        function, _, name = ref.partition(":")
        for fr in reversed(self.frames):
            if fr.fn.name == function:
                if name in fr.slots:
                    return fr.base + fr.slots[name], fr.fn.sizes[name]
                raise KeyError(f"{name} is not a static slot of @{function}")
        raise KeyError(f"@{function} has no live frame")

    def slot_at(self, addr: int) -> Optional[tuple[str, str, int, int]]:
        """``(function, slot, base, size)`` of the static slot or global holding ``addr``."""
        addr &= ADDR_MASK
        for fr in reversed(self.frames):
            for name, off in fr.slots.items():
                base = fr.base + off
                if base <= addr < base + fr.fn.sizes[name]:
                    return fr.fn.name, name, base, fr.fn.sizes[name]
        for g in self.program.globals:
            base = self.global_addr[g.name] & ADDR_MASK
            if base <= addr < base + g.size:
                return "@", g.name, base, g.size
        return None

    # -- compilation -------------------------------------------------------------

    def _compile(self, fn: Function) -> _CompiledFn:
        cf = _CompiledFn()
        cf.fn = fn
        cf.name = fn.name
        cf.params = [p.name for p in fn.params]
        cf.instrumented = fn.frame_size is not None
        slots: dict[str, int] = {}
        sizes: dict[str, int] = {}
        implicit: set[str] = set()
        tagged_slots: list[tuple[int, int]] = []
        if cf.instrumented:
            for b in fn.blocks:
                for ins in b.body:
                    if isinstance(ins, Alloca) and not ins.is_dynamic:
                        slots[ins.result] = ins.at
                        sizes[ins.result] = ins.static_bytes
                        if ins.implicit:
                            implicit.add(ins.result)
                        if ins.tagged:
                            tagged_slots.append((ins.at, ins.static_bytes))
                    elif isinstance(ins, MemGuard):
                        slots[ins.result] = ins.at
                        sizes[ins.result] = ins.size
                        tagged_slots.append((ins.at, ins.size))
            cf.frame_size = fn.frame_size
        else:
            cursor = 0
            for b in fn.blocks:
                for ins in b.body:
                    if isinstance(ins, Alloca) and not ins.is_dynamic:
                        cursor = -(-cursor // 8) * 8
                        slots[ins.result] = cursor
                        sizes[ins.result] = ins.static_bytes
                        cursor += ins.static_bytes
            cf.frame_size = granule_round(cursor)
        cf.slots = slots
        cf.sizes = sizes
        cf.tagged_slots = tagged_slots
        blocks = {}
        flat = 0
        for b in fn.blocks:
            cb = _Block()
            cb.label = b.label
            cb.phis = b.phis
            cb.ops = []
            cb.flat = []
            for ins in b.body:
                cb.ops.append(self._compile_ins(ins, fn, slots, implicit))
                cb.flat.append(flat)
                flat += 1
            cb.term = b.terminator
            cb.term_flat = flat
            flat += 1
            blocks[b.label] = cb
        cf.blocks = blocks
        cf.entry = blocks[fn.blocks[0].label]
        return cf

    def _compile_ins(self, ins, fn: Function, slots: dict, implicit: set):
        """A ``(kind, payload)`` pair: kind 0 is a closure ``f(frame)``, kind 1 a call."""
        mte = self.config.mte
        gaddr = self.global_addr

        def operand(v):
            if is_local(v):
                return True, v
            if is_global(v):
                return False, gaddr[v[1:]]
            return False, v

        if isinstance(ins, Call):
            return 1, ins

        if isinstance(ins, Load):
            loc, a = operand(ins.addr)
            off, width, res = ins.offset, ins.width, ins.result
            signed = width == 8 and ins.kind == INT
            via = ins.addr in implicit
            machine = self

            def load(fr):
                p = ((fr.env[a] if loc else a) + off) & U64
                if mte:
                    machine._check(p, width, via, "load")
                addr = p & ADDR_MASK
                r = machine.region(addr, width)
                o = addr - r.base
                fr.env[res] = int.from_bytes(r.data[o : o + width], "little", signed=signed)

            return 0, load

        if isinstance(ins, Store):
            loc, a = operand(ins.addr)
            vloc, v = operand(ins.value)
            off, width = ins.offset, ins.width
            mask = (1 << (8 * width)) - 1
            via = ins.addr in implicit
            machine = self

            def store(fr):
                env = fr.env
                p = ((env[a] if loc else a) + off) & U64
                if mte:
                    machine._check(p, width, via, "store")
                addr = p & ADDR_MASK
                r = machine.region(addr, width)
                o = addr - r.base
                r.data[o : o + width] = ((env[v] if vloc else v) & mask).to_bytes(width, "little")

            return 0, store

        if isinstance(ins, Gep):
            bloc, b = operand(ins.base)
            iloc, i = operand(ins.index)
            scale, goff, res = ins.scale, ins.offset, ins.result

            def gep(fr):
                env = fr.env
                env[res] = ((env[b] if bloc else b) + (env[i] if iloc else i) * scale + goff) & U64

            return 0, gep

        if isinstance(ins, IntOp):
            return 0, _compile_intop(ins, operand)

        if isinstance(ins, Cmp):
            return 0, _compile_cmp(ins, operand)

        if isinstance(ins, Const):
            res = ins.result
            val = ins.value if ins.kind == PTR else s64(ins.value)

            def const(fr):
                fr.env[res] = val

            return 0, const

        if isinstance(ins, Alloca):
            res = ins.result
            if not ins.is_dynamic:
                at = slots[res]

                def alloca(fr):
                    fr.env[res] = with_tag(fr.base + at, SAFE_DEFAULT)

                return 0, alloca
            nloc, n = operand(ins.size)
            elem = ins.elem_size
            machine = self

            def dyn_alloca(fr):
                count = fr.env[n] if nloc else n
                size = count * elem
                if size < 0:
                    raise _Fault("bad-alloca", f"negative allocation size {size}")
                new_sp = machine.sp - granule_round(size)
                if new_sp < machine.stack_region.base:
                    raise _Fault("stack-overflow", "dynamic allocation exhausted the stack")
                machine.sp = new_sp
                o = new_sp - machine.stack_region.base
                machine.stack_region.data[o : o + granule_round(size)] = bytes(granule_round(size))
                fr.env[res] = with_tag(new_sp, SAFE_DEFAULT)

            return 0, dyn_alloca

        if isinstance(ins, MemGuard):
            res, at = ins.result, ins.at

            def memguard(fr):
                fr.env[res] = with_tag(fr.base + at, SAFE_DEFAULT)

            return 0, memguard

        if isinstance(ins, (IntToPtr, PtrToInt)):
            loc, v = operand(ins.value)
            res = ins.result
            to_ptr = isinstance(ins, IntToPtr)

            def cast(fr):
                x = fr.env[v] if loc else v
                fr.env[res] = x & U64 if to_ptr else s64(x)

            return 0, cast

        if isinstance(ins, Output):
            loc, v = operand(ins.value)
            out = self.output

            def output(fr):
                out.append(fr.env[v] if loc else v)

            return 0, output

        if isinstance(ins, SetTag):
            loc, a = operand(ins.addr)
            sloc, s = operand(ins.size)
            tm = self.tags

            def settag(fr):
                p = fr.env[a] if loc else a
                size = fr.env[s] if sloc else s
                if size <= 0:
                    return
                addr = p & ADDR_MASK
                lo = addr & ~(GRANULE - 1)
                set_allocation_tags(tm, lo, addr + size - lo, (p >> 56) & 0xF)

            return 0, settag

        if isinstance(ins, TagPtr):
            loc, b = operand(ins.base)
            res, tag = ins.result, ins.tag

            def tagptr(fr):
                x = fr.env[b] if loc else b
                fr.env[res] = with_tag(x, tag) if mte else x

            return 0, tagptr

        if isinstance(ins, ClearTopTagBit):
            loc, v = operand(ins.value)
            res = ins.result

            def cleartag(fr):
                x = fr.env[v] if loc else v
                fr.env[res] = x & ~TOP_TAG_BIT & U64 if mte else x

            return 0, cleartag

        if isinstance(ins, TfpLoad):
            loc, v = operand(ins.value)
            aloc, a = operand(ins.addr)
            res, off = ins.result, ins.offset
            machine = self

            def tfpload(fr):
                env = fr.env
                x = env[v] if loc else v
                if not mte:
                    env[res] = x
                    return
                src = ((env[a] if aloc else a) + off) & ADDR_MASK
                t = machine.tags.tag_at(src)
                env[res] = x if is_pointer_safe_tag(t) else x & ~TOP_TAG_BIT & U64

            return 0, tfpload

        if isinstance(ins, KeepTag):
            loc, v = operand(ins.value)
            sloc, s = operand(ins.source)
            res = ins.result

            def keeptag(fr):
                env = fr.env
                x = env[v] if loc else v
                src = env[s] if sloc else s
                env[res] = (x & ~TAG_BITS & U64) | (src & TAG_BITS) if mte else x

            return 0, keeptag

        if isinstance(ins, RetagFrame):
            machine = self

            def retag(fr):
                if fr.top > machine.sp:
                    set_allocation_tags(machine.tags, machine.sp, fr.top - machine.sp, SAFE_DEFAULT)

            return 0, retag

        raise TypeError(f"cannot execute {ins!r}")

    # -- execution ---------------------------------------------------------------

    def _enter(self, cf: _CompiledFn, args: list) -> Frame:
        if len(self.frames) >= self.config.max_depth:
            raise _Fault("stack-depth", f"call depth exceeds {self.config.max_depth}")
        top = self.sp
        base = top - cf.frame_size
        if base < self.stack_region.base:
            raise _Fault("stack-overflow", "frame does not fit on the stack")
        o = base - self.stack_region.base
        self.stack_region.data[o : o + cf.frame_size] = bytes(cf.frame_size)
        self.sp = base
        fr = Frame(cf, dict(zip(cf.params, args)), base, top, cf.slots)
        fr.block = cf.entry
        fr.pc = 0
        self.frames.append(fr)
        return fr

    def _hygiene(self, fr: Frame) -> None:
        r = self.stack_region
        lo = (fr.base - r.base) >> 4
        hi = (fr.top - r.base) >> 4
        bad = [i for i in range(lo, hi) if r.tags[i] != SAFE_DEFAULT]
        if bad:
            raise AssertionError(f"@{fr.fn.name} returned with {len(bad)} non-default granules in its frame")

    def run(self, args=(), breakpoints=()) -> Outcome:
        entry = self.compiled.get(self.program.entry)
        if entry is None:
            raise ValueError(f"entry @{self.program.entry} not defined")
        args = list(args)
        if len(args) != len(entry.params):
            raise ValueError(f"@{entry.name} takes {len(entry.params)} arguments, got {len(args)}")
        args = [s64(a) for a in args]
        bps: dict[tuple[str, int], list] = {}
        for bp in breakpoints:
            bps.setdefault((bp.function, bp.index), []).append(bp)
        hits: dict[tuple[str, int], int] = {}
        budget = self.config.step_budget
        steps = 0
        trace = self.trace
        hygiene = self.config.check_hygiene
        fr: Optional[Frame] = None
        where = (entry.name, 0)

        def fire(key):
            n = hits.get(key, 0) + 1
            hits[key] = n
            for bp in bps[key]:
                if bp.hit == n:
                    bp.action(self)

        try:
            fr = self._enter(entry, args)
            while True:
                block = fr.block
                ops = block.ops
                flat = block.flat
                env = fr.env
                fname = fr.fn.name
                pc = fr.pc
                n = len(ops)
                called = False
                while pc < n:
                    steps += 1
                    if steps > budget:
                        return Outcome(EXHAUSTED, None, None, self.output, steps - 1, trace)
                    if bps or trace is not None:
                        where = (fname, flat[pc])
                        if trace is not None:
                            trace.append({"event": "step", "function": fname, "index": flat[pc]})
                        if where in bps:
                            fire(where)
                    kind, op = ops[pc]
                    if kind == 0:
                        where = (fname, flat[pc])
                        op(fr)
                        pc += 1
                        continue
                    # call
                    where = (fname, flat[pc])
                    argv = [env[a] if is_local(a) else self.global_addr[a[1:]] if is_global(a) else a for a in op.args]
                    callee = self.compiled.get(op.callee)
                    if callee is None:
                        env_result = self._call_extern(op, argv)
                        if op.result is not None:
                            env[op.result] = env_result
                        pc += 1
                        continue
                    fr.pc = pc + 1
                    new = self._enter(callee, argv)
                    new.ret_to = op.result
                    fr = new
                    called = True
                    break
                if called:
                    continue
                # terminator
                steps += 1
                if steps > budget:
                    return Outcome(EXHAUSTED, None, None, self.output, steps - 1, trace)
                where = (fname, block.term_flat)
                if bps or trace is not None:
                    if trace is not None:
                        trace.append({"event": "step", "function": fname, "index": block.term_flat})
                    if where in bps:
                        fire(where)
                term = block.term
                if isinstance(term, Branch):
                    self._jump(fr, block.label, term.target)
                elif isinstance(term, CondBranch):
                    c = env[term.cond] if is_local(term.cond) else term.cond
                    self._jump(fr, block.label, term.if_true if c != 0 else term.if_false)
                else:
                    v = term.value
                    if v is not None:
                        v = env[v] if is_local(v) else self.global_addr[v[1:]] if is_global(v) else v
                    if hygiene and fr.fn.instrumented:
                        self._hygiene(fr)
                    self.frames.pop()
                    self.sp = fr.top
                    if not self.frames:
                        return Outcome(FINISHED, v, None, self.output, steps, trace)
                    ret_to = fr.ret_to
                    fr = self.frames[-1]
                    if ret_to is not None:
                        fr.env[ret_to] = v
        except MachineFault as e:
            t = e.trap
            trap = Trap(t.kind, t.address, t.address_tag, t.allocation_tag, t.message, where[0], where[1])
            return Outcome(TRAPPED, None, trap, self.output, steps, trace)
        except _Fault as e:
            return Outcome(TRAPPED, None, Trap(e.kind, message=e.message, function=where[0], index=where[1]), self.output, steps, trace)

    def _jump(self, fr: Frame, pred: str, target: str) -> None:
        b = fr.fn.blocks[target]
        if b.phis:
            env = fr.env
            vals = []
            for phi in b.phis:
                for lbl, v in phi.incoming:
                    if lbl == pred:
                        vals.append(env[v] if is_local(v) else self.global_addr[v[1:]] if is_global(v) else v)
                        break
            for phi, v in zip(b.phis, vals):
                env[phi.result] = v
        fr.block = b
        fr.pc = 0

    def _call_extern(self, call: Call, argv: list):
        fn = BUILTINS.get(call.callee)
        if fn is None:
            raise _Fault("unknown-extern", f"no implementation for @{call.callee}")
        return fn(argv)


def _compile_intop(ins: IntOp, operand):
    lloc, a = operand(ins.lhs)
    rloc, b = operand(ins.rhs)
    res, op = ins.result, ins.op
    if op == "add":

        def f(fr):
            env = fr.env
            x = (env[a] if lloc else a) + (env[b] if rloc else b)
            env[res] = x if -_SIGN <= x < _SIGN else s64(x)

    elif op == "sub":

        def f(fr):
            env = fr.env
            x = (env[a] if lloc else a) - (env[b] if rloc else b)
            env[res] = x if -_SIGN <= x < _SIGN else s64(x)

    elif op == "mul":

        def f(fr):
            env = fr.env
            env[res] = s64((env[a] if lloc else a) * (env[b] if rloc else b))

    else:
        fn = _INT_OPS[op]

        def f(fr):
            env = fr.env
            env[res] = fn(env[a] if lloc else a, env[b] if rloc else b)

    return f


def _sdiv(x: int, y: int) -> int:
    if y == 0:
        raise _Fault("div-zero", "division by zero")
    q = abs(x) // abs(y)
    return s64(q if (x < 0) == (y < 0) else -q)


def _srem(x: int, y: int) -> int:
    if y == 0:
        raise _Fault("div-zero", "remainder by zero")
    return s64(x - y * _sdiv(x, y))


_INT_OPS = {
    "sdiv": _sdiv,
    "srem": _srem,
    "and": lambda x, y: s64(x & y),
    "or": lambda x, y: s64(x | y),
    "xor": lambda x, y: s64(x ^ y),
    "shl": lambda x, y: s64(x << (y & 63)),
    "lshr": lambda x, y: s64((x & U64) >> (y & 63)),
    "ashr": lambda x, y: s64(x) >> (y & 63),
}

_RELATIONS = {
    "eq": lambda x, y: x == y,
    "ne": lambda x, y: x != y,
    "slt": lambda x, y: s64(x) < s64(y),
    "sle": lambda x, y: s64(x) <= s64(y),
    "sgt": lambda x, y: s64(x) > s64(y),
    "sge": lambda x, y: s64(x) >= s64(y),
    "ult": lambda x, y: (x & U64) < (y & U64),
    "ule": lambda x, y: (x & U64) <= (y & U64),
    "ugt": lambda x, y: (x & U64) > (y & U64),
    "uge": lambda x, y: (x & U64) >= (y & U64),
}


def _compile_cmp(ins: Cmp, operand):
    lloc, a = operand(ins.lhs)
    rloc, b = operand(ins.rhs)
    res = ins.result
    fn = _RELATIONS[ins.relation]

    def f(fr):
        env = fr.env
        env[res] = 1 if fn(env[a] if lloc else a, env[b] if rloc else b) else 0

    return f


def run(program: Program, args=(), config: RunConfig = RunConfig(), breakpoints=()) -> Outcome:
    """Execute ``program`` from its entry function."""
    return Machine(program, config).run(args, breakpoints)


@dataclass
class PairedVerdict:
    equal: bool
    plain: Outcome
    instrumented: Outcome
    reason: str = ""


def run_paired(p_plain: Program, p_instr: Program, args=(), config: RunConfig = RunConfig()) -> PairedVerdict:
    """Compare a tag-blind run of the original with a checked run of the instrumented program."""
    plain = run(p_plain, args, RunConfig(mte=False, step_budget=config.step_budget, max_depth=config.max_depth))
    instr = run(p_instr, args, RunConfig(mte=True, wildcard=config.wildcard, step_budget=config.step_budget, max_depth=config.max_depth, check_hygiene=config.check_hygiene))
    if instr.trapped:
        return PairedVerdict(False, plain, instr, f"instrumented run trapped: {instr.trap.describe()}")
    if not plain.finished or not instr.finished:
        return PairedVerdict(False, plain, instr, f"runs did not both finish ({plain.status}, {instr.status})")
    if plain.value != instr.value:
        return PairedVerdict(False, plain, instr, f"return values differ ({plain.value} vs {instr.value})")
    if plain.output != instr.output:
        return PairedVerdict(False, plain, instr, "output logs differ")
    return PairedVerdict(True, plain, instr)
