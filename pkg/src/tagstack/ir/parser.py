"""Line-oriented parser for the textual IR.

Each instruction occupies one line.  ``;`` starts a comment.  The grammar
is small enough that every line is tokenized and then consumed by a
hand-written recursive-descent routine selected by its leading token.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .nodes import (
    CMP_RELATIONS,
    INT,
    INT_OPS,
    MEM_TYPES,
    PTR,
    RESET_TAGS,
    Alloca,
    BasicBlock,
    Branch,
    Call,
    ClearTopTagBit,
    Cmp,
    CondBranch,
    Const,
    Diagnostic,
    Extern,
    Function,
    Gep,
    GlobalDef,
    IntOp,
    IntToPtr,
    IRError,
    KeepTag,
    Load,
    MemGuard,
    Output,
    Param,
    Phi,
    Program,
    PtrToInt,
    RetagFrame,
    Return,
    SetTag,
    Store,
    TagPtr,
    TfpLoad,
)

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<bytes>x"[0-9a-fA-F]*")
  | (?P<local>%[A-Za-z0-9_.]+)
  | (?P<global>@[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<number>-?(?:0[xX][0-9a-fA-F]+|0[bB][01]+|[0-9]+))
  | (?P<arrow>->)
  | (?P<ellipsis>\.\.\.)
  | (?P<word>[A-Za-z_][A-Za-z0-9_.\-]*)
  | (?P<punct>[\[\](){},:+\-=])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    col: int


class ParseError(IRError):
    pass


def _tokenize(line: str, lineno: int) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(line):
        m = _TOKEN.match(line, pos)
        if m is None:
            raise ParseError([Diagnostic("error", f"unexpected character {line[pos]!r}", line=lineno, column=pos + 1)])
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), pos + 1))
        pos = m.end()
    return toks


class _Line:
    """Cursor over the tokens of one source line."""

    def __init__(self, toks: list[_Tok], lineno: int):
        self.toks = toks
        self.i = 0
        self.lineno = lineno

    def error(self, msg: str, tok: Optional[_Tok] = None) -> ParseError:
        if tok is None:
            tok = self.toks[self.i] if self.i < len(self.toks) else None
        col = tok.col if tok else (self.toks[-1].col + len(self.toks[-1].text) if self.toks else 1)
        return ParseError([Diagnostic("error", msg, line=self.lineno, column=col)])

    def peek(self) -> Optional[_Tok]:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def at_end(self) -> bool:
        return self.i >= len(self.toks)

    def next(self, what: str = "token") -> _Tok:
        if self.i >= len(self.toks):
            raise self.error(f"expected {what}, found end of line")
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.next(repr(text))
        if tok.text != text:
            raise self.error(f"expected {text!r}, found {tok.text!r}", tok)
        return tok

    def accept(self, text: str) -> bool:
        tok = self.peek()
        if tok is not None and tok.text == text:
            self.i += 1
            return True
        return False

    def local(self) -> str:
        tok = self.next("local value")
        if tok.kind != "local":
            raise self.error(f"expected local value, found {tok.text!r}", tok)
        return tok.text

    def glob(self) -> str:
        tok = self.next("global name")
        if tok.kind != "global":
            raise self.error(f"expected global name, found {tok.text!r}", tok)
        return tok.text[1:]

    def word(self) -> str:
        tok = self.next("identifier")
        if tok.kind != "word":
            raise self.error(f"expected identifier, found {tok.text!r}", tok)
        return tok.text

    def number(self) -> int:
        tok = self.next("integer")
        if tok.kind != "number":
            raise self.error(f"expected integer, found {tok.text!r}", tok)
        return int(tok.text, 0)

    def operand(self):
        tok = self.next("operand")
        if tok.kind == "local":
            return tok.text
        if tok.kind == "global":
            return tok.text
        if tok.kind == "number":
            return int(tok.text, 0)
        raise self.error(f"expected operand, found {tok.text!r}", tok)

    def kind(self) -> str:
        tok = self.next("type")
        if tok.text not in (INT, PTR):
            raise self.error(f"expected i64 or ptr, found {tok.text!r}", tok)
        return tok.text

    def address(self) -> tuple:
        """``[%p + 4]`` / ``[%p - 4]`` / ``[%p]``"""
        self.expect("[")
        base = self.operand()
        offset = 0
        if self.accept("+"):
            offset = self.number()
        elif self.accept("-"):
            offset = -self.number()
        self.expect("]")
        return base, offset

    def done(self) -> None:
        if not self.at_end():
            raise self.error(f"unexpected {self.peek().text!r}")


def _mem_type(ln: _Line, mnemonic: _Tok, prefix: str) -> tuple[int, str]:
    suffix = mnemonic.text[len(prefix):]
    if suffix not in MEM_TYPES:
        raise ln.error(f"unknown access type {suffix!r}", mnemonic)
    return MEM_TYPES[suffix]


def _parse_instruction(ln: _Line):
    first = ln.peek()
    result = None
    if first.kind == "local":
        result = ln.local()
        ln.expect("=")
    mn = ln.next("instruction")
    op = mn.text
    if mn.kind != "word":
        raise ln.error(f"expected instruction, found {op!r}", mn)

    def needs_result():
        if result is None:
            raise ln.error(f"'{op}' produces a value and needs a result", mn)

    def no_result():
        if result is not None:
            raise ln.error(f"'{op}' does not produce a value", mn)

    if op == "phi":
        needs_result()
        kind = ln.kind()
        incoming = []
        while True:
            ln.expect("[")
            label = ln.word()
            ln.expect(":")
            incoming.append((label, ln.operand()))
            ln.expect("]")
            if not ln.accept(","):
                break
        ln.done()
        return Phi(result, kind, tuple(incoming))
    if op == "alloca":
        needs_result()
        size = ln.operand()
        elem = 1
        if ln.accept("x"):
            elem = ln.number()
        tagged = implicit = False
        at = None
        while not ln.at_end():
            w = ln.word()
            if w == "tagged":
                tagged = True
            elif w == "implicit":
                implicit = True
            elif w == "at":
                at = ln.number()
            else:
                raise ln.error(f"unknown alloca attribute {w!r}")
        return Alloca(result, size, elem, tagged, implicit, at)
    if op.startswith("load."):
        needs_result()
        width, kind = _mem_type(ln, mn, "load.")
        addr, off = ln.address()
        ln.done()
        return Load(result, addr, off, width, kind)
    if op.startswith("store."):
        no_result()
        width, kind = _mem_type(ln, mn, "store.")
        addr, off = ln.address()
        ln.expect("=")
        value = ln.operand()
        ln.done()
        return Store(addr, off, width, kind, value)
    if op == "gep":
        needs_result()
        base = ln.operand()
        ln.expect(",")
        index = ln.operand()
        scale, offset = 1, 0
        while ln.accept(","):
            w = ln.word()
            if w == "scale":
                scale = ln.number()
            elif w == "off":
                offset = ln.number()
            else:
                raise ln.error(f"unknown gep field {w!r}")
        ln.done()
        return Gep(result, base, index, scale, offset)
    if op == "call":
        callee = ln.glob()
        ln.expect("(")
        args = []
        if not ln.accept(")"):
            while True:
                args.append(ln.operand())
                if ln.accept(")"):
                    break
                ln.expect(",")
        ln.done()
        return Call(result, callee, tuple(args))
    if op in ("inttoptr", "ptrtoint", "cleartag"):
        needs_result()
        value = ln.operand()
        ln.done()
        return {"inttoptr": IntToPtr, "ptrtoint": PtrToInt, "cleartag": ClearTopTagBit}[op](result, value)
    if op in INT_OPS:
        needs_result()
        lhs = ln.operand()
        ln.expect(",")
        rhs = ln.operand()
        ln.done()
        return IntOp(result, op, lhs, rhs)
    if op == "cmp":
        needs_result()
        rel = ln.word()
        if rel not in CMP_RELATIONS:
            raise ln.error(f"unknown relation {rel!r}")
        lhs = ln.operand()
        ln.expect(",")
        rhs = ln.operand()
        ln.done()
        return Cmp(result, rel, lhs, rhs)
    if op == "const":
        needs_result()
        tok = ln.peek()
        if tok is not None and tok.text == "null":
            ln.next()
            ln.done()
            return Const(result, 0, PTR)
        if tok is not None and tok.text == "ptr":
            ln.next()
            value = ln.number()
            ln.done()
            return Const(result, value & (2**64 - 1), PTR)
        value = ln.number()
        ln.done()
        return Const(result, value, INT)
    if op == "output":
        no_result()
        value = ln.operand()
        ln.done()
        return Output(value)
    if op == "settag":
        no_result()
        addr = ln.operand()
        ln.expect(",")
        size = ln.operand()
        ln.done()
        return SetTag(addr, size)
    if op == "tagptr":
        needs_result()
        base = ln.operand()
        ln.expect(",")
        tag = ln.number()
        ln.done()
        return TagPtr(result, base, tag)
    if op == "tfpload":
        needs_result()
        value = ln.operand()
        ln.expect(",")
        addr, off = ln.address()
        ln.done()
        return TfpLoad(result, value, addr, off)
    if op == "keeptag":
        needs_result()
        value = ln.operand()
        ln.expect(",")
        source = ln.operand()
        ln.done()
        return KeepTag(result, value, source)
    if op == "memguard":
        needs_result()
        size = ln.number()
        ln.expect("at")
        at = ln.number()
        ln.done()
        return MemGuard(result, size, at)
    if op == "retagframe":
        no_result()
        ln.done()
        return RetagFrame()
    if op == "br":
        no_result()
        target = ln.word()
        ln.done()
        return Branch(target)
    if op == "condbr":
        no_result()
        cond = ln.operand()
        ln.expect(",")
        t = ln.word()
        ln.expect(",")
        f = ln.word()
        ln.done()
        return CondBranch(cond, t, f)
    if op == "ret":
        no_result()
        value = None if ln.at_end() else ln.operand()
        ln.done()
        return Return(value)
    raise ln.error(f"unknown instruction {op!r}", mn)


class _BlockBuilder:
    def __init__(self, label: str, lineno: int):
        self.label = label
        self.lineno = lineno
        self.phis: list = []
        self.body: list = []
        self.terminator = None
        self.term_line = None

    def build(self) -> BasicBlock:
        return BasicBlock(self.label, tuple(self.phis), tuple(self.body), self.terminator)


def _parse_header(ln: _Line) -> tuple:
    ln.expect("func")
    name = ln.glob()
    ln.expect("(")
    params = []
    if not ln.accept(")"):
        while True:
            pname = ln.local()
            ln.expect(":")
            params.append(Param(pname, ln.kind()))
            if ln.accept(")"):
                break
            ln.expect(",")
    returns = None
    if ln.accept("->"):
        returns = ln.kind()
    attrs = set()
    frame = None
    while not ln.accept("{"):
        w = ln.next("'{'")
        if w.text == RESET_TAGS:
            attrs.add(RESET_TAGS)
        elif w.text == "frame":
            frame = ln.number()
        else:
            raise ln.error(f"unknown function attribute {w.text!r}", w)
    ln.done()
    return name, tuple(params), returns, frozenset(attrs), frame


def _parse_extern(ln: _Line) -> Extern:
    ln.expect("extern")
    name = ln.glob()
    ln.expect("(")
    params = []
    varargs = False
    if not ln.accept(")"):
        while True:
            if ln.peek() is not None and ln.peek().kind == "ellipsis":
                ln.next()
                varargs = True
                ln.expect(")")
                break
            params.append(ln.kind())
            if ln.accept(")"):
                break
            ln.expect(",")
    returns = ln.kind() if ln.accept("->") else None
    ln.done()
    return Extern(name, tuple(params), returns, varargs)


def _parse_global(ln: _Line) -> GlobalDef:
    ln.expect("global")
    name = ln.glob()
    size = ln.number()
    initial = None
    if ln.accept("="):
        tok = ln.next("byte string")
        if tok.kind != "bytes":
            raise ln.error('expected byte string x"..."', tok)
        hexdigits = tok.text[2:-1]
        if len(hexdigits) % 2:
            raise ln.error("byte string needs an even number of hex digits", tok)
        initial = bytes.fromhex(hexdigits)
    ln.done()
    return GlobalDef(name, size, initial)


def parse_program(text: str, validate: bool = True) -> Program:
    """Parse IR text into a :class:`Program`.

    Raises :class:`ParseError` with a line/column diagnostic on syntax
    errors and :class:`IRError` with the validator's diagnostics when
    ``validate`` is set and the program is malformed.
    """
    globals_: list[GlobalDef] = []
    externs: list[Extern] = []
    functions: list[Function] = []
    entry = "main"
    names: dict[str, int] = {}

    fn_header = None
    blocks: list[_BlockBuilder] = []
    current: Optional[_BlockBuilder] = None

    def define(kind: str, name: str, lineno: int, col: int) -> None:
        key = f"{kind}:{name}"
        if key in names:
            raise ParseError(
                [Diagnostic("error", f"duplicate definition of @{name} (first on line {names[key]})", line=lineno, column=col)]
            )
        names[key] = lineno

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0]
        toks = _tokenize(line, lineno)
        if not toks:
            continue
        ln = _Line(toks, lineno)
        head = toks[0]
        if fn_header is None:
            if head.text == "func":
                fn_header = _parse_header(ln)
                define("sym", fn_header[0], lineno, toks[1].col)
                blocks = []
                current = None
                fn_line = lineno
            elif head.text == "global":
                g = _parse_global(ln)
                define("global", g.name, lineno, toks[1].col)
                globals_.append(g)
            elif head.text == "extern":
                e = _parse_extern(ln)
                define("sym", e.name, lineno, toks[1].col)
                externs.append(e)
            elif head.text == "entry":
                ln.next()
                entry = ln.glob()
                ln.done()
            else:
                raise ln.error(f"unexpected {head.text!r} outside a function", head)
            continue

        if head.text == "}":
            ln.next()
            ln.done()
            if not blocks:
                raise ParseError([Diagnostic("error", f"function @{fn_header[0]} has no blocks", line=fn_line, column=1)])
            name, params, returns, attrs, frame = fn_header
            functions.append(Function(name, params, tuple(b.build() for b in blocks), returns, attrs, frame))
            fn_header = None
            continue
        if len(toks) == 2 and head.kind == "word" and toks[1].text == ":":
            if any(b.label == head.text for b in blocks):
                raise ln.error(f"duplicate block label {head.text!r}", head)
            current = _BlockBuilder(head.text, lineno)
            blocks.append(current)
            continue
        if current is None:
            raise ln.error("instruction outside of a block", head)
        if current.terminator is not None:
            raise ln.error(f"instruction after terminator in block {current.label!r}", head)
        ins = _parse_instruction(ln)
        if isinstance(ins, Phi):
            if current.body:
                raise ln.error("phi after non-phi instruction", head)
            current.phis.append(ins)
        elif isinstance(ins, (Branch, CondBranch, Return)):
            current.terminator = ins
        else:
            current.body.append(ins)

    if fn_header is not None:
        raise ParseError([Diagnostic("error", f"unterminated function @{fn_header[0]}", line=fn_line, column=1)])

    program = Program(tuple(globals_), tuple(functions), tuple(externs), entry)
    if validate:
        from .validate import validate as _validate

        diags = [d for d in _validate(program) if d.severity == "error"]
        if diags:
            raise IRError(diags)
    return program
