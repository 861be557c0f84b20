from __future__ import annotations

import pytest

from tagstack.harness.fuzz import generate_program
from tagstack.ir import IRError, ParseError, parse_program, print_program, validate
from tagstack.ir.nodes import Alloca, Gep, Load, Store

from .conftest import corpus_files, load


@pytest.mark.parametrize("rel", corpus_files())
def test_corpus_round_trip(rel):
    p = load(rel)
    text = print_program(p)
    q = parse_program(text)
    assert q == p
    assert print_program(q) == text


def test_instrumented_round_trip():
    from tagstack.instrument import instrument

    p = load("listing_frame.ir")
    ip, _ = instrument(p)
    assert ip.is_instrumented()
    assert parse_program(print_program(ip)) == ip


@pytest.mark.parametrize("seed", range(25))
def test_fuzz_round_trip(seed):
    p = parse_program(generate_program(seed))
    assert parse_program(print_program(p)) == p


def test_parse_shapes():
    p = parse_program(
        """
        global @g 8
        func @main(%n: i64) -> i64 {
        entry:
          %a = alloca 4 x 4
          %p = gep %a, %n, scale 4, off 0
          store.i32 [%p + 0] = 1
          %v = load.i32 [%a + 0]
          ret %v
        }
        """
    )
    body = p.function("main").blocks[0].body
    assert isinstance(body[0], Alloca) and body[0].static_bytes == 16
    assert isinstance(body[1], Gep) and body[1].scale == 4
    assert isinstance(body[2], Store) and body[2].width == 4
    assert isinstance(body[3], Load) and body[3].offset == 0
    assert p.global_map()["g"].size == 8


def test_syntax_error_reports_line():
    with pytest.raises(ParseError) as e:
        parse_program("func @main() -> i64 {\nentry:\n  %x = frob 1\n  ret %x\n}\n")
    assert e.value.diagnostics[0].line == 3


@pytest.mark.parametrize(
    "body, message",
    [
        ("  %x = call @nope()\n  ret %x", "unknown function"),
        ("  ret %y", "unknown value"),
        ("  %x = add 1, 2\n  %x = add 1, 2\n  ret %x", "defined more than once"),
        ("  br nowhere", "unknown block"),
        ("  %p = const null\n  %x = add %p, 1\n  ret %x", "expected i64"),
    ],
)
def test_validator_rejects(body, message):
    text = f"func @main() -> i64 {{\nentry:\n{body}\n}}\n"
    with pytest.raises(IRError) as e:
        parse_program(text)
    assert any(message in d.message for d in e.value.diagnostics), e.value.diagnostics


def test_use_before_def_across_blocks():
    text = """
    func @main(%c: i64) -> i64 {
    entry:
      condbr %c, a, b
    a:
      %x = add 1, 2
      br b
    b:
      ret %x
    }
    """
    with pytest.raises(IRError, match="use before def"):
        parse_program(text)


def test_validate_returns_no_diagnostics_for_corpus():
    for rel in corpus_files():
        assert validate(load(rel)) == [], rel
