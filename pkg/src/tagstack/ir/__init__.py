"""SSA intermediate representation: data types, text format and validator."""

from .nodes import *  # noqa: F401,F403
from .nodes import Diagnostic, IRError, Program
from .parser import ParseError, parse_program
from .printer import format_function, format_instruction, print_program
from .validate import dominators, validate, value_kinds

__all__ = [
    "Diagnostic",
    "IRError",
    "ParseError",
    "Program",
    "dominators",
    "format_function",
    "format_instruction",
    "parse_program",
    "print_program",
    "validate",
    "value_kinds",
]
