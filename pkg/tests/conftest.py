from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import pytest

from tagstack.ir import Program, parse_program

CORPUS = Path(str(resources.files("tagstack.corpus")))


def corpus_path(rel: str) -> Path:
    return CORPUS / rel


def load(rel: str) -> Program:
    return parse_program(corpus_path(rel).read_text())


def corpus_files() -> list[str]:
    """Every .ir file shipped with the package, relative to the corpus root."""
    return sorted(str(p.relative_to(CORPUS)) for p in CORPUS.rglob("*.ir"))


def benign_files() -> list[str]:
    return sorted(goldens())


def goldens() -> dict:
    return json.loads((CORPUS / "goldens.json").read_text())["programs"]


@pytest.fixture(scope="session")
def golden_table() -> dict:
    return goldens()
