"""Adversary scenarios, the bounds oracle, the conservativeness fuzzer and overhead reports."""

from .fuzz import FuzzReport, GenParams, fuzz_conservativeness, generate_program
from .oracle import BoundsOracle, OracleReport, Violation, run_oracle
from .overhead import OverheadReport, measure_overhead
from .scenarios import (
    SUITE,
    AdversaryScript,
    ScenarioError,
    ScenarioReport,
    run_builtin,
    run_scenario,
    run_suite,
)

__all__ = [
    "SUITE",
    "AdversaryScript",
    "BoundsOracle",
    "FuzzReport",
    "GenParams",
    "OracleReport",
    "OverheadReport",
    "ScenarioError",
    "ScenarioReport",
    "Violation",
    "fuzz_conservativeness",
    "generate_program",
    "measure_overhead",
    "run_builtin",
    "run_oracle",
    "run_scenario",
    "run_suite",
]
