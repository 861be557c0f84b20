"""Command-line entry point: analyze, instrument, run, attack, fuzz and report.

Exit codes: 0 success, 1 a check did not pass (attack or fuzz), 2 the run
trapped, 3 the step budget ran out, 64 usage error, 65 the IR did not parse
or validate, 66 an input file could not be read.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

from . import __version__
from .analysis import DEFAULT_LIMIT, MUTATIONS, AnalysisOptions, analyze
from .harness.fuzz import fuzz_conservativeness
from .harness.overhead import OverheadReport, measure_overhead
from .harness.scenarios import AdversaryScript, ScenarioError, run_scenario, scenario
from .instrument import InstrumentError, InstrumentOptions, instrument
from .interp import DEFAULT_STEP_BUDGET, EXHAUSTED, TRAPPED, RunConfig, run
from .ir import Diagnostic, IRError, Program, parse_program, print_program

OUTPUT_SCHEMA = 1

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_TRAP = 2
EXIT_EXHAUSTED = 3
EXIT_USAGE = 64
EXIT_DATAERR = 65
EXIT_NOINPUT = 66


@dataclass(frozen=True)
class Config:
    limit: int = DEFAULT_LIMIT
    guard_width: int = 1
    wildcard: bool = False
    elision: bool = True
    step_budget: int = DEFAULT_STEP_BUDGET
    seed: int = 0
    output: str = "json"

    def __post_init__(self):
        if self.limit < 1:
            raise ValueError("limit must be at least 1")
        if self.guard_width < 1:
            raise ValueError("guard_width must be at least 1")
        if self.step_budget < 1:
            raise ValueError("step_budget must be at least 1")
        if self.output not in ("json", "table"):
            raise ValueError("output must be json or table")

    def analysis_options(self, **extra) -> AnalysisOptions:
        return AnalysisOptions(limit=self.limit, guard_width=self.guard_width, **extra)

    def instrument_options(self) -> InstrumentOptions:
        return InstrumentOptions(elision=self.elision, guard_width=self.guard_width)

    def run_config(self, **extra) -> RunConfig:
        return RunConfig(wildcard=self.wildcard, step_budget=self.step_budget, **extra)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


_BOOL = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


def _coerce(key: str, raw: str, kind) -> object:
    if kind is bool or kind == "bool":
        v = _BOOL.get(raw.strip().lower())
        if v is None:
            raise UsageError(f"config key {key}: expected a boolean, got {raw!r}")
        return v
    if kind is int or kind == "int":
        try:
            return int(raw, 0)
        except ValueError:
            raise UsageError(f"config key {key}: expected an integer, got {raw!r}") from None
    return raw.strip()


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are ignored."""
    kinds = {f.name: f.type for f in fields(Config)}
    out: dict = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {n}: expected key=value")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in kinds:
            raise UsageError(f"config line {n}: unknown key {key!r}")
        out[key] = _coerce(key, raw, kinds[key])
    return out


def build_config(ns: argparse.Namespace) -> Config:
    """Defaults, then the config file, then explicit flags."""
    values: dict = {}
    path = getattr(ns, "config", None)
    if path is not None:
        values.update(parse_config_text(_read(path)))
    for key in ("limit", "guard_width", "seed", "output", "step_budget"):
        if hasattr(ns, key):
            values[key] = getattr(ns, key)
    if getattr(ns, "wildcard", False):
        values["wildcard"] = True
    if getattr(ns, "no_elision", False):
        values["elision"] = False
    try:
        return Config(**values)
    except ValueError as e:
        raise UsageError(str(e)) from None


# -- helpers --------------------------------------------------------------------------


class _NoInput(Exception):
    pass


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise _NoInput(f"{path}: {e.strerror or e}") from None


def _load(path: str) -> Program:
    return parse_program(_read(path))


def _emit(cfg: Config, payload: dict, table: str) -> None:
    if cfg.output == "json":
        print(json.dumps({"schema": OUTPUT_SCHEMA, **payload}, indent=2, sort_keys=True))
    else:
        print(table)


def _outcome_lines(o) -> list[str]:
    lines = [f"status: {o.status}", f"steps:  {o.steps}"]
    if o.value is not None:
        lines.append(f"value:  {o.value}")
    if o.output:
        lines.append("output: " + " ".join(str(v) for v in o.output))
    if o.trap is not None:
        lines.append("trap:   " + o.trap.describe())
    return lines


def _status_exit(status: str) -> int:
    return {TRAPPED: EXIT_TRAP, EXHAUSTED: EXIT_EXHAUSTED}.get(status, EXIT_OK)


# -- subcommands ----------------------------------------------------------------------


def cmd_analyze(ns, cfg: Config) -> int:
    p = _load(ns.file)
    result = analyze(p, cfg.analysis_options())
    rows = [f"{'function':<16} {'alloca':<16} {'size':>6} {'class':<9} {'ptr-safe':<8} range"]
    for (fn, name), a in sorted(result.allocas.items()):
        size = "dyn" if a.size is None else str(a.size)
        rows.append(f"{fn:<16} {name:<16} {size:>6} {a.cls:<9} {str(a.pointer_safe).lower():<8} {a.range}")
    s = result.stats
    rows.append(f"iterations: {s.iterations}  limit hits: {s.limit_hits}")
    body = result.to_json()
    body.pop("schema", None)
    _emit(cfg, body, "\n".join(rows))
    return EXIT_OK


def cmd_instrument(ns, cfg: Config) -> int:
    p = _load(ns.file)
    result = analyze(p, cfg.analysis_options())
    instr, plan = instrument(p, result, cfg.instrument_options())
    text = print_program(instr)
    if ns.o:
        Path(ns.o).write_text(text)
        plan_path = ns.plan or ns.o + ".plan.json"
    else:
        sys.stdout.write(text)
        plan_path = ns.plan
    if plan_path:
        Path(plan_path).write_text(plan.dumps() + "\n")
    return EXIT_OK


def cmd_run(ns, cfg: Config) -> int:
    p = _load(ns.file)
    trace_path = ns.trace
    config = cfg.run_config(mte=not ns.no_mte, trace=trace_path is not None)
    outcome = run(p, ns.args, config)
    if trace_path:
        with open(trace_path, "w") as fh:
            for event in outcome.trace or ():
                fh.write(json.dumps(event, sort_keys=True) + "\n")
    _emit(cfg, {"outcome": outcome.to_json()}, "\n".join(_outcome_lines(outcome)))
    return _status_exit(outcome.status)


def cmd_attack(ns, cfg: Config) -> int:
    if (ns.scenario is None) == (ns.script is None):
        raise UsageError("attack needs exactly one of --scenario or --script")
    if ns.scenario is not None:
        try:
            script = AdversaryScript.from_json(scenario(ns.scenario).script)
        except KeyError as e:
            raise UsageError(e.args[0]) from None
    else:
        try:
            script = AdversaryScript.loads(_read(ns.script))
        except json.JSONDecodeError as e:
            raise ScenarioError(f"{ns.script}: {e}") from None
    p = _load(ns.file)
    plain, plan = None, None
    if p.is_instrumented():
        instr = p
    else:
        plain = p
        instr, plan = instrument(p, analyze(p, cfg.analysis_options()), cfg.instrument_options())
    report = run_scenario(instr, script, plan, plain, ns.args, cfg.run_config())
    verdict = "PASS" if report.passed else "FAIL"
    table = "\n".join([f"{verdict} {report.scenario} ({report.expectation}): {report.detail}"] + _outcome_lines(report.outcome))
    _emit(cfg, {"report": report.to_json()}, table)
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_fuzz(ns, cfg: Config) -> int:
    report = fuzz_conservativeness(
        count=ns.count,
        seed=cfg.seed,
        inputs_per_program=ns.inputs,
        mutation=ns.mutation,
        elision=cfg.elision,
        step_budget=cfg.step_budget if ns.step_budget_set else 200_000,
    )
    j = report.to_json()
    rows = [
        f"programs: {j['programs']}  runs: {j['runs']}  mutation: {j['mutation'] or '-'}",
        "classes:  " + ", ".join(f"{k}={v}" for k, v in j["class_counts"].items()),
        f"oracle violations: {j['oracle_violations']}  traps: {j['traps']}",
        f"guarded out-of-bounds runs: {j['guarded_oob']}  trapped: {j['guarded_trapped']}",
        "findings: " + ", ".join(f"{k}={v}" for k, v in j["findings_by_kind"].items()),
    ]
    rows += [f"  seed {f.seed} args {f.args}: {f.kind}: {f.detail}" for f in report.findings[:20]]
    _emit(cfg, {"fuzz": j}, "\n".join(rows))
    return EXIT_OK if not report.findings else EXIT_FAILED


def cmd_report(ns, cfg: Config) -> int:
    total = OverheadReport(name="total")
    for path in ns.files:
        p = _load(path)
        result = analyze(p, cfg.analysis_options())
        instr, _ = instrument(p, result, cfg.instrument_options())
        one = measure_overhead(p, instr, result, Path(path).stem)
        total = total.merge(one) if len(ns.files) > 1 else one
    body = total.to_json()
    body.pop("schema", None)
    _emit(cfg, {"overhead": body}, total.table())
    return EXIT_OK


# -- parser ---------------------------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    c = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    c.add_argument("--config", metavar="FILE", help="key=value file; flags override it")
    c.add_argument("--limit", type=int, metavar="N", help=f"module-pass visit limit per function (default {DEFAULT_LIMIT})")
    c.add_argument("--guard-width", dest="guard_width", type=int, metavar="G", help="guard granules (default 1)")
    c.add_argument("--wildcard", action="store_true", help="let address tag 0 bypass checks")
    c.add_argument("--no-elision", dest="no_elision", action="store_true", help="keep every tag-forgery check")
    c.add_argument("--seed", type=int, metavar="S", help="fuzzing seed (default 0)")
    c.add_argument("--step-budget", dest="step_budget", type=int, metavar="N", help="instruction budget per run")
    c.add_argument("--output", choices=("json", "table"), help="output format (default json)")
    return c


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="tagstack", description="Stack tagging analysis, instrumentation and checking.", parents=[common])
    parser.add_argument("--version", action="version", version=f"tagstack {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    a = sub.add_parser("analyze", parents=[common], help="classify stack allocations")
    a.add_argument("file")

    i = sub.add_parser("instrument", parents=[common], help="write tagged IR and a tag plan")
    i.add_argument("file")
    i.add_argument("-o", metavar="OUT", help="instrumented IR path (default stdout)")
    i.add_argument("--plan", metavar="FILE", help="tag plan JSON path (default OUT.plan.json)")

    r = sub.add_parser("run", parents=[common], help="execute a program on the machine model")
    r.add_argument("file")
    r.add_argument("--args", nargs="*", type=lambda s: int(s, 0), default=[], metavar="INT")
    r.add_argument("--no-mte", dest="no_mte", action="store_true", help="turn tag checking off")
    r.add_argument("--trace", metavar="FILE", default=None, help="write check and step events as JSON lines")

    k = sub.add_parser("attack", parents=[common], help="run an adversary scenario or script")
    k.add_argument("file")
    k.add_argument("--scenario", metavar="ID", default=None, help="built-in scenario s1..s6")
    k.add_argument("--script", metavar="FILE", default=None, help="adversary script JSON")
    k.add_argument("--args", nargs="*", type=lambda s: int(s, 0), default=None, metavar="INT")

    f = sub.add_parser("fuzz", parents=[common], help="conservativeness fuzzing against the bounds oracle")
    f.add_argument("--count", type=int, default=100)
    f.add_argument("--inputs", type=int, default=4, help="random inputs per program")
    f.add_argument("--mutation", choices=sorted(MUTATIONS), default=None, help="deliberately weaken the analysis")

    o = sub.add_parser("report", parents=[common], help="static overhead of instrumentation")
    o.add_argument("files", nargs="+")
    return parser


_COMMANDS = {
    "analyze": cmd_analyze,
    "instrument": cmd_instrument,
    "run": cmd_run,
    "attack": cmd_attack,
    "fuzz": cmd_fuzz,
    "report": cmd_report,
}


def _diag(message: str) -> None:
    print(f"tagstack: error: {message}", file=sys.stderr)


def main(argv: Optional[list] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            raise UsageError("missing subcommand; one of " + ", ".join(_COMMANDS))
        cfg = build_config(ns)
        ns.step_budget_set = hasattr(ns, "step_budget")
        return _COMMANDS[ns.command](ns, cfg)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        _diag(str(e))
        return EXIT_USAGE
    except IRError as e:
        for d in e.diagnostics:
            print(str(d) if isinstance(d, Diagnostic) else d, file=sys.stderr)
        return EXIT_DATAERR
    except (InstrumentError, ScenarioError) as e:
        _diag(str(e))
        return EXIT_DATAERR
    except ValueError as e:
        _diag(str(e))
        return EXIT_DATAERR
    except _NoInput as e:
        _diag(str(e))
        return EXIT_NOINPUT


if __name__ == "__main__":
    sys.exit(main())
