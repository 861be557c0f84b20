from __future__ import annotations

import json

import pytest

from tagstack.cli import EXIT_DATAERR, EXIT_EXHAUSTED, EXIT_FAILED, EXIT_TRAP, EXIT_USAGE, main, parse_config_text

from .conftest import corpus_path


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_analyze_json(capsys):
    code, out, _ = run_cli(capsys, "analyze", corpus_path("listing_frame.ir"))
    assert code == 0
    j = json.loads(out)
    assert j["schema"] == 1
    cls = {(a["function"], a["alloca"]): a["class"] for a in j["allocas"]}
    assert cls[("fill", "%buf_lin")] == "guarded"
    assert "iterations" in j["stats"] and "limit_hits" in j["stats"]


def test_analyze_table(capsys):
    code, out, _ = run_cli(capsys, "analyze", corpus_path("listing_classes.ir"), "--output", "table")
    assert code == 0 and "provable" in out


def test_instrument_then_run(capsys, tmp_path):
    out_ir = tmp_path / "x.instr.ir"
    code, _, _ = run_cli(capsys, "instrument", corpus_path("listing_frame.ir"), "-o", out_ir)
    assert code == 0 and out_ir.exists()
    plan = json.loads((tmp_path / "x.instr.ir.plan.json").read_text())
    assert plan["guards"] and plan["tags"]
    code, out, _ = run_cli(capsys, "run", out_ir, "--args", "16", "3")
    assert code == 0 and json.loads(out)["outcome"]["status"] == "finished"
    code, out, _ = run_cli(capsys, "run", out_ir, "--args", "17", "3")
    assert code == EXIT_TRAP and json.loads(out)["outcome"]["trap"]["kind"] == "tag-mismatch"
    code, _, _ = run_cli(capsys, "run", out_ir, "--args", "17", "3", "--no-mte")
    assert code == 0


def test_run_trace_file(capsys, tmp_path):
    trace = tmp_path / "t.jsonl"
    code, _, _ = run_cli(capsys, "run", corpus_path("listing_classes.ir"), "--args", "3", "--trace", trace)
    assert code == 0
    events = [json.loads(line) for line in trace.read_text().splitlines()]
    assert events and any(e.get("event") == "step" for e in events)


def test_run_exhausted(capsys, tmp_path):
    f = tmp_path / "loop.ir"
    f.write_text("func @main() -> i64 {\nentry:\n  br l\nl:\n  br l\n}\n")
    code, _, _ = run_cli(capsys, "run", f, "--step-budget", "100")
    assert code == EXIT_EXHAUSTED


@pytest.mark.parametrize("sid", ["s1", "s2", "s3", "s4", "s5", "s6"])
def test_attack_builtin(capsys, sid):
    from tagstack.harness.scenarios import scenario

    prog = corpus_path("attacks/" + scenario(sid).program)
    code, out, _ = run_cli(capsys, "attack", prog, "--scenario", sid)
    assert code == 0 and json.loads(out)["report"]["pass"]


def test_attack_on_instrumented_input(capsys, tmp_path):
    out_ir = tmp_path / "s1.ir"
    run_cli(capsys, "instrument", corpus_path("attacks/s1_forged_pointer.ir"), "-o", out_ir)
    code, out, _ = run_cli(capsys, "attack", out_ir, "--scenario", "s1", "--output", "table")
    assert code == 0 and out.startswith("PASS")


def test_attack_script_file(capsys, tmp_path):
    script = tmp_path / "s.json"
    script.write_text(json.dumps({"id": "mine", "args": [16], "expect": {"kind": "must_trap"}}))
    code, out, _ = run_cli(capsys, "attack", corpus_path("attacks/s3_guarded_overflow.ir"), "--script", script)
    assert code == EXIT_FAILED and not json.loads(out)["report"]["pass"]
    code, _, _ = run_cli(capsys, "attack", corpus_path("attacks/s3_guarded_overflow.ir"), "--script", script, "--args", "17")
    assert code == 0


def test_fuzz(capsys):
    code, out, _ = run_cli(capsys, "fuzz", "--count", "5", "--seed", "2")
    j = json.loads(out)["fuzz"]
    assert code == 0 and j["programs"] == 5 and j["runs"] == 20


def test_report(capsys):
    code, out, _ = run_cli(capsys, "report", corpus_path("special/one_byte_unsafe.ir"))
    j = json.loads(out)
    assert code == 0 and j["overhead"]["totals"]["frame_after"] == 16
    code, out, _ = run_cli(capsys, "report", corpus_path("listing_frame.ir"), corpus_path("special/fully_safe.ir"), "--output", "table")
    assert code == 0 and "total" in out


def test_exit_codes(capsys, tmp_path):
    assert run_cli(capsys, "frobnicate")[0] == EXIT_USAGE
    assert run_cli(capsys)[0] == EXIT_USAGE
    bad = tmp_path / "bad.ir"
    bad.write_text("func @main( {\n")
    code, _, err = run_cli(capsys, "analyze", bad)
    assert code == EXIT_DATAERR and "1:" in err
    bad.write_text("func @main() -> i64 {\nentry:\n  %x = call @nope()\n  ret %x\n}\n")
    assert run_cli(capsys, "run", bad)[0] == EXIT_DATAERR
    assert run_cli(capsys, "attack", corpus_path("listing_frame.ir"))[0] == EXIT_USAGE
    assert run_cli(capsys, "run", tmp_path / "missing.ir")[0] != 0


def test_config_file_and_precedence(capsys, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# settings\nlimit = 1\noutput = table\n")
    prog = corpus_path("special/mutual_recursion.ir")
    code, out, _ = run_cli(capsys, "analyze", prog, "--config", cfg)
    assert code == 0 and "iterations: 7" in out
    code, out, _ = run_cli(capsys, "analyze", prog, "--config", cfg, "--output", "json", "--limit", "4")
    assert json.loads(out)["stats"]["visits"]["ping"] == 4


def test_config_rejects_unknown_keys(capsys, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("colour = blue\n")
    assert run_cli(capsys, "analyze", corpus_path("listing_frame.ir"), "--config", cfg)[0] == EXIT_USAGE


def test_parse_config_text():
    assert parse_config_text("wildcard = yes\nguard-width = 2\nseed=0x10") == {"wildcard": True, "guard_width": 2, "seed": 16}
    with pytest.raises(Exception):
        parse_config_text("limit = many")


def test_deterministic_output(capsys):
    a = run_cli(capsys, "analyze", corpus_path("listing_frame.ir"))[1]
    b = run_cli(capsys, "analyze", corpus_path("listing_frame.ir"))[1]
    assert a == b
