from __future__ import annotations

import sys

import pytest

from bugsynth.errors import EvaluationTimeout
from bugsynth.evaluation import (
    CompileResult,
    EvaluatorConfig,
    RunRecord,
    ScriptedEvaluator,
    ShellEvaluator,
    Verdict,
)
from bugsynth.memory import Outcome
from bugsynth.patch import Workspace, apply_patch

PY = sys.executable

# "compiles" when parentheses balance
CHECK = """import sys
text = open("m.sv").read()
if text.count("(") != text.count(")"):
    print("error: unbalanced parentheses")
    sys.exit(1)
"""
# a test fails when the design contains the marker word for that test
RUN = """import sys, time
test, seed = sys.argv[1], int(sys.argv[2])
text = open("m.sv").read()
if test == "slow" and "SLOW" in text:
    time.sleep(5)
if "BUG_" + test in text:
    print("mismatch detected")
    sys.exit(1)
if "WARN" in text:
    print("UVM_ERROR flagged but exit 0")
"""


@pytest.fixture
def ws(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    (src / "m.sv").write_text("module m (input a);\nassign x = (a);\nendmodule\n")
    (src / "check.py").write_text(CHECK)
    (src / "run.py").write_text(RUN)
    return Workspace.create(src, tmp_path / "ws")


def _shell(tmp_path, tests=("t1", "t2", "t3"), seeds=(1, 2), **kw):
    cfg = EvaluatorConfig(
        compile_command=f"{PY} check.py",
        test_command=f"{PY} run.py {{test}} {{seed}}",
        tests=list(tests),
        seeds=list(seeds),
        **kw,
    )
    return ShellEvaluator(cfg, tmp_path / "logs")


def _mutate(ws, text):
    apply_patch(ws, "m.sv", (2, 2), text)


def test_clean_design_is_undetected_over_full_matrix(ws, tmp_path):
    ev = _shell(tmp_path)
    runs = ev.run_regression(ws)
    assert len(runs) == 6 and all(r.passed for r in runs)
    out = ev.evaluate(ws, [])
    assert out.verdict is Verdict.UNDETECTED and "6 runs" in out.evidence
    assert ev.baseline(ws) == (True, "ok")


def test_compile_failure_is_syntax_failure(ws, tmp_path):
    _mutate(ws, "assign x = (a;")
    ev = _shell(tmp_path)
    out = ev.evaluate(ws, [])
    assert out.verdict is Verdict.SYNTAX_FAILURE
    assert "unbalanced" in out.evidence
    assert ev.baseline(ws)[0] is False
    assert (tmp_path / "logs" / "scenario" / "compile.log").exists()


def test_failing_test_is_detected_with_short_circuit(ws, tmp_path):
    _mutate(ws, "assign x = (a); // BUG_t2")
    ev = _shell(tmp_path)
    out = ev.evaluate(ws, [], short_circuit=True)
    assert out.verdict is Verdict.DETECTED
    assert out.evidence == "first failure: test t2 seed 1"
    assert out.failing == [("t2", 1)]
    assert len(ev.run_regression(ws, short_circuit=True)) == 3
    full = ev.evaluate(ws, [], short_circuit=False)
    assert full.failing == [("t2", 1), ("t2", 2)]


def test_failure_pattern_overrides_zero_exit(ws, tmp_path):
    _mutate(ws, "assign x = (a); // WARN")
    assert _shell(tmp_path).evaluate(ws, []).verdict is Verdict.UNDETECTED
    ev = _shell(tmp_path, failure_pattern=r"UVM_(ERROR|FATAL)")
    assert ev.evaluate(ws, []).verdict is Verdict.DETECTED


def test_per_run_timeout_is_recorded_not_counted(ws, tmp_path):
    _mutate(ws, "assign x = (a); // SLOW")
    ev = _shell(tmp_path, tests=("slow", "t1"), seeds=(1,), per_command_timeout_seconds=1.5)
    runs = ev.run_regression(ws)
    assert runs[0].error and runs[0].error.startswith("timeout")
    assert runs[1].passed
    out = ev.evaluate(ws, [])
    assert out.verdict is Verdict.UNDETECTED and len(out.infra_errors) == 1
    ok, reason = ev.baseline(ws)
    assert not ok and "infrastructure" in reason


def test_compile_timeout_raises(ws, tmp_path):
    cfg = EvaluatorConfig(f'{PY} -c "import time; time.sleep(5)"', "true", ["t"], [1], per_command_timeout_seconds=0.5)
    with pytest.raises(EvaluationTimeout):
        ShellEvaluator(cfg).compile(ws)


def test_evaluator_config_validation():
    with pytest.raises(ValueError):
        EvaluatorConfig("c", "t", [], [1])
    with pytest.raises(ValueError):
        EvaluatorConfig("c", "t", ["a"], [1], per_command_timeout_seconds=0)


def test_verdict_maps_to_outcome():
    assert Verdict.DETECTED.as_outcome() is Outcome.SUCCESS
    assert Verdict.SYNTAX_FAILURE.as_outcome() is Outcome.SYNTAX_FAILURE
    assert Verdict.UNDETECTED.as_outcome() is Outcome.UNDETECTED


def test_scripted_regression_and_sequence():
    ev = ScriptedEvaluator(tests=["t1", "t2"], seeds=[7, 8], failing_runs=[("t1", 7)])
    runs = ev.run_regression(None, short_circuit=True)
    assert runs == [RunRecord("t1", 7, False, "scripted")]
    assert len(ev.run_regression(None)) == 4
    assert ev.compile(None) == CompileResult(True, 0, "scripted compile ok")

    seq = ScriptedEvaluator(sequence=["syntax_failure", "undetected"], default="detected")
    verdicts = [seq.evaluate(None, []).verdict for _ in range(3)]
    assert verdicts == [Verdict.SYNTAX_FAILURE, Verdict.UNDETECTED, Verdict.DETECTED]
    assert seq.calls == 3
