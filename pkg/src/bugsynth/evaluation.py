"""Compile and regress a mutated design, then classify the bug scenario."""

from __future__ import annotations

import re
import subprocess
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from bugsynth.errors import EvaluationTimeout, SpawnError
from bugsynth.memory import MutationEntry, Outcome


class Verdict(str, Enum):
    DETECTED = "detected"
    SYNTAX_FAILURE = "syntax_failure"
    UNDETECTED = "undetected"

    def as_outcome(self) -> Outcome:
        return {
            Verdict.DETECTED: Outcome.SUCCESS,
            Verdict.SYNTAX_FAILURE: Outcome.SYNTAX_FAILURE,
            Verdict.UNDETECTED: Outcome.UNDETECTED,
        }[self]


@dataclass
class CompileResult:
    ok: bool
    returncode: int = 0
    log: str = ""


@dataclass
class RunRecord:
    test: str
    seed: int
    passed: bool
    log_ref: str = ""
    error: str | None = None  # infrastructure error (e.g. timeout); excluded from detection


@dataclass
class EvaluationOutcome:
    verdict: Verdict
    evidence: str
    failing: list[tuple[str, int]] = field(default_factory=list)
    infra_errors: list[tuple[str, int, str]] = field(default_factory=list)


def classify(compile_result: CompileResult, regression_results: Sequence[RunRecord]) -> EvaluationOutcome:
    if not compile_result.ok:
        excerpt = compile_result.log.strip()[-2000:] or f"compile exited with {compile_result.returncode}"
        return EvaluationOutcome(Verdict.SYNTAX_FAILURE, excerpt)
    failing = [(r.test, r.seed) for r in regression_results if r.error is None and not r.passed]
    infra = [(r.test, r.seed, r.error) for r in regression_results if r.error is not None]
    if failing:
        test, seed = failing[0]
        return EvaluationOutcome(Verdict.DETECTED, f"first failure: test {test} seed {seed}", failing, infra)
    ran = sum(1 for r in regression_results if r.error is None)
    return EvaluationOutcome(Verdict.UNDETECTED, f"all {ran} runs passed", [], infra)


@dataclass
class EvaluatorConfig:
    compile_command: str
    test_command: str
    tests: list[str]
    seeds: list[int]
    failure_pattern: str | None = None
    per_command_timeout_seconds: float = 3600.0

    def __post_init__(self) -> None:
        if not self.tests or not self.seeds:
            raise ValueError("evaluator needs at least one test and one seed")
        if self.per_command_timeout_seconds <= 0:
            raise ValueError("per_command_timeout_seconds must be positive")


def _safe(label: str) -> str:
    return re.sub(r"[^\w.-]+", "_", label)


class ShellEvaluator:
    """Runs configured command templates through the system shell."""

    kind = "shell"

    def __init__(self, config: EvaluatorConfig, log_dir: str | Path | None = None) -> None:
        self.config = config
        self.log_dir = Path(log_dir) if log_dir is not None else None
        self._pattern = re.compile(config.failure_pattern) if config.failure_pattern else None

    def _run(self, command: str, cwd: Path) -> tuple[int, str]:
        try:
            proc = subprocess.run(
                command,
                shell=True,
                cwd=cwd,
                stdout=subprocess.PIPE,
                stderr=subprocess.STDOUT,
                timeout=self.config.per_command_timeout_seconds,
            )
        except subprocess.TimeoutExpired as exc:
            raise EvaluationTimeout(
                f"command timed out after {self.config.per_command_timeout_seconds:g}s: {command}"
            ) from exc
        except OSError as exc:
            raise SpawnError(f"cannot run {command!r}: {exc}") from exc
        return proc.returncode, proc.stdout.decode("utf-8", "replace")

    def _write_log(self, label: str, name: str, text: str) -> str:
        if self.log_dir is None:
            return ""
        path = self.log_dir / _safe(label) / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        return str(path)

    def compile(self, ws, label: str = "compile") -> CompileResult:
        command = self.config.compile_command.format(workspace=ws.root)
        code, out = self._run(command, ws.root)
        self._write_log(label, "compile.log", out)
        return CompileResult(code == 0, code, out)

    def run_regression(self, ws, *, short_circuit: bool = False, label: str = "regression") -> list[RunRecord]:
        records: list[RunRecord] = []
        for test in self.config.tests:
            for seed in self.config.seeds:
                command = self.config.test_command.format(workspace=ws.root, test=test, seed=seed)
                try:
                    code, out = self._run(command, ws.root)
                except EvaluationTimeout as exc:
                    records.append(RunRecord(test, seed, False, "", f"timeout: {exc}"))
                    continue
                failed = code != 0 or bool(self._pattern and self._pattern.search(out))
                ref = self._write_log(label, f"{_safe(test)}.{seed}.log", out)
                records.append(RunRecord(test, seed, not failed, ref))
                if failed and short_circuit:
                    return records
        return records

    def evaluate(
        self, ws, entries: Sequence[MutationEntry], *, short_circuit: bool = True, label: str = "scenario"
    ) -> EvaluationOutcome:
        result = self.compile(ws, label=label)
        runs = self.run_regression(ws, short_circuit=short_circuit, label=label) if result.ok else []
        return classify(result, runs)

    def baseline(self, ws) -> tuple[bool, str]:
        result = self.compile(ws, label="baseline")
        if not result.ok:
            return False, "pristine design does not compile"
        runs = self.run_regression(ws, short_circuit=False, label="baseline")
        errors = [r for r in runs if r.error]
        if errors:
            return False, f"regression infrastructure error on {errors[0].test}/{errors[0].seed}: {errors[0].error}"
        failing = [r for r in runs if not r.passed]
        if failing:
            return False, f"pristine design fails test {failing[0].test} seed {failing[0].seed}"
        return True, "ok"


class ScriptedEvaluator:
    """Toolchain-free evaluator with a scripted outcome table.

    Outcome precedence for a scenario: the next unused item of the module's
    ``sequence`` (each module consumes its own copy), else the ``table`` keyed
    on ``(class_id, region_index)`` combined over the scenario's entries
    (syntax failure beats detection beats undetected), else ``default``.
    """

    kind = "scripted"

    def __init__(
        self,
        table: dict[tuple[str, int], Verdict | str] | None = None,
        sequence: Iterable[Verdict | str] | None = None,
        sequences: dict[str, Iterable[Verdict | str]] | None = None,
        default: Verdict | str = Verdict.DETECTED,
        *,
        tests: list[str] | None = None,
        seeds: list[int] | None = None,
        failing_runs: Iterable[tuple[str, int]] = (),
        compile_ok: bool = True,
        baseline_ok: bool = True,
    ) -> None:
        self.table = {k: Verdict(v) for k, v in (table or {}).items()}
        self.sequence = [Verdict(v) for v in (sequence or [])]
        self.sequences = {m: [Verdict(v) for v in seq] for m, seq in (sequences or {}).items()}
        self.default = Verdict(default)
        self.tests = list(tests or ["smoke"])
        self.seeds = list(seeds or [0])
        self.failing_runs = set(failing_runs)
        self.compile_ok = compile_ok
        self.baseline_ok = baseline_ok
        self._cursor: dict[str, int] = defaultdict(int)
        self._lock = threading.Lock()
        self.calls = 0
        self.compile_calls = 0
        self.regression_calls = 0
        self.baseline_calls = 0

    def compile(self, ws, label: str = "compile") -> CompileResult:
        with self._lock:
            self.compile_calls += 1
        if self.compile_ok:
            return CompileResult(True, 0, "scripted compile ok")
        return CompileResult(False, 1, "scripted compile failure")

    def run_regression(self, ws, *, short_circuit: bool = False, label: str = "regression") -> list[RunRecord]:
        with self._lock:
            self.regression_calls += 1
        records = []
        for test in self.tests:
            for seed in self.seeds:
                passed = (test, seed) not in self.failing_runs
                records.append(RunRecord(test, seed, passed, "scripted"))
                if not passed and short_circuit:
                    return records
        return records

    def verdict_for(self, entries: Sequence[MutationEntry]) -> Verdict:
        module = entries[0].module_id if entries else ""
        with self._lock:
            seq = self.sequences.get(module, self.sequence)
            pos = self._cursor[module]
            if pos < len(seq):
                self._cursor[module] = pos + 1
                return seq[pos]
        hits = [self.table[(e.class_id, e.region_index)] for e in entries if (e.class_id, e.region_index) in self.table]
        for v in (Verdict.SYNTAX_FAILURE, Verdict.DETECTED, Verdict.UNDETECTED):
            if v in hits:
                return v
        return self.default

    def evaluate(
        self, ws, entries: Sequence[MutationEntry], *, short_circuit: bool = True, label: str = "scenario"
    ) -> EvaluationOutcome:
        with self._lock:
            self.calls += 1
        verdict = self.verdict_for(entries)
        if verdict is Verdict.SYNTAX_FAILURE:
            return classify(CompileResult(False, 1, "scripted syntax failure"), [])
        runs = [RunRecord(t, s, True, "scripted") for t in self.tests for s in self.seeds]
        if verdict is Verdict.DETECTED:
            runs[0] = RunRecord(runs[0].test, runs[0].seed, False, "scripted")
            if short_circuit:
                runs = runs[:1]
        return classify(CompileResult(True, 0, "scripted compile ok"), runs)

    def baseline(self, ws) -> tuple[bool, str]:
        with self._lock:
            self.baseline_calls += 1
        return (True, "ok") if self.baseline_ok else (False, "scripted baseline failure")
