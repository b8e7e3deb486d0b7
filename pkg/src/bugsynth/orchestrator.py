"""Closed-loop campaign driver.

One scenario attempt generates ``mutations_per_scenario`` mutations (region
choice, mutation choice, injection), patches them into the worker's private
workspace, evaluates the mutant and finalizes every member entry with the
scenario verdict. The workspace is rolled back to pristine at every scenario
boundary. Workers share only the mutation cache and the scenario log.
"""

from __future__ import annotations

import json
import logging
import re
import threading
import time
import traceback
import uuid
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable

from bugsynth.agents.steps import inject_mutation, select_mutation, select_region
from bugsynth.catalog import MutationIndex
from bugsynth.errors import (
    AgentOutputError,
    BaselineGateFailed,
    GenerationStalled,
    InfrastructureError,
    NoMutableRegion,
    RetriesExhausted,
)
from bugsynth.evaluation import EvaluationOutcome
from bugsynth.memory import MutationCache, MutationEntry, Outcome, StructuralKey, apply_mutation_counts
from bugsynth.partition import ModulePartition, Region
from bugsynth.patch import PatchRecord, Workspace, apply_patch, archive_snapshot, rollback

log = logging.getLogger(__name__)


class Mode(str, Enum):
    GENERATION = "generation"
    COVERAGE = "coverage_assessment"


class Parallelism(str, Enum):
    INTER_DESIGN = "inter_design"
    INTRA_DESIGN = "intra_design"
    SEQUENTIAL = "sequential"


@dataclass
class ScenarioSettings:
    mutations_per_scenario: int = 2
    max_retries: int = 2
    mode: Mode = Mode.GENERATION
    max_regenerations: int = 10
    infra_retries: int = 1
    short_circuit: bool | None = None  # None: on for generation, off for coverage assessment
    template_dir: str | Path | None = None
    archive_dir: Path | None = None
    run_id: str = ""

    def __post_init__(self) -> None:
        if self.mutations_per_scenario < 1:
            raise ValueError("mutations_per_scenario must be at least 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")
        self.mode = Mode(self.mode)

    @property
    def coverage_mode(self) -> bool:
        return self.mode is Mode.COVERAGE

    @property
    def effective_short_circuit(self) -> bool:
        return (not self.coverage_mode) if self.short_circuit is None else self.short_circuit

    def accepts(self, outcome: Outcome) -> bool:
        if outcome is Outcome.SUCCESS:
            return True
        return self.coverage_mode and outcome is Outcome.UNDETECTED


@dataclass
class ModuleContext:
    design_id: str
    module_id: str
    file: str
    partition: ModulePartition
    index: MutationIndex
    workspace: Workspace


@dataclass
class ScenarioAttempt:
    scenario_id: str
    attempt_number: int
    entries: list[MutationEntry] = field(default_factory=list)
    outcome: Outcome | None = None  # None: generation stalled before evaluation
    evidence: str = ""
    generation_seconds: float = 0.0
    validation_seconds: float = 0.0
    duplicates_regenerated: int = 0


@dataclass
class ScenarioResult:
    scenario_id: str
    design_id: str
    module_id: str
    attempts: list[ScenarioAttempt]
    accepted: bool

    @property
    def outcome(self) -> Outcome | None:
        return self.attempts[-1].outcome if self.attempts else None


class ScenarioLog:
    """Append-only JSONL timing log shared by all workers."""

    def __init__(self, path: str | Path | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self.records: list[dict[str, Any]] = []
        self._lock = threading.Lock()
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def write(self, record: dict[str, Any]) -> None:
        with self._lock:
            self.records.append(record)
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record) + "\n")

    @staticmethod
    def read(path: str | Path) -> list[dict[str, Any]]:
        path = Path(path)
        if not path.exists():
            return []
        return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def scenario_prefix(design_id: str, file: str) -> str:
    return f"{design_id}.{re.sub(r'[^A-Za-z0-9_-]+', '_', file)}"


# ---------------------------------------------------------------------------
# One scenario
# ---------------------------------------------------------------------------


def _masked(partition: ModulePartition, excluded: set[int]) -> ModulePartition:
    if not excluded:
        return partition
    regions = [
        Region(r.index, r.start_line, r.end_line, r.synopsis, r.mutation_count, r.mutable and r.index not in excluded)
        for r in partition.regions
    ]
    return ModulePartition(partition.source_id, partition.total_lines, regions, partition.origin, partition.fallback)


def _generate_slot(
    ctx: ModuleContext,
    settings: ScenarioSettings,
    cache: MutationCache,
    backend,
    *,
    scenario_id: str,
    attempt_number: int,
    batch: list[MutationEntry],
    batch_keys: set[StructuralKey],
    attempt: ScenarioAttempt,
) -> MutationEntry:
    """Steps 1-3 for one mutation; returns the entry, not yet recorded.

    Discarded duplicates are tallied on ``attempt``.
    """
    part = ctx.partition
    excluded: set[int] = set()
    rejected: list[dict[str, Any]] = []
    for _ in range(settings.max_regenerations + 1):
        apply_mutation_counts(part, cache.mutation_counts(ctx.module_id), extra=[e.region_index for e in batch])
        stats = cache.region_stats(part)
        try:
            choice = select_region(
                _masked(part, excluded), stats, ctx.index, backend,
                coverage_mode=settings.coverage_mode, template_dir=settings.template_dir,
            )
        except NoMutableRegion as exc:
            raise GenerationStalled(f"{ctx.module_id}: {exc}") from exc
        except AgentOutputError:
            continue
        region = part.region(choice.region_index)
        source = "\n".join(ctx.workspace.read_lines(ctx.file)[region.start_line - 1 : region.end_line])
        occupied = [(e.target_start, e.target_end) for e in batch if e.region_index == region.index]
        try:
            mc = select_mutation(
                source, ctx.index, cache.region_history(ctx.module_id, region.index, settings.coverage_mode),
                backend, region=region, module_id=ctx.module_id, occupied=occupied,
                rejected=[r for r in rejected if region.start_line <= r["start_line"] <= region.end_line],
                template_dir=settings.template_dir,
            )
            inj = inject_mutation(
                mc, source, ctx.index.resolve_spec(mc.class_id), backend,
                region=region, template_dir=settings.template_dir,
            )
        except AgentOutputError as exc:
            log.debug("%s region %d unusable this slot: %s", ctx.module_id, region.index, exc)
            excluded.add(region.index)
            continue
        entry = MutationEntry(
            design_id=ctx.design_id,
            module_id=ctx.module_id,
            file=ctx.file,
            region_index=region.index,
            region_start=region.start_line,
            region_end=region.end_line,
            class_id=mc.class_id,
            target_start=mc.start_line,
            target_end=mc.end_line,
            target_block=mc.target_block,
            mutated_block=inj.mutated_block,
            summary=inj.summary,
            scenario_id=scenario_id,
            attempt_number=attempt_number,
            run_id=settings.run_id,
        )
        if cache.is_duplicate(entry.key) or entry.key in batch_keys:
            attempt.duplicates_regenerated += 1
            rejected.append(
                {
                    "class_id": mc.class_id,
                    "start_line": mc.start_line,
                    "end_line": mc.end_line,
                    "reason": "identical to a mutation already attempted",
                }
            )
            continue
        return entry
    raise GenerationStalled(
        f"{ctx.module_id}: no new mutation after {settings.max_regenerations} regenerations"
    )


def _evaluate(evaluator, ws: Workspace, entries, settings: ScenarioSettings, label: str) -> EvaluationOutcome:
    for tries in range(settings.infra_retries + 1):
        try:
            return evaluator.evaluate(ws, entries, short_circuit=settings.effective_short_circuit, label=label)
        except InfrastructureError as exc:
            if tries == settings.infra_retries:
                raise
            log.warning("%s: infrastructure error, re-evaluating: %s", label, exc)
    raise AssertionError("unreachable")


def run_attempt(
    ctx: ModuleContext,
    settings: ScenarioSettings,
    cache: MutationCache,
    backend,
    evaluator,
    *,
    scenario_id: str,
    attempt_number: int,
) -> ScenarioAttempt:
    attempt = ScenarioAttempt(scenario_id, attempt_number)
    ws = ctx.workspace
    records: list[PatchRecord] = []
    batch: list[MutationEntry] = []
    keys: set[StructuralKey] = set()
    t0 = time.perf_counter()
    try:
        try:
            for _ in range(settings.mutations_per_scenario):
                entry = _generate_slot(
                    ctx, settings, cache, backend, scenario_id=scenario_id,
                    attempt_number=attempt_number, batch=batch, batch_keys=keys, attempt=attempt,
                )
                records.append(
                    apply_patch(ws, ctx.file, (entry.target_start, entry.target_end),
                                entry.mutated_block, expected_original=entry.target_block)
                )
                batch.append(entry)
                keys.add(entry.key)
        except GenerationStalled as exc:
            attempt.evidence = str(exc)
            return attempt
        finally:
            attempt.generation_seconds = time.perf_counter() - t0

        ids = [cache.record_attempt(e) for e in batch]
        for rec, entry_id in zip(records, ids):
            rec.entry_id = entry_id
        stored = [cache.get(i) for i in ids]

        t1 = time.perf_counter()
        try:
            result = _evaluate(evaluator, ws, stored, settings, f"{scenario_id}.a{attempt_number}")
        finally:
            attempt.validation_seconds = time.perf_counter() - t1
        outcome = result.verdict.as_outcome()
        for entry_id in ids:
            cache.update_outcome(entry_id, outcome)
        attempt.outcome = outcome
        attempt.evidence = result.evidence
        attempt.entries = [cache.get(i) for i in ids]
        if settings.accepts(outcome) and settings.archive_dir is not None:
            archive_snapshot(
                ws, settings.archive_dir, scenario_id, [ctx.file],
                {
                    "scenario_id": scenario_id,
                    "design_id": ctx.design_id,
                    "module_id": ctx.module_id,
                    "attempt_number": attempt_number,
                    "outcome": outcome.value,
                    "evidence": result.evidence,
                    "mutations": [e.to_dict() for e in attempt.entries],
                },
            )
        return attempt
    finally:
        if records:
            rollback(ws, records)


def run_scenario(
    ctx: ModuleContext,
    settings: ScenarioSettings,
    cache: MutationCache,
    backend,
    evaluator,
    *,
    scenario_id: str,
    scenario_log: ScenarioLog | None = None,
) -> ScenarioResult:
    """Attempt one bug scenario up to ``max_retries + 1`` times.

    Raises :class:`RetriesExhausted` when no attempt is accepted; the
    workspace is pristine on every exit path.
    """
    attempts: list[ScenarioAttempt] = []
    for number in range(1, settings.max_retries + 2):
        attempt = run_attempt(ctx, settings, cache, backend, evaluator,
                              scenario_id=scenario_id, attempt_number=number)
        attempts.append(attempt)
        if scenario_log is not None:
            scenario_log.write(
                {
                    "event": "attempt",
                    "run_id": settings.run_id,
                    "scenario_id": scenario_id,
                    "design_id": ctx.design_id,
                    "module_id": ctx.module_id,
                    "attempt_number": number,
                    "outcome": attempt.outcome.value if attempt.outcome else None,
                    "mutation_entry_ids": [e.entry_id for e in attempt.entries],
                    "generation_seconds": attempt.generation_seconds,
                    "validation_seconds": attempt.validation_seconds,
                    "duplicates_regenerated": attempt.duplicates_regenerated,
                    "evidence": attempt.evidence,
                }
            )
        if attempt.outcome is None:
            break  # stalled generation will not improve on retry
        if settings.accepts(attempt.outcome):
            result = ScenarioResult(scenario_id, ctx.design_id, ctx.module_id, attempts, True)
            _log_end(scenario_log, settings, result)
            return result
    _log_end(scenario_log, settings, ScenarioResult(scenario_id, ctx.design_id, ctx.module_id, attempts, False))
    raise RetriesExhausted(scenario_id, attempts)


def _log_end(scenario_log: ScenarioLog | None, settings: ScenarioSettings, result: ScenarioResult) -> None:
    if scenario_log is None:
        return
    scenario_log.write(
        {
            "event": "scenario_end",
            "run_id": settings.run_id,
            "scenario_id": result.scenario_id,
            "design_id": result.design_id,
            "module_id": result.module_id,
            "status": "accepted" if result.accepted else "abandoned",
            "attempts": len(result.attempts),
            "outcomes": [a.outcome.value if a.outcome else None for a in result.attempts],
        }
    )


def run_module(
    ctx: ModuleContext,
    settings: ScenarioSettings,
    cache: MutationCache,
    backend,
    evaluator,
    *,
    quota: int,
    abandonment_limit: int = 10,
    scenario_log: ScenarioLog | None = None,
) -> list[ScenarioResult]:
    """Run scenarios until ``quota`` are accepted or too many are abandoned in a row."""
    prefix = scenario_prefix(ctx.design_id, ctx.file)
    number = len({e.scenario_id for e in cache.entries(module_id=ctx.module_id)})
    results: list[ScenarioResult] = []
    accepted = consecutive = 0
    while accepted < quota:
        number += 1
        sid = f"{prefix}.{number:04d}"
        try:
            result = run_scenario(ctx, settings, cache, backend, evaluator, scenario_id=sid, scenario_log=scenario_log)
        except RetriesExhausted as exc:
            results.append(ScenarioResult(sid, ctx.design_id, ctx.module_id, exc.attempts, False))
            consecutive += 1
            if consecutive >= abandonment_limit:
                log.warning("%s: %d consecutive abandoned scenarios, stopping module", ctx.module_id, consecutive)
                break
            continue
        results.append(result)
        accepted += 1
        consecutive = 0
    return results


# ---------------------------------------------------------------------------
# Parallel dispatch
# ---------------------------------------------------------------------------


@dataclass
class WorkItem:
    name: str
    design_id: str
    modules: list[str]


@dataclass
class WorkerResult:
    name: str
    design_id: str
    scenarios: list[ScenarioResult] = field(default_factory=list)
    wall_seconds: float = 0.0
    error: str | None = None
    traceback: str | None = None


def plan_work(designs: Iterable[tuple[str, list[str]]], mode: Parallelism | str) -> list[WorkItem]:
    """One item per design (inter-design, sequential) or per module (intra-design)."""
    mode = Parallelism(mode)
    items = []
    for design_id, modules in designs:
        if mode is Parallelism.INTRA_DESIGN:
            items.extend(WorkItem(f"{design_id}:{m}", design_id, [m]) for m in modules)
        else:
            items.append(WorkItem(design_id, design_id, list(modules)))
    return items


def dispatch_parallel(
    items: list[WorkItem], mode: Parallelism | str, worker: Callable[[WorkItem], list[ScenarioResult]]
) -> list[WorkerResult]:
    """Run ``worker`` over ``items``; sequential mode runs inline in order.

    A worker that raises is reported with its error; whatever it recorded in
    the shared cache before failing is kept.
    """
    if not items:
        raise ValueError("dispatch needs at least one work item")
    mode = Parallelism(mode)

    def guarded(item: WorkItem) -> WorkerResult:
        res = WorkerResult(item.name, item.design_id)
        t0 = time.perf_counter()
        try:
            res.scenarios = worker(item)
        except Exception as exc:  # surfaced as a worker panic in the report
            res.error = f"{type(exc).__name__}: {exc}"
            res.traceback = traceback.format_exc()
            log.error("worker %s failed: %s", item.name, res.error)
        res.wall_seconds = time.perf_counter() - t0
        return res

    if mode is Parallelism.SEQUENTIAL or len(items) == 1:
        return [guarded(item) for item in items]
    with ThreadPoolExecutor(max_workers=len(items), thread_name_prefix="bugsynth") as pool:
        return list(pool.map(guarded, items))


def new_run_id() -> str:
    return uuid.uuid4().hex


def check_baseline(design_id: str, evaluator, ws: Workspace) -> None:
    ok, reason = evaluator.baseline(ws)
    if not ok:
        raise BaselineGateFailed(design_id, reason)


def outcome_counter(results: Iterable[ScenarioResult]) -> Counter:
    return Counter("accepted" if r.accepted else "abandoned" for r in results)


__all__ = [
    "Mode",
    "Parallelism",
    "ScenarioSettings",
    "ModuleContext",
    "ScenarioAttempt",
    "ScenarioResult",
    "ScenarioLog",
    "WorkItem",
    "WorkerResult",
    "run_attempt",
    "run_scenario",
    "run_module",
    "plan_work",
    "dispatch_parallel",
    "check_baseline",
    "new_run_id",
    "outcome_counter",
]
