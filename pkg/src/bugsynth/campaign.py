"""Top-level campaign runner binding configuration, workers and reporting."""

from __future__ import annotations

import json
import logging
import re
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from bugsynth.catalog import IndexRegistry
from bugsynth.config import (
    CampaignConfig,
    build_backend,
    build_evaluator,
    index_mapping,
    module_id,
    module_targets,
    scenario_settings,
    splitter_config,
)
from bugsynth.errors import BugsynthError, ConfigInvalid
from bugsynth.memory import MutationCache
from bugsynth.metrics import CampaignReport, build_report, evolution_csv, render_text
from bugsynth.orchestrator import (
    ModuleContext,
    ScenarioLog,
    ScenarioResult,
    WorkerResult,
    WorkItem,
    check_baseline,
    dispatch_parallel,
    new_run_id,
    plan_work,
    run_module,
)
from bugsynth.partition import ModulePartition, partition_from_mtrs, partition_module
from bugsynth.patch import Workspace

log = logging.getLogger(__name__)


@dataclass
class CampaignResult:
    run_id: str
    report: CampaignReport
    workers: list[WorkerResult] = field(default_factory=list)
    wall_seconds: float = 0.0

    @property
    def scenarios(self) -> list[ScenarioResult]:
        return [s for w in self.workers for s in w.scenarios]

    @property
    def failed_workers(self) -> list[WorkerResult]:
        return [w for w in self.workers if w.error]


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name)


def archive_config(cfg: CampaignConfig, raw_text: str | None = None) -> None:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if raw_text is not None:
        (out / "config.json").write_text(raw_text, encoding="utf-8")
    (out / "config.resolved.json").write_text(cfg.model_dump_json(indent=2) + "\n", encoding="utf-8")


def partition_for(cfg: CampaignConfig, design, module, source: str, backend) -> ModulePartition:
    mid = module_id(design.design_id, module.path)
    if module.mtrs:
        return partition_from_mtrs(source, [m.model_dump() for m in module.mtrs], mid)
    return partition_module(source, splitter_config(cfg), backend, mid)


def baseline_gate(cfg: CampaignConfig, evaluators: dict[str, Any], design_ids: list[str]) -> None:
    """Every listed design must compile and pass its suite before mutation starts."""
    root = Path(cfg.output_dir) / "workspaces"
    for d in design_ids:
        design = cfg.design(d)
        ws = Workspace.create(design.root, root / f"{_safe(d)}.baseline")
        try:
            check_baseline(d, evaluators[d], ws)
        finally:
            ws.remove()


def run_campaign(
    cfg: CampaignConfig,
    *,
    backend=None,
    evaluators: dict[str, Any] | None = None,
    cache: MutationCache | None = None,
    raw_config_text: str | None = None,
    keep_workspaces: bool = False,
) -> CampaignResult:
    """Run a full campaign and write report files into ``cfg.output_dir``.

    ``backend`` and ``evaluators`` (keyed by design id) default to what the
    configuration describes. Raises :class:`BaselineGateFailed` before any
    mutation if a pristine design is unhealthy.
    """
    out = Path(cfg.output_dir)
    archive_config(cfg, raw_config_text)
    run_id = new_run_id()
    cache = cache if cache is not None else MutationCache(cfg.resolved_cache_path)
    registry = IndexRegistry(index_mapping(cfg))
    try:
        for d in cfg.designs:
            for m in d.modules:
                registry.select(d.design_id, module_id(d.design_id, m.path))
    except BugsynthError as exc:
        raise ConfigInvalid(f"mutation catalog: {exc}") from exc

    active = [
        d for d in cfg.designs if any(cfg.quota(d, m) > 0 for m in d.modules)
    ]
    scen_log = ScenarioLog(out / "scenarios.jsonl")
    settings = scenario_settings(cfg, run_id)
    t0 = time.perf_counter()
    workers: list[WorkerResult] = []
    if active:
        backend = backend if backend is not None else build_backend(cfg)
        if evaluators is None:
            evaluators = {d.design_id: build_evaluator(d, out / "logs" / _safe(d.design_id)) for d in active}
        baseline_gate(cfg, evaluators, [d.design_id for d in active])
        scen_log.write({"event": "campaign_start", "run_id": run_id, "parallelism": cfg.parallelism.value,
                        "mode": cfg.mode.value, "time": time.time()})

        def worker(item: WorkItem) -> list[ScenarioResult]:
            design = cfg.design(item.design_id)
            ws = Workspace.create(design.root, out / "workspaces" / _safe(item.name))
            results: list[ScenarioResult] = []
            try:
                for path in item.modules:
                    module = next(m for m in design.modules if m.path == path)
                    quota = cfg.quota(design, module)
                    if quota == 0:
                        continue
                    mid = module_id(design.design_id, path)
                    part = partition_for(cfg, design, module, "\n".join(ws.read_lines(path)), backend)
                    pdir = out / "partitions"
                    pdir.mkdir(parents=True, exist_ok=True)
                    (pdir / f"{_safe(mid)}.json").write_text(part.dumps() + "\n", encoding="utf-8")
                    ctx = ModuleContext(design.design_id, mid, path, part, registry.select(design.design_id, mid), ws)
                    results += run_module(
                        ctx, settings, cache, backend, evaluators[design.design_id],
                        quota=quota, abandonment_limit=cfg.abandonment_limit, scenario_log=scen_log,
                    )
            finally:
                if not keep_workspaces:
                    ws.remove()
            return results

        designs = [(d.design_id, [m.path for m in d.modules if cfg.quota(d, m) > 0]) for d in active]
        workers = dispatch_parallel(plan_work(designs, cfg.parallelism), cfg.parallelism, worker)
    wall = time.perf_counter() - t0
    if active:
        scen_log.write({"event": "campaign_end", "run_id": run_id, "wall_seconds": wall, "time": time.time()})

    report = build_report(
        cache.entries(run_id=run_id),
        scen_log.records,
        run_id=run_id,
        mode=cfg.mode.value,
        max_retries=cfg.max_retries,
        evolution_window=cfg.evolution_window,
        targets=module_targets(cfg),
        wall_seconds=wall if active else None,
        worker_errors=[{"worker": w.name, "error": w.error} for w in workers if w.error],
    )
    write_report(report, out)
    if not keep_workspaces:
        shutil.rmtree(out / "workspaces", ignore_errors=True)
    return CampaignResult(run_id, report, workers, wall)


def write_report(report: CampaignReport, out: str | Path) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    (out / "report.txt").write_text(render_text(report), encoding="utf-8")
    (out / "evolution.csv").write_text(evolution_csv(report.evolution), encoding="utf-8")


def report_from_files(cfg: CampaignConfig, run_id: str | None = None) -> CampaignReport:
    """Recompute the report from the persisted cache and timing log.

    Without ``run_id`` the most recent campaign in the log is used; if the log
    holds none, every cache entry is included.
    """
    out = Path(cfg.output_dir)
    records = ScenarioLog.read(out / "scenarios.jsonl")
    if run_id is None:
        starts = [r["run_id"] for r in records if r.get("event") == "campaign_start"]
        run_id = starts[-1] if starts else None
    cache = MutationCache(cfg.resolved_cache_path)
    wall = next(
        (r["wall_seconds"] for r in records if r.get("event") == "campaign_end" and r.get("run_id") == run_id),
        None,
    )
    return build_report(
        cache.entries(run_id=run_id),
        records,
        run_id=run_id or "",
        mode=cfg.mode.value,
        max_retries=cfg.max_retries,
        evolution_window=cfg.evolution_window,
        targets=module_targets(cfg),
        wall_seconds=wall,
    )
