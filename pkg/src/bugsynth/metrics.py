"""Campaign metrics computed post hoc from the cache and the scenario log.

All fractions are plain floats in [0, 1] except the target-region hit rate,
which is a percentage. ``None`` is the no-data marker throughout.
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from bugsynth.memory import MutationEntry, Outcome

# ---------------------------------------------------------------------------
# Accuracy
# ---------------------------------------------------------------------------


@dataclass
class ScenarioSummary:
    scenario_id: str
    design_id: str
    module_id: str
    outcomes: list[Outcome | None]  # one per attempt, in attempt order
    accepted: bool | None = None

    def succeeded_within(self, retries: int, accept: Iterable[Outcome] = (Outcome.SUCCESS,)) -> bool:
        accept = set(accept)
        return any(o in accept for o in self.outcomes[: retries + 1])


def functional_accuracy(
    scenarios: Sequence[ScenarioSummary], within_retries: int, accept: Iterable[Outcome] = (Outcome.SUCCESS,)
) -> float | None:
    """Fraction of scenarios reaching an accepted outcome within ``within_retries`` retries."""
    if within_retries < 0:
        raise ValueError("within_retries must be non-negative")
    if not scenarios:
        return None
    accept = tuple(accept)
    return sum(s.succeeded_within(within_retries, accept) for s in scenarios) / len(scenarios)


def _counts(entries_or_counts) -> Counter:
    if isinstance(entries_or_counts, Mapping):
        return Counter({Outcome(k): v for k, v in entries_or_counts.items()})
    return Counter(e.outcome for e in entries_or_counts)


def syntactic_accuracy(entries_or_counts: Iterable[MutationEntry] | Mapping[Outcome | str, int]) -> float | None:
    """(Detected + Undetected) / finalized mutations.

    Accepts entries or an outcome-count mapping; pending entries are ignored.
    """
    c = _counts(entries_or_counts)
    total = c[Outcome.SUCCESS] + c[Outcome.SYNTAX_FAILURE] + c[Outcome.UNDETECTED]
    if total == 0:
        return None
    return (c[Outcome.SUCCESS] + c[Outcome.UNDETECTED]) / total


def first_attempt_entry_accuracy(entries: Iterable[MutationEntry]) -> float | None:
    """Detected fraction among finalized first-attempt entries (entry granularity)."""
    firsts = [e for e in entries if e.attempt_number == 1 and e.outcome.final]
    if not firsts:
        return None
    return sum(e.outcome is Outcome.SUCCESS for e in firsts) / len(firsts)


def accuracy_evolution(entries: Iterable[MutationEntry], window: int = 25) -> list[tuple[int, float]]:
    """Sliding-window success fraction over first-attempt entries in timestamp order.

    Each point is ``(n, value)`` where ``n`` counts entries up to the window's
    end. A window longer than the series yields one aggregate point.
    """
    if window < 1:
        raise ValueError("window must be at least 1")
    firsts = sorted(
        (e for e in entries if e.attempt_number == 1 and e.outcome.final),
        key=lambda e: (e.timestamp, e.entry_id or 0),
    )
    hits = [1 if e.outcome is Outcome.SUCCESS else 0 for e in firsts]
    if not hits:
        return []
    if window >= len(hits):
        return [(len(hits), sum(hits) / len(hits))]
    points = []
    running = sum(hits[:window])
    points.append((window, running / window))
    for i in range(window, len(hits)):
        running += hits[i] - hits[i - window]
        points.append((i + 1, running / window))
    return points


# ---------------------------------------------------------------------------
# Spread over target regions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TargetRange:
    start_line: int
    end_line: int
    file: str | None = None  # None matches any file

    def __post_init__(self) -> None:
        if self.end_line < self.start_line:
            raise ValueError(f"range {self.start_line}-{self.end_line} is empty")

    @property
    def length(self) -> int:
        return self.end_line - self.start_line + 1

    def contains(self, file: str | None, line: int) -> bool:
        if self.file is not None and file is not None and file != self.file:
            return False
        return self.start_line <= line <= self.end_line


@dataclass
class SpreadDistribution:
    n: int
    relative_density: list[float]
    p: list[float]
    entropy_normalized: float | None  # None when no mutation lands in any range

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "relative_density": self.relative_density,
            "p": self.p,
            "entropy_normalized": self.entropy_normalized,
        }


def normalized_entropy(p: Sequence[float]) -> float:
    """Shannon entropy of ``p`` divided by its maximum (natural log; 0 log 0 = 0).

    A single-element distribution is defined as perfectly uniform (1.0).
    """
    n = len(p)
    if n == 0:
        raise ValueError("empty distribution")
    if n == 1:
        return 1.0
    h = -math.fsum(x * math.log(x) for x in p if x > 0)
    return min(1.0, max(0.0, h / math.log(n)))


def spread_from_counts(counts: Sequence[int], lengths: Sequence[int]) -> SpreadDistribution:
    if len(counts) != len(lengths) or not counts:
        raise ValueError("need one count per range and at least one range")
    if any(n <= 0 for n in lengths):
        raise ValueError("range lengths must be positive")
    density = [c / n for c, n in zip(counts, lengths)]
    total = math.fsum(density)
    if total == 0:
        return SpreadDistribution(len(counts), density, [0.0] * len(counts), None)
    p = [d / total for d in density]
    return SpreadDistribution(len(counts), density, p, normalized_entropy(p))


def _locate(loc) -> tuple[str | None, int]:
    if isinstance(loc, int):
        return None, loc
    file, line = loc
    return file, int(line)


def spread_score(
    mutation_locations: Iterable[tuple[str | None, int] | int], mtrs: Sequence[TargetRange]
) -> SpreadDistribution:
    """Entropy of mutation density over ``mtrs``; a location counts for the first range containing it."""
    if not mtrs:
        raise ValueError("at least one target region is required")
    counts = [0] * len(mtrs)
    for loc in mutation_locations:
        file, line = _locate(loc)
        for i, r in enumerate(mtrs):
            if r.contains(file, line):
                counts[i] += 1
                break
    return spread_from_counts(counts, [r.length for r in mtrs])


def mtr_hit_rate(
    mutation_locations: Iterable[tuple[str | None, int] | int], mtrs: Sequence[TargetRange]
) -> float | None:
    """Percentage of mutations inside any of ``mtrs``; ``None`` for no mutations."""
    locs = [_locate(loc) for loc in mutation_locations]
    if not locs:
        return None
    inside = sum(any(r.contains(f, line) for r in mtrs) for f, line in locs)
    return 100.0 * inside / len(locs)


# ---------------------------------------------------------------------------
# Throughput
# ---------------------------------------------------------------------------


def throughput(success_count: int, wall_seconds: float) -> float:
    """Accepted bugs per hour."""
    if wall_seconds <= 0:
        raise ValueError("wall_seconds must be positive")
    return success_count / (wall_seconds / 3600.0)


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------

_LABELS = {
    Outcome.SUCCESS: "detected",
    Outcome.SYNTAX_FAILURE: "syntax_failure",
    Outcome.UNDETECTED: "undetected",
}


def outcome_table(entries: Iterable[MutationEntry]) -> dict[str, int]:
    c = Counter(e.outcome for e in entries)
    table = {label: c[o] for o, label in _LABELS.items()}
    table["total"] = sum(table.values())
    if c[Outcome.PENDING]:
        table["pending"] = c[Outcome.PENDING]
    return table


def scenarios_from_log(records: Iterable[dict[str, Any]], run_id: str | None = None) -> list[ScenarioSummary]:
    """Rebuild scenarios from ``scenario_end`` records of the timing log."""
    out = []
    for rec in records:
        if rec.get("event") != "scenario_end" or (run_id and rec.get("run_id") != run_id):
            continue
        outcomes = [Outcome(o) if o else None for o in rec.get("outcomes", [])]
        out.append(
            ScenarioSummary(rec["scenario_id"], rec["design_id"], rec["module_id"], outcomes, rec["status"] == "accepted")
        )
    return out


def scenarios_from_entries(entries: Iterable[MutationEntry]) -> list[ScenarioSummary]:
    """Fallback when no timing log exists: group cache entries by scenario and attempt."""
    grouped: dict[str, dict[int, MutationEntry]] = defaultdict(dict)
    for e in entries:
        grouped[e.scenario_id].setdefault(e.attempt_number, e)
    out = []
    for sid, attempts in grouped.items():
        first = next(iter(attempts.values()))
        outcomes = [attempts[n].outcome if n in attempts else None for n in range(1, max(attempts) + 1)]
        out.append(ScenarioSummary(sid, first.design_id, first.module_id, outcomes))
    return out


@dataclass
class ModuleTargets:
    module_id: str
    file: str
    ranges: list[TargetRange]


@dataclass
class CampaignReport:
    run_id: str
    mode: str
    max_retries: int
    designs: dict[str, dict[str, Any]] = field(default_factory=dict)
    overall: dict[str, Any] = field(default_factory=dict)
    evolution: list[tuple[int, float]] = field(default_factory=list)
    evolution_window: int = 25
    worker_errors: list[dict[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "mode": self.mode,
            "max_retries": self.max_retries,
            "designs": self.designs,
            "overall": self.overall,
            "evolution_window": self.evolution_window,
            "evolution": [{"n": n, "accuracy": v} for n, v in self.evolution],
            "worker_errors": self.worker_errors,
        }


def _accept_set(mode: str) -> tuple[Outcome, ...]:
    if mode == "coverage_assessment":
        return (Outcome.SUCCESS, Outcome.UNDETECTED)
    return (Outcome.SUCCESS,)


def _block(
    entries: list[MutationEntry],
    scenarios: list[ScenarioSummary],
    max_retries: int,
    accept: tuple[Outcome, ...],
    seconds: float | None,
) -> dict[str, Any]:
    firsts = [e for e in entries if e.attempt_number == 1]
    accepted = sum(s.succeeded_within(max_retries, accept) for s in scenarios)
    return {
        "outcomes_all_attempts": outcome_table(entries),
        "outcomes_first_attempt": outcome_table(firsts),
        "scenarios": len(scenarios),
        "scenarios_accepted": accepted,
        "functional_accuracy_within_max_retries": functional_accuracy(scenarios, max_retries, accept),
        "first_attempt_accuracy_scenarios": functional_accuracy(scenarios, 0, accept),
        "first_attempt_accuracy_entries": first_attempt_entry_accuracy(entries),
        "syntactic_accuracy_first_attempt": syntactic_accuracy(firsts),
        "syntactic_accuracy_all_attempts": syntactic_accuracy(entries),
        "scenario_seconds": seconds,
        "bugs_per_hour": throughput(accepted, seconds) if seconds else None,
    }


def build_report(
    entries: Sequence[MutationEntry],
    scenario_records: Sequence[dict[str, Any]] = (),
    *,
    run_id: str = "",
    mode: str = "generation",
    max_retries: int = 2,
    evolution_window: int = 25,
    targets: Sequence[ModuleTargets] = (),
    wall_seconds: float | None = None,
    worker_errors: Sequence[dict[str, str]] = (),
) -> CampaignReport:
    """Aggregate per-design and overall metrics.

    ``entries`` should already be restricted to the campaign of interest.
    Scenario seconds are summed from attempt timings (the sequential cost);
    ``wall_seconds`` is the elapsed campaign time and gives parallel throughput.
    """
    accept = _accept_set(mode)
    records = [r for r in scenario_records if not run_id or r.get("run_id") == run_id]
    scenarios = scenarios_from_log(records) if records else scenarios_from_entries(entries)
    seconds: dict[str, float] = defaultdict(float)
    duplicates: Counter = Counter()
    for r in records:
        if r.get("event") == "attempt":
            seconds[r["design_id"]] += r.get("generation_seconds", 0.0) + r.get("validation_seconds", 0.0)
            duplicates[r["design_id"]] += r.get("duplicates_regenerated", 0)

    report = CampaignReport(run_id, mode, max_retries, evolution_window=evolution_window)
    design_ids = sorted({e.design_id for e in entries} | {s.design_id for s in scenarios})
    by_target = {t.module_id: t for t in targets}
    for d in design_ids:
        d_entries = [e for e in entries if e.design_id == d]
        d_scen = [s for s in scenarios if s.design_id == d]
        block = _block(d_entries, d_scen, max_retries, accept, seconds.get(d) if records else None)
        block["duplicates_regenerated"] = duplicates[d]
        spreads = {}
        for module_id in sorted({e.module_id for e in d_entries}):
            t = by_target.get(module_id)
            if t is None or not t.ranges:
                continue
            locs = [(e.file, e.target_start) for e in d_entries if e.module_id == module_id and e.outcome in accept]
            dist = spread_score(locs, t.ranges)
            spreads[module_id] = {
                "spread": dist.entropy_normalized,
                "mtr_hit_rate": mtr_hit_rate(locs, t.ranges),
                "mutations": len(locs),
                "distribution": dist.to_dict(),
            }
        block["spread"] = spreads
        report.designs[d] = block

    overall = _block(list(entries), scenarios, max_retries, accept, sum(seconds.values()) if records else None)
    overall["duplicates_regenerated"] = sum(duplicates.values())
    overall["wall_seconds"] = wall_seconds
    overall["bugs_per_hour_parallel"] = (
        throughput(overall["scenarios_accepted"], wall_seconds) if wall_seconds else None
    )
    report.overall = overall
    report.evolution = accuracy_evolution(entries, evolution_window)
    report.worker_errors = list(worker_errors)
    return report


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def _pct(x: float | None) -> str:
    return "n/a" if x is None else f"{100 * x:.1f}%"


def _num(x: float | None, fmt: str = "{:.3f}") -> str:
    return "n/a" if x is None else fmt.format(x)


def _table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    line = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
    sep = "  ".join("-" * w for w in widths)
    body = ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
    return "\n".join([line, sep, *body])


def render_text(report: CampaignReport) -> str:
    rows = []
    for d, b in [*report.designs.items(), ("TOTAL", report.overall)]:
        t = b["outcomes_all_attempts"]
        rows.append([d, str(t["detected"]), str(t["syntax_failure"]), str(t["undetected"]), str(t["total"])])
    parts = [f"Campaign {report.run_id or '(all runs)'}  mode={report.mode}  max_retries={report.max_retries}", ""]
    parts += ["Mutation outcomes (all attempts)", _table(["design", "detected", "syntax_failure", "undetected", "total"], rows), ""]

    rows = []
    for d, b in [*report.designs.items(), ("TOTAL", report.overall)]:
        rows.append(
            [
                d,
                f"{b['scenarios_accepted']}/{b['scenarios']}",
                _pct(b["functional_accuracy_within_max_retries"]),
                _pct(b["first_attempt_accuracy_scenarios"]),
                _pct(b["first_attempt_accuracy_entries"]),
                _pct(b["syntactic_accuracy_first_attempt"]),
                str(b["duplicates_regenerated"]),
            ]
        )
    parts += [
        "Accuracy",
        _table(
            ["design", "accepted", "functional (max retries)", "first attempt (scenarios)",
             "first attempt (entries)", "syntactic (first attempt)", "duplicates"],
            rows,
        ),
        "",
    ]

    rows = [
        [d, _num(b["scenario_seconds"] and b["scenario_seconds"] / 60, "{:.3f}"), _num(b["bugs_per_hour"])]
        for d, b in report.designs.items()
    ]
    rows.append(
        ["parallel", _num(report.overall.get("wall_seconds") and report.overall["wall_seconds"] / 60, "{:.3f}"),
         _num(report.overall.get("bugs_per_hour_parallel"))]
    )
    parts += ["Speed", _table(["design", "minutes", "bugs/hour"], rows), ""]

    rows = [
        [m, _num(s["spread"]), _num(s["mtr_hit_rate"], "{:.1f}%"), str(s["mutations"])]
        for b in report.designs.values()
        for m, s in b["spread"].items()
    ]
    if rows:
        parts += ["Spread over target regions", _table(["module", "spread", "hit rate", "mutations"], rows), ""]
    for err in report.worker_errors:
        parts.append(f"WORKER FAILED {err['worker']}: {err['error']}")
    return "\n".join(parts).rstrip() + "\n"


def evolution_csv(series: Sequence[tuple[int, float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "first_attempt_accuracy"])
    writer.writerows((n, f"{v:.6f}") for n, v in series)
    return buf.getvalue()
