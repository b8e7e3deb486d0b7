"""The three mutation agents: region selector, mutation selector, injector.

Each agent renders its template, asks the backend for one JSON object and
post-validates it. Validation failures are fed back to the backend and
retried; nothing invalid ever leaves these functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any

from bugsynth.agents.prompts import render
from bugsynth.agents.structured import complete_structured
from bugsynth.catalog import MutationIndex, MutationSpec
from bugsynth.errors import InvalidChoice, NoMutableRegion, NoOpMutation
from bugsynth.hdl import has_code, normalize_block, split_lines
from bugsynth.memory import MutationEntry, RegionHistory, RegionStats
from bugsynth.partition import ModulePartition, Region, number_lines


@dataclass
class RegionChoice:
    region_index: int
    rationale: str
    proposed_class_id: str = ""


@dataclass
class MutationChoice:
    class_id: str
    start_line: int
    end_line: int
    plan: str
    target_block: str

    @property
    def line_count(self) -> int:
        return self.end_line - self.start_line + 1


@dataclass
class InjectedMutation:
    mutated_block: str
    summary: str


def _fmt_rate(stat: RegionStats | None) -> str:
    if stat is None or stat.attempts == 0:
        return "no attempts yet"
    classes = ", ".join(f"{k}: {v}" for k, v in sorted(stat.class_histogram.items()))
    return f"{stat.attempts} attempts, success rate {stat.success_rate:.0%}, classes {{{classes}}}"


def render_partition(partition: ModulePartition) -> str:
    out = []
    for r in partition.regions:
        flag = "" if r.mutable else " [not mutable]"
        out.append(
            f"Region {r.index} (lines {r.start_line}-{r.end_line}, {r.length} lines, "
            f"{r.mutation_count} mutations){flag}: {r.synopsis}"
        )
    return "\n".join(out)


def select_region(
    partition: ModulePartition,
    stats: dict[int, RegionStats],
    index: MutationIndex,
    backend,
    *,
    coverage_mode: bool = False,
    template_dir: str | Path | None = None,
) -> RegionChoice:
    mutable = partition.mutable_regions()
    if not mutable:
        raise NoMutableRegion(f"{partition.source_id} has no mutable region")
    if len(mutable) == 1:
        return RegionChoice(mutable[0].index, "only mutable region in the partition")

    if coverage_mode:
        history = "(disabled: coverage-assessment mode, success rates are not used for selection)"
    else:
        history = "\n".join(f"Region {r.index}: {_fmt_rate(stats.get(r.index))}" for r in partition.regions)
    prompt = render(
        "region_selector",
        template_dir,
        module_id=partition.source_id,
        partition=render_partition(partition),
        history=history,
        index=index.render(),
    )
    context = {
        "module_id": partition.source_id,
        "coverage_mode": coverage_mode,
        "regions": [
            {
                "index": r.index,
                "start_line": r.start_line,
                "end_line": r.end_line,
                "synopsis": r.synopsis,
                "mutation_count": r.mutation_count,
                "mutable": r.mutable,
            }
            for r in partition.regions
        ],
        "class_ids": index.class_ids,
    }
    valid = {r.index for r in mutable}

    def check(value: dict[str, Any]) -> RegionChoice:
        idx = value["region_index"]
        if idx not in valid:
            raise InvalidChoice(
                f"region_index {idx} is not a mutable region; choose one of {sorted(valid)}"
            )
        proposed = value.get("proposed_class_id", "") or ""
        if proposed not in index.class_ids:
            proposed = ""  # advisory field; drop unknown values rather than fail
        return RegionChoice(idx, value["rationale"], proposed)

    return complete_structured(prompt, "region_choice", backend, context=context, check=check)


def _history_lines(entries: list[MutationEntry]) -> str:
    if not entries:
        return "(none)"
    return "\n".join(
        f"- {e.class_id} at lines {e.target_start}-{e.target_end} ({e.outcome.value}): {e.summary}"
        for e in entries
    )


def select_mutation(
    region_source: str,
    index: MutationIndex,
    history: RegionHistory,
    backend,
    *,
    region: Region,
    module_id: str = "",
    occupied: list[tuple[int, int]] | None = None,
    rejected: list[dict[str, Any]] | None = None,
    template_dir: str | Path | None = None,
) -> MutationChoice:
    lines = split_lines(region_source)
    if not lines:
        raise ValueError("region source is empty")
    first, last = region.start_line, region.start_line + len(lines) - 1
    occupied = list(occupied or [])
    rejected = list(rejected or [])
    prompt = render(
        "mutation_selector",
        template_dir,
        index=index.render(),
        region_index=region.index,
        module_id=module_id,
        first_line=first,
        last_line=last,
        code=number_lines(lines, first),
        succeeded=_history_lines(history.succeeded),
        failed=_history_lines(history.failed),
        occupied=", ".join(f"{s}-{e}" for s, e in occupied) or "(none)",
        rejected="\n".join(
            f"- {r['class_id']} at lines {r['start_line']}-{r['end_line']}: {r['reason']}" for r in rejected
        )
        or "(none)",
    )
    context = {
        "region_lines": lines,
        "first_line": first,
        "class_ids": index.class_ids,
        "history": [
            {"class_id": e.class_id, "start_line": e.target_start, "end_line": e.target_end, "outcome": e.outcome.value}
            for e in history.succeeded + history.failed
        ],
        "occupied": occupied,
        "rejected": rejected,
    }

    def check(value: dict[str, Any]) -> MutationChoice:
        cid = value["class_id"]
        if cid not in index.class_ids:
            raise InvalidChoice(f"class_id {cid!r} is not in the mutation index")
        start, end = value["start_line"], value["end_line"]
        if start > end or start < first or end > last:
            raise InvalidChoice(f"target lines {start}-{end} must lie within the region ({first}-{last})")
        arity = index.get(cid).arity
        count = end - start + 1
        if count > arity.max_lines:
            raise InvalidChoice(
                f"{cid} is {arity.value}; target block may span at most {arity.max_lines} line(s), got {count}"
            )
        for s, e in occupied:
            if start <= e and s <= end:
                raise InvalidChoice(f"lines {start}-{end} overlap lines {s}-{e} already mutated in this scenario")
        block = lines[start - first : end - first + 1]
        if not has_code(block):
            raise InvalidChoice(f"lines {start}-{end} contain no code")
        return MutationChoice(cid, start, end, value.get("plan", ""), "\n".join(block))

    return complete_structured(prompt, "mutation_choice", backend, context=context, check=check)


def inject_mutation(
    choice: MutationChoice,
    region_source: str,
    spec: MutationSpec,
    backend,
    *,
    region: Region,
    template_dir: str | Path | None = None,
) -> InjectedMutation:
    lines = split_lines(region_source)
    first = region.start_line
    target = lines[choice.start_line - first : choice.end_line - first + 1]
    if "\n".join(target) != choice.target_block:
        raise ValueError("choice does not match the region source")
    prompt = render(
        "injector",
        template_dir,
        class_id=choice.class_id,
        spec=spec.body,
        first_line=first,
        last_line=first + len(lines) - 1,
        code=number_lines(lines, first),
        start_line=choice.start_line,
        end_line=choice.end_line,
        target=choice.target_block,
        plan=choice.plan or "(none)",
        line_count=choice.line_count,
    )
    context = {
        "class_id": choice.class_id,
        "target_lines": target,
        "start_line": choice.start_line,
        "end_line": choice.end_line,
        "region_lines": lines,
        "region_first_line": first,
    }

    def check(value: dict[str, Any]) -> InjectedMutation:
        mutated = value["mutated_block"].rstrip("\n")
        if len(split_lines(mutated)) != choice.line_count:
            raise InvalidChoice(
                f"mutated block must keep exactly {choice.line_count} line(s), got {len(split_lines(mutated))}"
            )
        if normalize_block(mutated) == normalize_block(choice.target_block):
            raise NoOpMutation("mutated block is identical to the target block")
        summary = value["summary"].strip()
        if not summary:
            raise InvalidChoice("summary must not be empty")
        return InjectedMutation(mutated, summary)

    return complete_structured(prompt, "injected_mutation", backend, context=context, check=check)
