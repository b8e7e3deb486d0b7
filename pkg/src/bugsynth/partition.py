"""Split an HDL module into an ordered, gap-free set of mutation target regions."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Any, Iterable

from bugsynth.agents.structured import complete_structured
from bugsynth.errors import AgentOutputError, BackendError, PartitionInvalid, SchemaViolation
from bugsynth.hdl import NestingScanner, has_code, is_open_construct, split_lines, strip_comments

log = logging.getLogger(__name__)


@dataclass
class Region:
    index: int
    start_line: int
    end_line: int
    synopsis: str = ""
    mutation_count: int = 0
    mutable: bool = True

    @property
    def length(self) -> int:
        return self.end_line - self.start_line + 1

    def contains(self, start: int, end: int | None = None) -> bool:
        end = start if end is None else end
        return self.start_line <= start and end <= self.end_line


@dataclass
class ModulePartition:
    source_id: str
    total_lines: int
    regions: list[Region] = field(default_factory=list)
    origin: str = "agent"  # agent | fallback | engineer
    fallback: bool = False

    def region(self, index: int) -> Region:
        for r in self.regions:
            if r.index == index:
                return r
        raise KeyError(index)

    def mutable_regions(self) -> list[Region]:
        return [r for r in self.regions if r.mutable]

    def region_of_line(self, line: int) -> Region | None:
        for r in self.regions:
            if r.contains(line):
                return r
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "source_id": self.source_id,
            "total_lines": self.total_lines,
            "origin": self.origin,
            "fallback": self.fallback,
            "regions": [asdict(r) for r in self.regions],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModulePartition":
        regions = [
            Region(
                index=int(r["index"]),
                start_line=int(r["start_line"]),
                end_line=int(r["end_line"]),
                synopsis=str(r.get("synopsis", "")),
                mutation_count=int(r.get("mutation_count", 0)),
                mutable=bool(r.get("mutable", True)),
            )
            for r in data["regions"]
        ]
        return cls(
            source_id=str(data["source_id"]),
            total_lines=int(data["total_lines"]),
            regions=regions,
            origin=str(data.get("origin", "agent")),
            fallback=bool(data.get("fallback", False)),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ModulePartition":
        return cls.from_dict(json.loads(text))


def default_guidelines() -> str:
    return resources.files("bugsynth.data").joinpath("splitter_guidelines.txt").read_text(
        encoding="utf-8"
    )


@dataclass
class SplitterConfig:
    chunk_size_lines: int = 200
    auxiliary_lines: int = 5
    context_window_lines: int = 300
    guidelines: str = field(default_factory=default_guidelines)
    repair_attempts: int = 2
    allow_fallback: bool = True
    template_dir: str | None = None

    def __post_init__(self) -> None:
        if self.chunk_size_lines < 1 or self.auxiliary_lines < 1:
            raise ValueError("chunk_size_lines and auxiliary_lines must be positive")
        if self.auxiliary_lines >= self.chunk_size_lines:
            raise ValueError("auxiliary_lines must be smaller than chunk_size_lines")


# ---------------------------------------------------------------------------
# Coverage checking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Defect:
    kind: str  # gap | overlap | out_of_range | inverted | unordered | total_mismatch
    start_line: int
    end_line: int
    detail: str = ""

    def __str__(self) -> str:
        where = (
            f"line {self.start_line}"
            if self.start_line == self.end_line
            else f"lines {self.start_line}-{self.end_line}"
        )
        return f"{self.kind} at {where}" + (f": {self.detail}" if self.detail else "")


def _runs(lines: Iterable[int]) -> list[tuple[int, int]]:
    runs: list[tuple[int, int]] = []
    for n in lines:
        if runs and runs[-1][1] == n - 1:
            runs[-1] = (runs[-1][0], n)
        else:
            runs.append((n, n))
    return runs


def coverage_defects(spans: list[tuple[int, int]], first: int, last: int) -> list[Defect]:
    """Defects of ``spans`` as an exact cover of ``first..last``."""
    defects: list[Defect] = []
    hits = [0] * (last - first + 1)
    prev_start = None
    for start, end in spans:
        if start > end:
            defects.append(Defect("inverted", start, end, "start_line after end_line"))
            continue
        if prev_start is not None and start < prev_start:
            defects.append(Defect("unordered", start, end, "regions not sorted by start_line"))
        prev_start = start
        if start < first or end > last:
            lo, hi = max(start, first), min(end, last)
            defects.append(
                Defect("out_of_range", start, end, f"valid range is {first}-{last}")
            )
            if lo > hi:
                continue
            start, end = lo, hi
        for n in range(start, end + 1):
            hits[n - first] += 1
    over = [first + i for i, h in enumerate(hits) if h > 1]
    gaps = [first + i for i, h in enumerate(hits) if h == 0]
    defects += [Defect("overlap", a, b) for a, b in _runs(over)]
    defects += [Defect("gap", a, b) for a, b in _runs(gaps)]
    return defects


def validate_partition(partition: ModulePartition, source: str) -> list[Defect]:
    total = len(split_lines(source))
    defects: list[Defect] = []
    if partition.total_lines != total:
        defects.append(
            Defect("total_mismatch", 1, max(total, 1), f"partition says {partition.total_lines} lines, source has {total}")
        )
    spans = [(r.start_line, r.end_line) for r in partition.regions]
    if total == 0:
        return defects + [Defect("out_of_range", s, e) for s, e in spans]
    return defects + coverage_defects(spans, 1, total)


# ---------------------------------------------------------------------------
# Syntactic splitter (fallback and mock policy)
# ---------------------------------------------------------------------------

_ALWAYS = {"always", "always_ff", "always_comb", "always_latch", "initial", "final"}
_DECL = {
    "logic", "wire", "reg", "bit", "byte", "int", "integer", "genvar", "localparam",
    "parameter", "typedef", "input", "output", "inout", "import", "tri", "var", "string",
}
_UNIT = {"module", "macromodule", "interface", "program", "package"}
_GENERATE = {"generate", "for", "if", "case"}
_GROUPABLE = {"assign", "decl", "macro"}
_INSTANCE = re.compile(r"^[A-Za-z_]\w*(\s*::\s*\w+)?\s*(#|[A-Za-z_]\w*\s*(\[[^\]]*\]\s*)?\()")
_USER_DECL = re.compile(
    r"^[A-Za-z_]\w*(\s*::\s*\w+)?\s+[A-Za-z_]\w*(\s*\[[^\]]*\])*(\s*,\s*[A-Za-z_]\w*)*\s*(=.*)?;$"
)

SYNOPSES = {
    "module": "Module declaration and interface ports",
    "assign": "Continuous assignments",
    "decl": "Signal, type and parameter declarations",
    "always_ff": "Sequential always_ff block (registered state update)",
    "always_comb": "Combinational always_comb block",
    "always_latch": "Latch-inferring always_latch block",
    "always": "Procedural always block",
    "initial": "Initial block",
    "final": "Final block",
    "generate": "Generate construct",
    "function": "Function definition",
    "task": "Task definition",
    "instance": "Submodule instantiation",
    "macro": "Macro invocations (assertions and helpers)",
    "comment": "Comment or blank lines only",
    "other": "Miscellaneous logic",
}


def _kind(code: str) -> str | None:
    word = re.match(r"[`A-Za-z_][\w$]*", code)
    if not word:
        return None
    w = word.group(0)
    if w.startswith("`"):
        return "macro"
    if w in _ALWAYS:
        return w
    if w == "assign":
        return "assign"
    if w in _DECL:
        return "decl"
    if w in _UNIT:
        return "module"
    if w in {"function", "task"}:
        return w
    if w in _GENERATE:
        return "generate"
    if w.startswith("end"):
        return None
    if _USER_DECL.match(code):
        return "decl"
    if _INSTANCE.match(code):
        return "instance"
    return None


def _first_code(text: str) -> str | None:
    code, _ = strip_comments(text.split("\n"))
    return next((c.strip() for c in code if c.strip()), None)


def syntactically_continues(tail: str, following: str) -> bool:
    """Whether ``following`` belongs to the region whose text is ``tail``.

    True when the tail leaves a block, bracket or header open, when the next
    code line cannot open a region (``end``, ``else``, ...), or when it extends
    a groupable run (assigns, declarations, macros) of the same kind. This is
    the rule :func:`syntactic_split` applies inside one span.
    """
    if is_open_construct(tail):
        return True
    nxt = _first_code(following)
    if nxt is None:
        return False
    kind = _kind(nxt)
    if kind is None:
        return True
    head = _first_code(tail)
    return kind in _GROUPABLE and head is not None and _kind(head) == kind


def syntactic_split(lines: list[str], first_line: int = 1) -> list[tuple[int, int, str]]:
    """Group lines at top-level construct boundaries.

    Returns ``(start, end, kind)`` spans covering every input line. Leading
    comment/blank runs attach to the construct that follows them; runs of
    assigns, declarations or macro lines group into a single span.
    """
    code, _ = strip_comments(lines)
    scanner = NestingScanner()
    spans: list[list[Any]] = []
    pending: int | None = None
    for i, c in enumerate(code):
        lineno = first_line + i
        at_top = scanner.closed
        text = c.strip()
        if not text:
            if at_top:
                if pending is None:
                    pending = lineno
            else:
                spans[-1][1] = lineno
        else:
            kind = _kind(text) if at_top else None
            starts_new = not spans or (
                at_top and kind is not None and not (kind in _GROUPABLE and kind == spans[-1][2])
            )
            if starts_new:
                start = pending if pending is not None else lineno
                spans.append([start, lineno, kind or "other"])
            else:
                spans[-1][1] = lineno
            pending = None
        scanner.feed(c)
    if pending is not None:
        if spans:
            spans[-1][1] = first_line + len(lines) - 1
        else:
            spans.append([pending, first_line + len(lines) - 1, "comment"])
    return [(s, e, k if has_code(lines[s - first_line : e - first_line + 1]) else "comment") for s, e, k in spans]


def _finalize(
    source_id: str, lines: list[str], spans: list[tuple[int, int, str]], origin: str
) -> ModulePartition:
    regions = []
    for i, (start, end, synopsis) in enumerate(spans):
        regions.append(
            Region(
                index=i,
                start_line=start,
                end_line=end,
                synopsis=synopsis,
                mutable=has_code(lines[start - 1 : end]),
            )
        )
    return ModulePartition(
        source_id=source_id,
        total_lines=len(lines),
        regions=regions,
        origin=origin,
        fallback=origin == "fallback",
    )


def fallback_partition(source: str, source_id: str = "module") -> ModulePartition:
    """Deterministic partition from top-level `always`/`assign`/`module` boundaries."""
    lines = split_lines(source)
    spans = [(s, e, SYNOPSES[k]) for s, e, k in syntactic_split(lines)]
    return _finalize(source_id, lines, spans, "fallback")


def partition_from_mtrs(
    source: str, mtrs: list[dict[str, Any]], source_id: str = "module"
) -> ModulePartition:
    """Wrap engineer-supplied target regions as the partition.

    Lines outside every supplied region become non-mutable filler regions so
    that the coverage invariant still holds.
    """
    lines = split_lines(source)
    total = len(lines)
    ordered = sorted(mtrs, key=lambda m: int(m["start_line"]))
    spans = [(int(m["start_line"]), int(m["end_line"])) for m in ordered]
    defects = [d for d in coverage_defects(spans, 1, total) if d.kind != "gap"]
    if defects:
        raise PartitionInvalid("engineer-provided regions are invalid", defects)
    regions: list[tuple[int, int, str, bool]] = []
    cursor = 1
    for m in ordered:
        start, end = int(m["start_line"]), int(m["end_line"])
        if start > cursor:
            regions.append((cursor, start - 1, "Outside engineer-provided regions", False))
        label = str(m.get("label") or m.get("synopsis") or f"Engineer region {start}-{end}")
        regions.append((start, end, label, True))
        cursor = end + 1
    if cursor <= total:
        regions.append((cursor, total, "Outside engineer-provided regions", False))
    part = ModulePartition(source_id=source_id, total_lines=total, origin="engineer")
    part.regions = [
        Region(index=i, start_line=s, end_line=e, synopsis=syn, mutable=mut and has_code(lines[s - 1 : e]))
        for i, (s, e, syn, mut) in enumerate(regions)
    ]
    return part


# ---------------------------------------------------------------------------
# Agent-driven splitting
# ---------------------------------------------------------------------------


def number_lines(lines: list[str], first_line: int) -> str:
    width = len(str(first_line + len(lines)))
    return "\n".join(f"{first_line + i:>{width}}: {line}" for i, line in enumerate(lines))


class _CoverageError(AgentOutputError):
    def __init__(self, message: str, defects: list[Defect]) -> None:
        super().__init__(message)
        self.defects = defects


def _split_span(
    lines: list[str], first: int, last: int, config: SplitterConfig, backend, source_id: str
) -> tuple[list[tuple[int, int, str]], bool]:
    """Ask the splitter agent for regions covering ``first..last``.

    Returns the spans and whether they came from the fallback splitter.
    """
    from bugsynth.agents.prompts import render

    chunk = lines[first - 1 : last]
    prompt = render(
        "splitter",
        config.template_dir,
        guidelines=config.guidelines,
        source_id=source_id,
        first_line=first,
        last_line=last,
        code=number_lines(chunk, first),
    )

    def check(value: dict[str, Any]) -> list[tuple[int, int, str]]:
        spans = [(int(r["start_line"]), int(r["end_line"]), r["synopsis"].strip()) for r in value["regions"]]
        defects = coverage_defects([(s, e) for s, e, _ in spans], first, last)
        blank = [s for s, _, syn in spans if not syn]
        if blank:
            defects.append(Defect("missing_synopsis", blank[0], blank[0]))
        if defects:
            raise _CoverageError(
                f"regions must exactly cover lines {first}-{last}; defects: "
                + "; ".join(str(d) for d in defects),
                defects,
            )
        return spans

    try:
        spans = complete_structured(
            prompt,
            "split",
            backend,
            context={"lines": chunk, "first_line": first, "last_line": last},
            check=check,
            max_retries=config.repair_attempts,
        )
        return spans, False
    except _CoverageError as exc:
        if not config.allow_fallback:
            raise PartitionInvalid(str(exc), exc.defects) from exc
        log.warning("%s: splitter output failed coverage for %d-%d, using fallback", source_id, first, last)
    except SchemaViolation as exc:
        raise BackendError(f"splitter returned malformed output: {exc}") from exc
    fb = [(s, e, SYNOPSES[k]) for s, e, k in syntactic_split(chunk, first)]
    return fb, True


def detect_boundary_dependency(
    tail_region_text: str, auxiliary_lines: str, backend, template_dir: str | None = None
) -> bool:
    """Ask whether ``auxiliary_lines`` logically continue the last region of a chunk."""
    if not auxiliary_lines.strip():
        return False
    from bugsynth.agents.prompts import render

    prompt = render("boundary", template_dir, tail=tail_region_text, auxiliary=auxiliary_lines)
    try:
        value = complete_structured(
            prompt,
            "boundary",
            backend,
            context={"tail": tail_region_text, "auxiliary": auxiliary_lines},
        )
    except SchemaViolation as exc:
        raise BackendError(f"boundary check returned malformed output: {exc}") from exc
    return bool(value["continues"])


def partition_module(
    source: str, config: SplitterConfig | None = None, backend=None, source_id: str = "module"
) -> ModulePartition:
    config = config or SplitterConfig()
    lines = split_lines(source)
    total = len(lines)
    if total == 0:
        raise ValueError("cannot partition an empty source")
    if backend is None:
        return fallback_partition(source, source_id)

    if total <= config.context_window_lines:
        spans, used_fallback = _split_span(lines, 1, total, config, backend, source_id)
    else:
        spans, used_fallback = [], False
        start = 1
        window = config.chunk_size_lines
        while start <= total:
            end = min(start + window - 1, total)
            chunk_spans, fb = _split_span(lines, start, end, config, backend, source_id)
            used_fallback |= fb
            aux = lines[end : end + config.auxiliary_lines]
            last_start, last_end, _ = chunk_spans[-1]
            tail_text = "\n".join(lines[last_start - 1 : last_end])
            if aux and detect_boundary_dependency(tail_text, "\n".join(aux), backend, config.template_dir):
                if len(chunk_spans) == 1:
                    # the whole window is one unfinished construct: widen and retry
                    window += config.chunk_size_lines
                    continue
                spans.extend(chunk_spans[:-1])
                start = last_start
            else:
                spans.extend(chunk_spans)
                start = end + 1
            window = config.chunk_size_lines

    part = _finalize(source_id, lines, spans, "agent")
    part.fallback = used_fallback
    defects = validate_partition(part, source)
    if defects:
        raise PartitionInvalid("assembled partition fails coverage", defects)
    return part
