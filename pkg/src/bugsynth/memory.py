"""Shared mutation cache: an append-only JSONL log of attempts and outcomes.

The cache is the only mutable state shared between campaign workers. Every
write goes through one lock and is appended to the log before the in-memory
view changes, so replaying the file reproduces the in-memory state exactly.
"""

from __future__ import annotations

import json
import threading
import time
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Iterable

from bugsynth.errors import AlreadyFinalized, InvariantViolation, StorageError, UnknownEntry
from bugsynth.hdl import normalize_block


class Outcome(str, Enum):
    PENDING = "pending"
    SUCCESS = "success"
    SYNTAX_FAILURE = "syntax_failure"
    UNDETECTED = "undetected"

    @property
    def final(self) -> bool:
        return self is not Outcome.PENDING


@dataclass
class MutationEntry:
    design_id: str
    module_id: str
    file: str
    region_index: int
    region_start: int
    region_end: int
    class_id: str
    target_start: int
    target_end: int
    target_block: str
    mutated_block: str
    summary: str
    scenario_id: str
    attempt_number: int = 1
    run_id: str = ""
    outcome: Outcome = Outcome.PENDING
    timestamp: float = 0.0
    entry_id: int | None = None

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["outcome"] = self.outcome.value
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "MutationEntry":
        fields = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        fields["outcome"] = Outcome(fields.get("outcome", "pending"))
        return cls(**fields)

    @property
    def key(self) -> "StructuralKey":
        return StructuralKey.of(self.module_id, self.target_block, self.mutated_block, self.class_id)


@dataclass(frozen=True)
class StructuralKey:
    module_id: str
    target: str
    mutated: str
    class_id: str

    @classmethod
    def of(cls, module_id: str, target_block: str, mutated_block: str, class_id: str) -> "StructuralKey":
        return cls(module_id, normalize_block(target_block), normalize_block(mutated_block), class_id)


@dataclass
class RegionHistory:
    succeeded: list[MutationEntry] = field(default_factory=list)
    failed: list[MutationEntry] = field(default_factory=list)


@dataclass
class RegionStats:
    attempts: int = 0
    successes: int = 0
    class_histogram: dict[str, int] = field(default_factory=dict)

    @property
    def success_rate(self) -> float | None:
        """``None`` means no finalized attempts yet (no data, not 0.0)."""
        return self.successes / self.attempts if self.attempts else None


class MutationCache:
    """Thread-safe mutation cache, optionally persisted to ``path``."""

    def __init__(self, path: str | Path | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self._lock = threading.RLock()
        self._entries: dict[int, MutationEntry] = {}
        self._keys: set[StructuralKey] = set()
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            if self.path.exists():
                self._replay()

    # -- persistence -------------------------------------------------------

    def _replay(self) -> None:
        assert self.path is not None
        try:
            text = self.path.read_text(encoding="utf-8")
        except OSError as exc:
            raise StorageError(f"cannot read mutation cache {self.path}: {exc}") from exc
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                event = json.loads(line)
                kind = event.pop("event")
                if kind == "attempt":
                    entry = MutationEntry.from_dict(event)
                    self._entries[int(entry.entry_id)] = entry
                    self._keys.add(entry.key)
                elif kind == "outcome":
                    self._entries[int(event["entry_id"])].outcome = Outcome(event["outcome"])
                else:
                    raise ValueError(f"unknown event {kind!r}")
            except (ValueError, KeyError, TypeError) as exc:
                raise StorageError(f"{self.path}:{lineno}: corrupt cache record ({exc})") from exc

    def _append(self, event: dict[str, Any]) -> None:
        if self.path is None:
            return
        try:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(event, ensure_ascii=False) + "\n")
                fh.flush()
        except OSError as exc:
            raise StorageError(f"cannot append to mutation cache {self.path}: {exc}") from exc

    # -- writes ------------------------------------------------------------

    def record_attempt(self, entry: MutationEntry) -> int:
        if entry.outcome is not Outcome.PENDING:
            raise InvariantViolation("new cache entries must be pending")
        if not (entry.region_start <= entry.target_start <= entry.target_end <= entry.region_end):
            raise InvariantViolation(
                f"target lines {entry.target_start}-{entry.target_end} lie outside region "
                f"{entry.region_index} ({entry.region_start}-{entry.region_end})"
            )
        with self._lock:
            stored = replace(entry, entry_id=len(self._entries) + 1, timestamp=entry.timestamp or time.time())
            self._append({"event": "attempt", **stored.to_dict()})
            self._entries[stored.entry_id] = stored
            self._keys.add(stored.key)
            return stored.entry_id

    def update_outcome(self, entry_id: int, outcome: Outcome | str) -> None:
        outcome = Outcome(outcome)
        if not outcome.final:
            raise ValueError("outcome update must be final")
        with self._lock:
            entry = self._entries.get(entry_id)
            if entry is None:
                raise UnknownEntry(f"no cache entry with id {entry_id}")
            if entry.outcome.final:
                raise AlreadyFinalized(f"entry {entry_id} already finalized as {entry.outcome.value}")
            self._append({"event": "outcome", "entry_id": entry_id, "outcome": outcome.value})
            entry.outcome = outcome

    # -- reads -------------------------------------------------------------

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def get(self, entry_id: int) -> MutationEntry:
        with self._lock:
            if entry_id not in self._entries:
                raise UnknownEntry(f"no cache entry with id {entry_id}")
            return replace(self._entries[entry_id])

    def entries(self, **filters: Any) -> list[MutationEntry]:
        """Snapshot of entries in log order, filtered by exact field values."""
        with self._lock:
            snapshot = [replace(e) for e in self._entries.values()]
        for name, want in filters.items():
            if want is None:
                continue
            if name == "outcome":
                want = Outcome(want)
            snapshot = [e for e in snapshot if getattr(e, name) == want]
        return snapshot

    def is_duplicate(self, candidate: StructuralKey) -> bool:
        with self._lock:
            return candidate in self._keys

    def counts(self) -> Counter:
        with self._lock:
            return Counter(e.outcome for e in self._entries.values())

    def _region_entries(self, module_id: str, region_index: int) -> list[MutationEntry]:
        with self._lock:
            return [
                replace(e)
                for e in self._entries.values()
                if e.module_id == module_id and e.region_index == region_index
            ]

    def region_history(
        self, module_id: str, region_index: int, coverage_mode: bool = False
    ) -> RegionHistory:
        history = RegionHistory()
        for e in self._region_entries(module_id, region_index):
            if e.outcome is Outcome.SUCCESS:
                history.succeeded.append(e)
            elif e.outcome is Outcome.SYNTAX_FAILURE:
                history.failed.append(e)
            elif e.outcome is Outcome.UNDETECTED and not coverage_mode:
                history.failed.append(e)
        return history

    def region_stats(self, partition) -> dict[int, RegionStats]:
        stats = {r.index: RegionStats() for r in partition.regions}
        with self._lock:
            for e in self._entries.values():
                s = stats.get(e.region_index)
                if e.module_id != partition.source_id or s is None or not e.outcome.final:
                    continue
                s.attempts += 1
                s.successes += e.outcome is Outcome.SUCCESS
                s.class_histogram[e.class_id] = s.class_histogram.get(e.class_id, 0) + 1
        return stats

    def mutation_counts(self, module_id: str) -> Counter:
        """Entries recorded per region index, pending ones included."""
        with self._lock:
            return Counter(e.region_index for e in self._entries.values() if e.module_id == module_id)


def apply_mutation_counts(partition, counts: Counter | dict[int, int], extra: Iterable[int] = ()) -> None:
    extra_counts = Counter(extra)
    for r in partition.regions:
        r.mutation_count = counts.get(r.index, 0) + extra_counts.get(r.index, 0)
