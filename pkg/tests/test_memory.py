from __future__ import annotations

import threading
from dataclasses import replace

import pytest

from bugsynth.errors import AlreadyFinalized, InvariantViolation, StorageError, UnknownEntry
from bugsynth.memory import MutationCache, MutationEntry, Outcome, StructuralKey, apply_mutation_counts
from bugsynth.partition import ModulePartition, Region


def entry(**kw) -> MutationEntry:
    base = dict(
        design_id="d",
        module_id="d:m.sv",
        file="m.sv",
        region_index=0,
        region_start=1,
        region_end=10,
        class_id="logic_bug",
        target_start=3,
        target_end=3,
        target_block="if (a && b) begin",
        mutated_block="if (a || b) begin",
        summary="and to or",
        scenario_id="s1",
    )
    base.update(kw)
    return MutationEntry(**base)


def test_first_entry_gets_id_one():
    cache = MutationCache()
    assert cache.record_attempt(entry()) == 1
    assert len(cache) == 1
    assert cache.get(1).outcome is Outcome.PENDING


def test_entry_outside_region_rejected():
    cache = MutationCache()
    with pytest.raises(InvariantViolation):
        cache.record_attempt(entry(target_start=9, target_end=12))
    with pytest.raises(InvariantViolation):
        cache.record_attempt(entry(outcome=Outcome.SUCCESS))


def test_outcome_lifecycle():
    cache = MutationCache()
    i = cache.record_attempt(entry())
    cache.update_outcome(i, Outcome.SUCCESS)
    assert cache.get(i).outcome is Outcome.SUCCESS
    with pytest.raises(AlreadyFinalized):
        cache.update_outcome(i, Outcome.SYNTAX_FAILURE)
    with pytest.raises(UnknownEntry):
        cache.update_outcome(99, Outcome.SUCCESS)
    with pytest.raises(ValueError):
        cache.update_outcome(i, Outcome.PENDING)


def test_duplicate_detection_normalizes_whitespace_and_uses_class():
    cache = MutationCache()
    assert not cache.is_duplicate(entry().key)
    cache.record_attempt(entry())
    spaced = entry(target_block="  if (a &&  b) begin", mutated_block="\tif (a ||   b)   begin")
    assert cache.is_duplicate(spaced.key)
    assert not cache.is_duplicate(entry(class_id="wrong_assignment").key)
    assert StructuralKey.of("m", "a  = b;", "x", "c") == StructuralKey.of("m", "a = b;", "x", "c")


def test_region_history_and_coverage_mode():
    cache = MutationCache()
    for n, outcome in enumerate([Outcome.SUCCESS, Outcome.SYNTAX_FAILURE, Outcome.UNDETECTED]):
        i = cache.record_attempt(entry(mutated_block=f"v{n}"))
        cache.update_outcome(i, outcome)
    h = cache.region_history("d:m.sv", 0)
    assert [e.outcome for e in h.succeeded] == [Outcome.SUCCESS]
    assert [e.outcome for e in h.failed] == [Outcome.SYNTAX_FAILURE, Outcome.UNDETECTED]
    h = cache.region_history("d:m.sv", 0, coverage_mode=True)
    assert [e.outcome for e in h.failed] == [Outcome.SYNTAX_FAILURE]
    empty = cache.region_history("d:m.sv", 5)
    assert empty.succeeded == [] and empty.failed == []


def test_region_stats():
    cache = MutationCache()
    outcomes = [Outcome.SUCCESS] * 3 + [Outcome.SYNTAX_FAILURE]
    classes = ["logic_bug", "logic_bug", "wrong_assignment", "wrong_assignment"]
    for n, (o, c) in enumerate(zip(outcomes, classes)):
        cache.update_outcome(cache.record_attempt(entry(mutated_block=f"v{n}", class_id=c)), o)
    cache.record_attempt(entry(mutated_block="pending"))  # not finalized: ignored by stats
    part = ModulePartition("d:m.sv", 20, [Region(0, 1, 10), Region(1, 11, 20)])
    stats = cache.region_stats(part)
    assert stats[0].success_rate == 0.75
    assert stats[0].class_histogram == {"logic_bug": 2, "wrong_assignment": 2}
    assert stats[1].success_rate is None
    apply_mutation_counts(part, cache.mutation_counts("d:m.sv"), extra=[1])
    assert [r.mutation_count for r in part.regions] == [5, 1]


def test_replay_reconstructs_identical_state(tmp_path):
    path = tmp_path / "cache.jsonl"
    cache = MutationCache(path)
    ids = [cache.record_attempt(entry(mutated_block=f"v{n}")) for n in range(5)]
    cache.update_outcome(ids[0], Outcome.SUCCESS)
    cache.update_outcome(ids[3], Outcome.UNDETECTED)
    again = MutationCache(path)
    assert again.entries() == cache.entries()
    assert again.is_duplicate(entry(mutated_block="v4").key)
    assert again.record_attempt(entry(mutated_block="v9")) == 6


def test_corrupt_log_is_storage_error(tmp_path):
    path = tmp_path / "cache.jsonl"
    path.write_text('{"event": "attempt", "design_id": 1}\n', encoding="utf-8")
    with pytest.raises(StorageError):
        MutationCache(path)


def test_unwritable_log_is_storage_error(tmp_path):
    cache = MutationCache(tmp_path / "cache.jsonl")
    cache.path = tmp_path / "no" / "such" / "dir" / "cache.jsonl"
    with pytest.raises(StorageError):
        cache.record_attempt(entry())
    assert len(cache) == 0  # nothing recorded in memory when the log write fails


def test_concurrent_writers_get_distinct_ids(tmp_path):
    cache = MutationCache(tmp_path / "cache.jsonl")
    ids: list[int] = []
    lock = threading.Lock()

    def work(w):
        for n in range(100):
            i = cache.record_attempt(entry(mutated_block=f"w{w}-{n}", design_id=f"d{w}"))
            with lock:
                ids.append(i)

    threads = [threading.Thread(target=work, args=(w,)) for w in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(ids) == list(range(1, 401))
    assert len(MutationCache(tmp_path / "cache.jsonl")) == 400


def test_entries_filters_and_snapshots():
    cache = MutationCache()
    cache.record_attempt(entry())
    cache.record_attempt(entry(design_id="e", mutated_block="z"))
    assert [e.design_id for e in cache.entries(design_id="e")] == ["e"]
    assert len(cache.entries(outcome="pending")) == 2
    snap = cache.entries()[0]
    snap.summary = "changed"
    assert cache.get(1).summary == "and to or"
    assert replace(cache.get(1)).entry_id == 1
