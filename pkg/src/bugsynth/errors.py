"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class BugsynthError(Exception):
    """Base class for every error raised by this package."""


# --- partitioning -------------------------------------------------------


class PartitionInvalid(BugsynthError):
    def __init__(self, message: str, defects: list | None = None) -> None:
        super().__init__(message)
        self.defects = list(defects or [])


# --- catalog ------------------------------------------------------------


class IndexMalformed(BugsynthError):
    pass


class UnknownClass(BugsynthError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else "unknown mutation class"


# --- memory -------------------------------------------------------------


class StorageError(BugsynthError):
    pass


class InvariantViolation(BugsynthError, ValueError):
    pass


class AlreadyFinalized(BugsynthError):
    pass


class UnknownEntry(BugsynthError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown entry"


# --- agents -------------------------------------------------------------


class BackendError(BugsynthError):
    """Transport, HTTP status or timeout failure talking to an agent backend."""


class AgentOutputError(BugsynthError):
    """Backend answered, but the answer is unusable. Fed back on retry."""


class SchemaViolation(AgentOutputError):
    pass


class InvalidChoice(AgentOutputError):
    pass


class NoMutableRegion(AgentOutputError):
    pass


class NoOpMutation(AgentOutputError):
    pass


# --- patching -----------------------------------------------------------


class PatchError(BugsynthError):
    pass


class StaleContent(PatchError):
    pass


class DigestMismatch(PatchError):
    pass


# --- evaluation ---------------------------------------------------------


class InfrastructureError(BugsynthError):
    """The evaluation harness itself misbehaved; no outcome can be assigned."""


class EvaluationTimeout(InfrastructureError):
    pass


class SpawnError(InfrastructureError):
    pass


# --- orchestration ------------------------------------------------------


class ConfigInvalid(BugsynthError):
    def __init__(self, message: str, problems: list[str] | None = None) -> None:
        self.problems = list(problems or [])
        if self.problems:
            message = message + "\n" + "\n".join(f"  - {p}" for p in self.problems)
        super().__init__(message)


class BaselineGateFailed(BugsynthError):
    def __init__(self, design_id: str, reason: str) -> None:
        super().__init__(f"baseline gate failed for design {design_id!r}: {reason}")
        self.design_id = design_id
        self.reason = reason


class RetriesExhausted(BugsynthError):
    def __init__(self, scenario_id: str, attempts: list) -> None:
        super().__init__(f"scenario {scenario_id} abandoned after {len(attempts)} attempt(s)")
        self.scenario_id = scenario_id
        self.attempts = attempts


class GenerationStalled(BugsynthError):
    """Agents kept producing duplicates or unusable output for one mutation slot."""


class WorkerPanic(BugsynthError):
    pass
