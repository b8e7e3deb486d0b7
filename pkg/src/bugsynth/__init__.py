"""Agent-driven bug injection for HDL designs.

The pipeline partitions each module into target regions, lets three agents
pick a region, pick a mutation and write it, then compiles and regresses the
mutant to classify the bug scenario. All attempts land in a shared cache that
steers later choices.
"""

from bugsynth.catalog import MutationIndex, load_baseline, load_index
from bugsynth.evaluation import ScriptedEvaluator, ShellEvaluator, Verdict, classify
from bugsynth.memory import MutationCache, MutationEntry, Outcome
from bugsynth.metrics import (
    accuracy_evolution,
    functional_accuracy,
    mtr_hit_rate,
    spread_score,
    syntactic_accuracy,
    throughput,
)
from bugsynth.partition import ModulePartition, Region, partition_module, validate_partition

__version__ = "0.1.0"

__all__ = [
    "ModulePartition",
    "MutationCache",
    "MutationEntry",
    "MutationIndex",
    "Outcome",
    "Region",
    "ScriptedEvaluator",
    "ShellEvaluator",
    "Verdict",
    "accuracy_evolution",
    "classify",
    "functional_accuracy",
    "load_baseline",
    "load_index",
    "mtr_hit_rate",
    "partition_module",
    "spread_score",
    "syntactic_accuracy",
    "throughput",
    "validate_partition",
]
