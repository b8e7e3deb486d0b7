"""Mutation index (class catalog) and per-class mutation specifications."""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any

from bugsynth.errors import IndexMalformed, UnknownClass

BASELINE = "baseline"


class Arity(str, Enum):
    SINGLE_LINE = "single_line"
    MULTI_LINE = "multi_line"

    @property
    def max_lines(self) -> int:
        return 1 if self is Arity.SINGLE_LINE else 4


@dataclass(frozen=True)
class MutationClass:
    id: str
    description: str
    arity: Arity
    applicability_notes: str = ""


@dataclass(frozen=True)
class MutationSpec:
    class_id: str
    body: str
    authored_by: str = "verification engineer"


@dataclass
class MutationIndex:
    name: str
    classes: list[MutationClass]
    spec_lookup: dict[str, MutationSpec]
    authored_by: str | None = None

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for cls in self.classes:
            if not cls.id:
                raise IndexMalformed("mutation class with empty id")
            if cls.id in seen:
                raise IndexMalformed(f"duplicate mutation class id {cls.id!r}")
            if not cls.description.strip():
                raise IndexMalformed(f"mutation class {cls.id!r} has an empty description")
            seen.add(cls.id)
        missing = [c.id for c in self.classes if c.id not in self.spec_lookup]
        if missing:
            raise IndexMalformed(f"no mutation specification for class(es): {', '.join(missing)}")
        orphans = sorted(set(self.spec_lookup) - seen)
        if orphans:
            raise IndexMalformed(f"specification(s) without a class: {', '.join(orphans)}")

    @property
    def class_ids(self) -> list[str]:
        return [c.id for c in self.classes]

    def get(self, class_id: str) -> MutationClass:
        for cls in self.classes:
            if cls.id == class_id:
                return cls
        raise UnknownClass(f"mutation class {class_id!r} is not in index {self.name!r}")

    def resolve_spec(self, class_id: str) -> MutationSpec:
        try:
            return self.spec_lookup[class_id]
        except KeyError:
            raise UnknownClass(f"mutation class {class_id!r} is not in index {self.name!r}") from None

    def extended(self, cls: MutationClass, spec_body: str) -> "MutationIndex":
        """Copy of this index with one more class appended."""
        specs = dict(self.spec_lookup)
        specs[cls.id] = MutationSpec(cls.id, spec_body, self.authored_by or "verification engineer")
        return MutationIndex(self.name, [*self.classes, cls], specs, self.authored_by)

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"name": self.name}
        if self.authored_by is not None:
            doc["authored_by"] = self.authored_by
        doc["classes"] = [
            {
                "id": c.id,
                "description": c.description,
                "arity": c.arity.value,
                "applicability_notes": c.applicability_notes,
            }
            for c in self.classes
        ]
        doc["specs"] = {c.id: self.spec_lookup[c.id].body for c in self.classes}
        return doc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    def render(self) -> str:
        """Terse listing used in agent prompts."""
        lines = []
        for c in self.classes:
            note = f" ({c.applicability_notes})" if c.applicability_notes else ""
            lines.append(f"- {c.id} [{c.arity.value}]: {c.description}{note}")
        return "\n".join(lines)


def parse_index(doc: Any, origin: str = "<memory>") -> MutationIndex:
    if not isinstance(doc, dict):
        raise IndexMalformed(f"{origin}: catalog must be a JSON object")
    try:
        name = str(doc["name"])
        raw_classes = doc["classes"]
        raw_specs = doc.get("specs", {})
    except KeyError as exc:
        raise IndexMalformed(f"{origin}: missing key {exc.args[0]!r}") from None
    if not isinstance(raw_classes, list) or not isinstance(raw_specs, dict):
        raise IndexMalformed(f"{origin}: 'classes' must be a list and 'specs' an object")
    authored_by = doc.get("authored_by")
    classes = []
    for i, rc in enumerate(raw_classes):
        if not isinstance(rc, dict) or "id" not in rc:
            raise IndexMalformed(f"{origin}: classes[{i}] must be an object with an 'id'")
        try:
            arity = Arity(rc.get("arity"))
        except ValueError:
            raise IndexMalformed(f"{origin}: class {rc['id']!r} has unknown arity {rc.get('arity')!r}") from None
        classes.append(
            MutationClass(
                id=str(rc["id"]),
                description=str(rc.get("description", "")),
                arity=arity,
                applicability_notes=str(rc.get("applicability_notes", "")),
            )
        )
    specs = {
        str(k): MutationSpec(str(k), str(v), authored_by or "verification engineer")
        for k, v in raw_specs.items()
    }
    try:
        return MutationIndex(name, classes, specs, authored_by)
    except IndexMalformed as exc:
        raise IndexMalformed(f"{origin}: {exc}") from None


def baseline_path() -> Path:
    return Path(str(resources.files("bugsynth.data").joinpath("baseline_catalog.json")))


def load_index(path: str | Path) -> MutationIndex:
    if str(path) == BASELINE:
        path = baseline_path()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IndexMalformed(f"cannot read catalog {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IndexMalformed(f"{path}: invalid JSON: {exc}") from exc
    return parse_index(doc, str(path))


def load_baseline() -> MutationIndex:
    return load_index(BASELINE)


@dataclass
class IndexMapping:
    """Which catalog file applies to which design/module; module beats design beats default."""

    default: str = BASELINE
    designs: dict[str, str] = field(default_factory=dict)
    modules: dict[str, str] = field(default_factory=dict)

    def path_for(self, design_id: str, module_id: str) -> str:
        if module_id in self.modules:
            return self.modules[module_id]
        if design_id in self.designs:
            return self.designs[design_id]
        return self.default


class IndexRegistry:
    """Loads each catalog file once; indexes are immutable so sharing is safe."""

    def __init__(self, mapping: IndexMapping | None = None) -> None:
        self.mapping = mapping or IndexMapping()
        self._loaded: dict[str, MutationIndex] = {}
        self._lock = threading.Lock()

    def get(self, path: str) -> MutationIndex:
        with self._lock:
            if path not in self._loaded:
                self._loaded[path] = load_index(path)
            return self._loaded[path]

    def select(self, design_id: str, module_id: str) -> MutationIndex:
        return self.get(self.mapping.path_for(design_id, module_id))


def select_index_for(
    design_id: str, module_id: str, config: IndexMapping | IndexRegistry
) -> MutationIndex:
    registry = config if isinstance(config, IndexRegistry) else IndexRegistry(config)
    return registry.select(design_id, module_id)
