"""Campaign configuration: a single JSON file, optionally overridden by CLI flags."""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from bugsynth.agents.backend import RemoteChatBackend
from bugsynth.agents.mock import MockBackend
from bugsynth.agents.prompts import TEMPLATE_NAMES
from bugsynth.catalog import BASELINE, IndexMapping
from bugsynth.errors import ConfigInvalid
from bugsynth.evaluation import EvaluatorConfig, ScriptedEvaluator, ShellEvaluator, Verdict
from bugsynth.metrics import ModuleTargets, TargetRange
from bugsynth.orchestrator import Mode, Parallelism, ScenarioSettings
from bugsynth.partition import SplitterConfig, default_guidelines


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BackendSettings(_Model):
    kind: Literal["mock", "remote"] = "mock"
    endpoint: str | None = None
    model: str = "gpt-4o-mini"
    temperature: float = Field(0.7, ge=0.0, le=2.0)
    timeout_seconds: float = Field(60.0, gt=0)
    api_key_env: str = "OPENAI_API_KEY"
    max_retries_on_malformed: int = Field(2, ge=0)
    transport_retries: int = Field(2, ge=0)

    @model_validator(mode="after")
    def _endpoint(self) -> "BackendSettings":
        if self.kind == "remote" and not self.endpoint:
            raise ValueError("a remote backend needs an endpoint")
        return self


class CatalogSettings(_Model):
    default: str = BASELINE
    designs: dict[str, str] = Field(default_factory=dict)
    modules: dict[str, str] = Field(default_factory=dict)  # keyed "design_id:path"


class SplitterSettings(_Model):
    chunk_size_lines: int = Field(200, ge=2)
    auxiliary_lines: int = Field(5, ge=0)
    context_window_lines: int = Field(300, ge=1)
    guidelines_path: str | None = None
    repair_attempts: int = Field(2, ge=0)
    allow_fallback: bool = True

    @model_validator(mode="after")
    def _aux(self) -> "SplitterSettings":
        if self.auxiliary_lines >= self.chunk_size_lines:
            raise ValueError("auxiliary_lines must be smaller than chunk_size_lines")
        return self


class RangeSpec(_Model):
    start_line: int = Field(ge=1)
    end_line: int = Field(ge=1)
    label: str = ""

    @model_validator(mode="after")
    def _order(self) -> "RangeSpec":
        if self.end_line < self.start_line:
            raise ValueError("end_line precedes start_line")
        return self


class ModuleSpec(_Model):
    path: str
    mtrs: list[RangeSpec] | None = None
    reference_mtrs: list[RangeSpec] | None = None
    scenarios_target: int | None = Field(None, ge=0)


class ScriptedRule(_Model):
    class_id: str
    region_index: int = Field(ge=0)
    outcome: Verdict


class EvaluatorSettings(_Model):
    kind: Literal["shell", "scripted"] = "shell"
    compile_command: str | None = None
    test_command: str | None = None
    tests: list[str] = Field(default_factory=list)
    seeds: list[int] = Field(default_factory=list)
    failure_pattern: str | None = None
    per_command_timeout_seconds: float = Field(3600.0, gt=0)
    # scripted evaluator only
    default: Verdict = Verdict.DETECTED
    sequence: list[Verdict] = Field(default_factory=list)
    sequences: dict[str, list[Verdict]] = Field(default_factory=dict)  # keyed by module path
    table: list[ScriptedRule] = Field(default_factory=list)
    baseline_ok: bool = True

    @model_validator(mode="after")
    def _shell(self) -> "EvaluatorSettings":
        if self.kind == "shell":
            missing = [n for n in ("compile_command", "test_command") if not getattr(self, n)]
            if missing:
                raise ValueError(f"shell evaluator needs {', '.join(missing)}")
            if not self.tests or not self.seeds:
                raise ValueError("shell evaluator needs at least one test and one seed")
        return self


class DesignSpec(_Model):
    design_id: str = Field(min_length=1)
    root: str
    modules: list[ModuleSpec] = Field(min_length=1)
    evaluator: EvaluatorSettings
    scenarios_target: int | None = Field(None, ge=0)

    @model_validator(mode="after")
    def _unique(self) -> "DesignSpec":
        paths = [m.path for m in self.modules]
        dup = sorted({p for p in paths if paths.count(p) > 1})
        if dup:
            raise ValueError(f"module paths listed twice: {', '.join(dup)}")
        unknown = sorted(set(self.evaluator.sequences) - set(paths))
        if unknown:
            raise ValueError(f"evaluator.sequences names unknown modules: {', '.join(unknown)}")
        return self


class CampaignConfig(_Model):
    designs: list[DesignSpec] = Field(min_length=1)
    output_dir: str = "bugsynth-out"
    cache_path: str | None = None
    mutations_per_scenario: int = Field(2, ge=1)
    scenarios_target: int = Field(1, ge=0)
    max_retries: int = Field(2, ge=0)
    mode: Mode = Mode.GENERATION
    parallelism: Parallelism = Parallelism.INTER_DESIGN
    abandonment_limit: int = Field(10, ge=1)
    max_regenerations: int = Field(10, ge=0)
    infra_retries: int = Field(1, ge=0)
    short_circuit: bool | None = None
    evolution_window: int = Field(25, ge=1)
    catalog: CatalogSettings = Field(default_factory=CatalogSettings)
    splitter: SplitterSettings = Field(default_factory=SplitterSettings)
    backend: BackendSettings = Field(default_factory=BackendSettings)
    templates_dir: str | None = None

    @model_validator(mode="after")
    def _designs(self) -> "CampaignConfig":
        ids = [d.design_id for d in self.designs]
        dup = sorted({i for i in ids if ids.count(i) > 1})
        if dup:
            raise ValueError(f"design_id listed twice: {', '.join(dup)}")
        return self

    # -- derived views ---------------------------------------------------

    @property
    def resolved_cache_path(self) -> Path:
        return Path(self.cache_path) if self.cache_path else Path(self.output_dir) / "cache.jsonl"

    def design(self, design_id: str) -> DesignSpec:
        for d in self.designs:
            if d.design_id == design_id:
                return d
        raise KeyError(design_id)

    def quota(self, design: DesignSpec, module: ModuleSpec) -> int:
        for value in (module.scenarios_target, design.scenarios_target):
            if value is not None:
                return value
        return self.scenarios_target


OVERRIDABLE = {
    "mode": ("mode",),
    "parallelism": ("parallelism",),
    "quota": ("scenarios_target",),
    "scenarios_target": ("scenarios_target",),
    "max_retries": ("max_retries",),
    "endpoint": ("backend", "endpoint"),
}


def module_id(design_id: str, path: str) -> str:
    return f"{design_id}:{path}"


def _loc(loc: tuple) -> str:
    out = ""
    for part in loc:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "<root>"


def apply_overrides(raw: dict[str, Any], overrides: dict[str, Any] | None) -> dict[str, Any]:
    data = copy.deepcopy(raw)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in OVERRIDABLE:
            raise ConfigInvalid(f"unknown override {key!r}", [f"allowed: {', '.join(sorted(OVERRIDABLE))}"])
        *parents, leaf = OVERRIDABLE[key]
        node = data
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value.value if hasattr(value, "value") else value
        if leaf == "scenarios_target":
            # an explicit quota applies everywhere, beating per-design and per-module targets
            for d in data.get("designs", []):
                if isinstance(d, dict):
                    d.pop("scenarios_target", None)
                    for m in d.get("modules", []):
                        if isinstance(m, dict):
                            m.pop("scenarios_target", None)
    return data


def _resolve(base: Path, value: str | None) -> str | None:
    if value is None:
        return None
    p = Path(value).expanduser()
    return str(p if p.is_absolute() else (base / p).resolve())


def _check_files(cfg: CampaignConfig) -> list[str]:
    problems = []
    for i, d in enumerate(cfg.designs):
        root = Path(d.root)
        if not root.is_dir():
            problems.append(f"designs[{i}].root: directory not found: {root}")
            continue
        for j, m in enumerate(d.modules):
            if not (root / m.path).is_file():
                problems.append(f"designs[{i}].modules[{j}].path: file not found: {root / m.path}")
    catalogs = [("catalog.default", cfg.catalog.default)]
    catalogs += [(f"catalog.designs.{k}", v) for k, v in cfg.catalog.designs.items()]
    catalogs += [(f"catalog.modules.{k}", v) for k, v in cfg.catalog.modules.items()]
    for where, path in catalogs:
        if path != BASELINE and not Path(path).is_file():
            problems.append(f"{where}: catalog file not found: {path}")
    known_designs = {d.design_id for d in cfg.designs}
    known_modules = {module_id(d.design_id, m.path) for d in cfg.designs for m in d.modules}
    for k in cfg.catalog.designs:
        if k not in known_designs:
            problems.append(f"catalog.designs.{k}: no such design")
    for k in cfg.catalog.modules:
        if k not in known_modules:
            problems.append(f"catalog.modules.{k}: no such module (expected 'design_id:path')")
    if cfg.splitter.guidelines_path and not Path(cfg.splitter.guidelines_path).is_file():
        problems.append(f"splitter.guidelines_path: file not found: {cfg.splitter.guidelines_path}")
    if cfg.templates_dir:
        tdir = Path(cfg.templates_dir)
        if not tdir.is_dir():
            problems.append(f"templates_dir: directory not found: {tdir}")
        elif not any((tdir / f"{n}.txt").is_file() for n in TEMPLATE_NAMES):
            problems.append(f"templates_dir: contains none of {', '.join(n + '.txt' for n in TEMPLATE_NAMES)}")
    return problems


def parse_config(raw: dict[str, Any], base_dir: str | Path = ".", overrides: dict[str, Any] | None = None) -> CampaignConfig:
    """Validate ``raw``, resolve relative paths against ``base_dir`` and check referenced files."""
    base = Path(base_dir).resolve()
    data = apply_overrides(raw, overrides)
    try:
        cfg = CampaignConfig.model_validate(data)
    except ValidationError as exc:
        problems = [f"{_loc(e['loc'])}: {e['msg']}" for e in exc.errors()]
        raise ConfigInvalid("invalid campaign configuration", problems) from None
    cfg.output_dir = _resolve(base, cfg.output_dir)
    cfg.cache_path = _resolve(base, cfg.cache_path)
    cfg.templates_dir = _resolve(base, cfg.templates_dir)
    cfg.splitter.guidelines_path = _resolve(base, cfg.splitter.guidelines_path)
    for attr in ("default",):
        value = getattr(cfg.catalog, attr)
        setattr(cfg.catalog, attr, value if value == BASELINE else _resolve(base, value))
    cfg.catalog.designs = {k: v if v == BASELINE else _resolve(base, v) for k, v in cfg.catalog.designs.items()}
    cfg.catalog.modules = {k: v if v == BASELINE else _resolve(base, v) for k, v in cfg.catalog.modules.items()}
    for d in cfg.designs:
        d.root = _resolve(base, d.root)
    problems = _check_files(cfg)
    if problems:
        raise ConfigInvalid("campaign configuration references missing files", problems)
    return cfg


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> CampaignConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigInvalid(f"config file not found: {path}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigInvalid(f"config {path} must hold a JSON object")
    return parse_config(raw, path.parent, overrides)


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def build_backend(cfg: CampaignConfig):
    b = cfg.backend
    if b.kind == "mock":
        return MockBackend(max_retries_on_malformed=b.max_retries_on_malformed)
    return RemoteChatBackend(
        b.endpoint,
        b.model,
        api_key_env=b.api_key_env,
        temperature=b.temperature,
        timeout_seconds=b.timeout_seconds,
        max_retries_on_malformed=b.max_retries_on_malformed,
        transport_retries=b.transport_retries,
    )


def build_evaluator(design: DesignSpec, log_dir: str | Path | None = None):
    e = design.evaluator
    if e.kind == "scripted":
        return ScriptedEvaluator(
            table={(r.class_id, r.region_index): r.outcome for r in e.table},
            sequence=e.sequence,
            sequences={module_id(design.design_id, p): seq for p, seq in e.sequences.items()},
            default=e.default,
            tests=e.tests or None,
            seeds=e.seeds or None,
            baseline_ok=e.baseline_ok,
        )
    return ShellEvaluator(
        EvaluatorConfig(
            compile_command=e.compile_command,
            test_command=e.test_command,
            tests=list(e.tests),
            seeds=list(e.seeds),
            failure_pattern=e.failure_pattern,
            per_command_timeout_seconds=e.per_command_timeout_seconds,
        ),
        log_dir=log_dir,
    )


def splitter_config(cfg: CampaignConfig) -> SplitterConfig:
    s = cfg.splitter
    guidelines = (
        Path(s.guidelines_path).read_text(encoding="utf-8") if s.guidelines_path else default_guidelines()
    )
    return SplitterConfig(
        chunk_size_lines=s.chunk_size_lines,
        auxiliary_lines=s.auxiliary_lines,
        context_window_lines=s.context_window_lines,
        guidelines=guidelines,
        repair_attempts=s.repair_attempts,
        allow_fallback=s.allow_fallback,
        template_dir=cfg.templates_dir,
    )


def index_mapping(cfg: CampaignConfig) -> IndexMapping:
    return IndexMapping(cfg.catalog.default, dict(cfg.catalog.designs), dict(cfg.catalog.modules))


def scenario_settings(cfg: CampaignConfig, run_id: str = "") -> ScenarioSettings:
    return ScenarioSettings(
        mutations_per_scenario=cfg.mutations_per_scenario,
        max_retries=cfg.max_retries,
        mode=cfg.mode,
        max_regenerations=cfg.max_regenerations,
        infra_retries=cfg.infra_retries,
        short_circuit=cfg.short_circuit,
        template_dir=cfg.templates_dir,
        archive_dir=Path(cfg.output_dir) / "scenarios",
        run_id=run_id,
    )


def module_targets(cfg: CampaignConfig) -> list[ModuleTargets]:
    """Reference ranges for spread metrics: ``reference_mtrs`` if given, else ``mtrs``."""
    out = []
    for d in cfg.designs:
        for m in d.modules:
            ranges = m.reference_mtrs if m.reference_mtrs is not None else m.mtrs
            if ranges:
                out.append(
                    ModuleTargets(
                        module_id(d.design_id, m.path),
                        m.path,
                        [TargetRange(r.start_line, r.end_line, m.path) for r in ranges],
                    )
                )
    return out
