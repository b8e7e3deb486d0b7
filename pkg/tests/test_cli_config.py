from __future__ import annotations

import json

import pytest
from synth import make_module, scripted_config

from bugsynth.catalog import BASELINE
from bugsynth.cli import main
from bugsynth.config import (
    CampaignConfig,
    build_backend,
    build_evaluator,
    load_config,
    parse_config,
    scenario_settings,
)
from bugsynth.errors import ConfigInvalid
from bugsynth.evaluation import ScriptedEvaluator, ShellEvaluator
from bugsynth.orchestrator import Mode, Parallelism


def _project(tmp_path, quota=2, **extra):
    designs = {"alpha": {"rtl/a.sv": make_module("a", 5)}, "beta": {"b.sv": make_module("b", 4, seed=3)}}
    return scripted_config(tmp_path, designs, quota=quota, **extra)


def _edit(path, fn):
    raw = json.loads(path.read_text())
    fn(raw)
    path.write_text(json.dumps(raw))


def test_defaults_are_applied(tmp_path):
    cfg = load_config(_project(tmp_path))
    assert cfg.max_retries == 2 and cfg.mutations_per_scenario == 2
    assert cfg.mode is Mode.GENERATION and cfg.parallelism is Parallelism.SEQUENTIAL
    assert cfg.evolution_window == 25 and cfg.catalog.default == BASELINE
    assert cfg.backend.kind == "mock" and cfg.backend.api_key_env == "OPENAI_API_KEY"
    assert cfg.resolved_cache_path == tmp_path / "out" / "cache.jsonl"
    settings = scenario_settings(cfg, "r1")
    assert settings.effective_short_circuit and settings.archive_dir == tmp_path / "out" / "scenarios"


def test_relative_paths_resolve_against_config_dir(tmp_path, monkeypatch):
    path = _project(tmp_path)
    monkeypatch.chdir("/")
    cfg = load_config(path)
    assert cfg.designs[0].root == str(tmp_path / "designs" / "alpha")


def test_missing_files_name_the_field(tmp_path):
    path = _project(tmp_path)
    _edit(path, lambda r: r.update(catalog={"default": "nope.json"}))
    with pytest.raises(ConfigInvalid) as exc:
        load_config(path)
    assert any(p.startswith("catalog.default") for p in exc.value.problems)
    _edit(path, lambda r: (r.pop("catalog"), r["designs"][1]["modules"].append({"path": "ghost.sv"})))
    with pytest.raises(ConfigInvalid, match=r"designs\[1\]\.modules\[1\]\.path"):
        load_config(path)


def test_schema_errors_are_config_invalid(tmp_path):
    with pytest.raises(ConfigInvalid, match="designs"):
        parse_config({"designs": []}, tmp_path)
    with pytest.raises(ConfigInvalid, match="unexpected_key"):
        parse_config({"designs": [], "unexpected_key": 1}, tmp_path)
    bad_eval = {"designs": [{"design_id": "d", "root": ".", "modules": [{"path": "x"}], "evaluator": {"kind": "shell"}}]}
    with pytest.raises(ConfigInvalid, match="compile_command"):
        parse_config(bad_eval, tmp_path)
    with pytest.raises(ConfigInvalid, match="endpoint"):
        parse_config({"designs": [], "backend": {"kind": "remote"}}, tmp_path)
    with pytest.raises(ConfigInvalid, match="not found"):
        load_config(tmp_path / "missing.json")


def test_overrides(tmp_path):
    path = _project(tmp_path)
    _edit(path, lambda r: r["designs"][0].update(scenarios_target=7))
    cfg = load_config(path)
    assert cfg.quota(cfg.designs[0], cfg.designs[0].modules[0]) == 7
    cfg = load_config(path, {"max_retries": 0, "quota": 1, "mode": "coverage_assessment", "endpoint": "http://x"})
    assert cfg.max_retries == 0 and cfg.mode is Mode.COVERAGE
    assert cfg.quota(cfg.designs[0], cfg.designs[0].modules[0]) == 1
    assert cfg.backend.endpoint == "http://x"
    with pytest.raises(ConfigInvalid):
        load_config(path, {"bogus": 1})


def test_round_trip_through_json(tmp_path):
    path = _project(tmp_path, mode="coverage_assessment", short_circuit=True, evolution_window=5)
    cfg = load_config(path)
    again = CampaignConfig.model_validate_json(cfg.model_dump_json())
    assert again == cfg


def test_builders(tmp_path):
    cfg = load_config(_project(tmp_path))
    assert isinstance(build_evaluator(cfg.designs[0]), ScriptedEvaluator)
    shell = cfg.designs[0].model_copy(
        update={"evaluator": cfg.designs[0].evaluator.model_copy(
            update={"kind": "shell", "compile_command": "true", "test_command": "true", "tests": ["t"], "seeds": [1]}
        )}
    )
    assert isinstance(build_evaluator(shell), ShellEvaluator)
    remote = cfg.model_copy(update={"backend": cfg.backend.model_copy(update={"kind": "remote", "endpoint": "http://h"})})
    b = build_backend(remote)
    assert b.url == "http://h/chat/completions"
    b.close()


def test_cli_run_writes_reports(tmp_path, capsys):
    path = _project(tmp_path)
    assert main(["run", "-c", str(path)]) == 0
    out = tmp_path / "out"
    for name in ("report.json", "report.txt", "evolution.csv", "config.json", "config.resolved.json", "scenarios.jsonl"):
        assert (out / name).exists(), name
    report = json.loads((out / "report.json").read_text())
    assert report["designs"]["alpha"]["scenarios_accepted"] == 2
    assert "report written" in capsys.readouterr().out

    assert main(["cache", "-c", str(path), "--count"]) == 0
    assert json.loads(capsys.readouterr().out) == {"success": 8}
    assert main(["cache", "-c", str(path), "--design", "beta"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 4 and all(json.loads(line)["design_id"] == "beta" for line in lines)

    assert main(["report", "-c", str(path), "--format", "json", "--no-write"]) == 0
    assert json.loads(capsys.readouterr().out)["run_id"] == report["run_id"]


def test_cli_run_with_overrides_and_dry_run(tmp_path, capsys):
    path = _project(tmp_path)
    assert main(["run", "-c", str(path), "--dry-run"]) == 0
    assert "baseline gate passed" in capsys.readouterr().out
    assert not (tmp_path / "out" / "cache.jsonl").exists()
    assert main(["run", "-c", str(path), "--quota", "1", "--max-retries", "0"]) == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["max_retries"] == 0 and report["designs"]["beta"]["scenarios"] == 1


def test_cli_baseline_failure_exits_2(tmp_path, capsys):
    path = _project(tmp_path)
    _edit(path, lambda r: r["designs"][1]["evaluator"].update(baseline_ok=False))
    assert main(["validate", "-c", str(path)]) == 2
    assert "beta" in capsys.readouterr().err
    assert main(["validate", "-c", str(path), "--skip-baseline"]) == 0
    assert main(["run", "-c", str(path)]) == 2
    assert not (tmp_path / "out" / "cache.jsonl").exists()


def test_cli_worker_panic_exits_3(tmp_path, monkeypatch):
    path = _project(tmp_path)

    def broken(self, ws, entries, **kw):
        raise RuntimeError("evaluator crashed")

    monkeypatch.setattr(ScriptedEvaluator, "evaluate", broken)
    assert main(["run", "-c", str(path)]) == 3


def test_cli_config_and_usage_errors(tmp_path, capsys):
    assert main(["run", "-c", str(tmp_path / "none.json")]) == 1
    assert main(["frobnicate"]) == 1
    assert main([]) == 1
    assert main(["cache", "--path", str(tmp_path / "none.jsonl")]) == 1
    capsys.readouterr()


def test_cli_split_prints_partition(tmp_path, capsys):
    f = tmp_path / "m.sv"
    f.write_text(make_module("m", 3))
    assert main(["split", str(f), "--mock"]) == 0
    part = json.loads(capsys.readouterr().out)
    assert part["source_id"] == "m.sv" and part["origin"] == "agent"
    assert main(["split", str(f)]) == 0
    assert json.loads(capsys.readouterr().out)["origin"] == "fallback"
    assert main(["split", str(tmp_path / "gone.sv")]) == 1
