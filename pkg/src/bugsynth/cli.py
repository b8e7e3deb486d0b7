"""Command-line front end.

Exit codes: 0 success, 1 configuration or usage error, 2 baseline gate
failure, 3 runtime abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from bugsynth.agents.mock import MockBackend
from bugsynth.errors import BaselineGateFailed, BugsynthError, ConfigInvalid
from bugsynth.memory import MutationCache
from bugsynth.metrics import render_text

EXIT_OK, EXIT_CONFIG, EXIT_BASELINE, EXIT_RUNTIME = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit(2), which means baseline failure here
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bugsynth", description="Inject realistic bugs into HDL designs and grade the testbench.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    run = sub.add_parser("run", help="run a campaign from a config file")
    run.add_argument("-c", "--config", required=True, type=Path)
    run.add_argument("--dry-run", action="store_true", help="validate and run the baseline gate only")
    run.add_argument("--mode", choices=["generation", "coverage_assessment"])
    run.add_argument("--parallelism", choices=["inter_design", "intra_design", "sequential"])
    run.add_argument("--quota", type=int, help="accepted scenarios per module")
    run.add_argument("--max-retries", type=int)
    run.add_argument("--endpoint", help="chat completion endpoint for the remote backend")

    split = sub.add_parser("split", help="partition one HDL file and print the partition as JSON")
    split.add_argument("file", type=Path)
    split.add_argument("-c", "--config", type=Path, help="use the splitter and backend settings of this config")
    split.add_argument("--mock", action="store_true", help="use the deterministic mock agent instead of the fallback")
    split.add_argument("--source-id", help="identifier recorded in the partition (default: file name)")

    validate = sub.add_parser("validate", help="check config, catalogs and the baseline gate")
    validate.add_argument("-c", "--config", required=True, type=Path)
    validate.add_argument("--skip-baseline", action="store_true")

    cache = sub.add_parser("cache", help="inspect the mutation cache")
    src = cache.add_mutually_exclusive_group(required=True)
    src.add_argument("-c", "--config", type=Path)
    src.add_argument("--path", type=Path, help="cache file to read directly")
    cache.add_argument("--design")
    cache.add_argument("--module")
    cache.add_argument("--outcome", choices=["pending", "success", "syntax_failure", "undetected"])
    cache.add_argument("--class", dest="class_id")
    cache.add_argument("--scenario")
    cache.add_argument("--run-id")
    cache.add_argument("--count", action="store_true", help="print outcome counts only")

    report = sub.add_parser("report", help="recompute metrics from the cache and timing log")
    report.add_argument("-c", "--config", required=True, type=Path)
    report.add_argument("--run-id", help="campaign to report (default: most recent)")
    report.add_argument("--format", choices=["text", "json"], default="text")
    report.add_argument("--no-write", action="store_true", help="print only, do not rewrite report files")
    return parser


def _cmd_run(args) -> int:
    from bugsynth.campaign import run_campaign
    from bugsynth.config import build_evaluator, load_config

    overrides = {
        "mode": args.mode,
        "parallelism": args.parallelism,
        "quota": args.quota,
        "max_retries": args.max_retries,
        "endpoint": args.endpoint,
    }
    cfg = load_config(args.config, overrides)
    if args.dry_run:
        return _validate(cfg, baseline=True, build=build_evaluator)
    result = run_campaign(cfg, raw_config_text=args.config.read_text(encoding="utf-8"))
    sys.stdout.write(render_text(result.report))
    print(f"report written to {cfg.output_dir}")
    return EXIT_RUNTIME if result.failed_workers else EXIT_OK


def _validate(cfg, *, baseline: bool, build) -> int:
    from bugsynth.campaign import baseline_gate
    from bugsynth.catalog import IndexRegistry
    from bugsynth.config import index_mapping, module_id

    registry = IndexRegistry(index_mapping(cfg))
    for d in cfg.designs:
        for m in d.modules:
            try:
                idx = registry.select(d.design_id, module_id(d.design_id, m.path))
            except BugsynthError as exc:
                raise ConfigInvalid(f"mutation catalog for {d.design_id}:{m.path}: {exc}") from exc
            print(f"{d.design_id}:{m.path}: catalog {idx.name!r} with {len(idx.classes)} classes")
    if baseline:
        out = Path(cfg.output_dir) / "logs"
        evaluators = {d.design_id: build(d, out / d.design_id) for d in cfg.designs}
        baseline_gate(cfg, evaluators, [d.design_id for d in cfg.designs])
        print(f"baseline gate passed for {len(cfg.designs)} design(s)")
    print("configuration ok")
    return EXIT_OK


def _cmd_validate(args) -> int:
    from bugsynth.config import build_evaluator, load_config

    cfg = load_config(args.config)
    return _validate(cfg, baseline=not args.skip_baseline, build=build_evaluator)


def _cmd_split(args) -> int:
    from bugsynth.partition import SplitterConfig, partition_module

    try:
        source = args.file.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigInvalid(f"cannot read {args.file}: {exc}") from None
    source_id = args.source_id or args.file.name
    backend, config = None, SplitterConfig()
    if args.config:
        from bugsynth.config import build_backend, load_config, splitter_config

        cfg = load_config(args.config)
        backend, config = build_backend(cfg), splitter_config(cfg)
    if args.mock:
        backend = MockBackend()
    part = partition_module(source, config, backend, source_id)
    print(part.dumps())
    return EXIT_OK


def _cmd_cache(args) -> int:
    if args.path:
        path = args.path
        if not path.exists():
            raise ConfigInvalid(f"cache file not found: {path}")
    else:
        from bugsynth.config import load_config

        path = load_config(args.config).resolved_cache_path
    cache = MutationCache(path)
    entries = cache.entries(
        design_id=args.design,
        module_id=args.module,
        outcome=args.outcome,
        class_id=args.class_id,
        scenario_id=args.scenario,
        run_id=args.run_id,
    )
    if args.count:
        counts = {}
        for e in entries:
            counts[e.outcome.value] = counts.get(e.outcome.value, 0) + 1
        print(json.dumps(dict(sorted(counts.items())), indent=2))
        return EXIT_OK
    for e in entries:
        print(json.dumps(e.to_dict()))
    return EXIT_OK


def _cmd_report(args) -> int:
    from bugsynth.campaign import report_from_files, write_report
    from bugsynth.config import load_config

    cfg = load_config(args.config)
    report = report_from_files(cfg, args.run_id)
    if not args.no_write:
        write_report(report, cfg.output_dir)
    if args.format == "json":
        print(json.dumps(report.to_dict(), indent=2))
    else:
        sys.stdout.write(render_text(report))
    return EXIT_OK


COMMANDS = {
    "run": _cmd_run,
    "split": _cmd_split,
    "validate": _cmd_validate,
    "cache": _cmd_cache,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(
        level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigInvalid as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BaselineGateFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BASELINE
    except BugsynthError as exc:
        print(f"aborted: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
