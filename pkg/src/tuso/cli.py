"""Command-line interface.

Subcommands: ``init`` validates a task bundle and dry-runs its unmodified
template, ``run`` starts an optimization run from a config file, ``resume``
continues an interrupted run from its journal, and ``report`` exports CSV
summaries from a journal.

Exit codes: 0 success, 1 run failure (for example every initialization
failed), 2 invalid config or bundle, 3 completion backend unavailable.
The API key for an HTTP backend is read only from the TUSO_API_KEY
environment variable; config files never hold secrets.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import Sequence

from tuso import analytics, engine, sandbox
from tuso.config import ABLATION_NAMES, AblationFlags, RunConfig, load_config
from tuso.errors import (
    AllInitializationsFailed,
    BackendUnavailable,
    BundleInvalid,
    ConfigError,
    TusoError,
)
from tuso.gateway import AssetStore

EXIT_OK = 0
EXIT_RUN_FAILED = 1
EXIT_INVALID = 2
EXIT_BACKEND = 3


def _run_config_epilog() -> str:
    """Enumerate [run] config keys with their defaults, straight from the dataclass."""
    lines = ["[run] config keys and defaults:"]
    for f in dataclasses.fields(RunConfig):
        if f.name == "ablation":
            names = ", ".join(ABLATION_NAMES)
            lines.append(f"  ablation = []  (names: {names})")
        else:
            lines.append(f"  {f.name} = {f.default!r}")
    return "\n".join(lines)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tuso",
        description="LLM-driven optimization of a sentinel-delimited code region.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_init = sub.add_parser(
        "init", help="validate a task bundle and dry-run its unmodified template"
    )
    p_init.add_argument("bundle", help="bundle manifest (bundle.toml) or its directory")
    p_init.add_argument(
        "--skip-dry-run", action="store_true", help="only validate; do not execute the template"
    )

    p_run = sub.add_parser(
        "run",
        help="start an optimization run",
        epilog=_run_config_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p_run.add_argument("-c", "--config", required=True, help="run config file (TOML)")
    p_run.add_argument("--budget", type=float, default=None, help="override run.budget_seconds")
    p_run.add_argument("--seed", type=int, default=None, help="override run.seed")
    p_run.add_argument("--alpha", type=float, default=None, help="override run.alpha")
    p_run.add_argument(
        "--max-rounds", type=int, default=None, help="override run.max_rounds"
    )
    p_run.add_argument(
        "--ablation",
        action="append",
        default=None,
        metavar="NAME",
        help="enable an ablation (repeatable); replaces the config's list",
    )
    p_run.add_argument("--warm-start", default=None, help="file holding starting region code")
    p_run.add_argument("--journal", default=None, help="override run.journal path")

    p_resume = sub.add_parser("resume", help="continue an interrupted run from its journal")
    p_resume.add_argument("journal", help="journal file of the interrupted run")
    p_resume.add_argument(
        "--max-rounds", type=int, default=None, help="override the journaled run.max_rounds"
    )

    p_report = sub.add_parser("report", help="export CSV summaries from a journal")
    p_report.add_argument("journal", help="journal file to summarize")
    p_report.add_argument(
        "--out", default=None, help="output directory (default: <journal>_report)"
    )
    p_report.add_argument(
        "--force", action="store_true", help="write into a non-empty output directory"
    )
    return parser


def _cmd_init(args: argparse.Namespace) -> int:
    try:
        bundle = sandbox.load_bundle(args.bundle)
    except BundleInvalid as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_INVALID
    template = bundle.template_text()
    region = sandbox.extract_region(template, bundle)
    print(f"bundle: {bundle.name}")
    print(f"template: {bundle.template_path}")
    print(f"region lines: {len(region.splitlines())}")
    print(f"run command: {' '.join(bundle.run_command)}")
    if args.skip_dry_run:
        print("dry run: skipped")
        return EXIT_OK
    try:
        report = sandbox.execute(template, bundle)
    except TusoError as exc:
        print(f"check failed: dry run could not start: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if report.status != "ok":
        print(
            f"check failed: dry run {report.status}"
            f" (exit {report.exit_code}):\n{report.stderr_tail[-2000:]}",
            file=sys.stderr,
        )
        return EXIT_INVALID
    print(f"dry run: ok (baseline score {report.score}, {report.duration:.2f}s)")
    return EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    file_config = load_config(args.config)
    run_config = file_config.run
    overrides: dict[str, object] = {}
    if args.budget is not None:
        overrides["budget_seconds"] = args.budget
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.alpha is not None:
        overrides["alpha"] = args.alpha
    if args.max_rounds is not None:
        overrides["max_rounds"] = args.max_rounds
    if args.ablation is not None:
        overrides["ablation"] = AblationFlags.from_names(args.ablation)
    if overrides:
        run_config = dataclasses.replace(run_config, **overrides)
        run_config.validate()

    bundle = sandbox.load_bundle(file_config.bundle)
    journal_path = Path(args.journal) if args.journal else file_config.journal

    warm_path = Path(args.warm_start) if args.warm_start else file_config.warm_start
    warm_code = None
    if warm_path is not None:
        if not warm_path.is_file():
            raise ConfigError(f"warm start file not found: {warm_path}")
        warm_code = warm_path.read_text(encoding="utf-8")

    settings = file_config.backend
    backend = engine.build_backend(settings)
    assets = AssetStore(settings.prompt_dir)
    source = engine.build_literature_source(settings)

    result = engine.Engine(
        run_config,
        bundle,
        backend,
        assets,
        journal_path,
        literature_source=source,
        warm_start_code=warm_code,
        bundle_manifest=file_config.bundle,
        settings=settings,
    ).run()
    print(f"journal: {result.journal_path}")
    if result.best is None:
        print("best: none")
    else:
        print(f"best: {result.best.id} score {result.best_score} rounds {result.rounds}")
    return EXIT_OK


def _cmd_resume(args: argparse.Namespace) -> int:
    if not Path(args.journal).is_file():
        print(f"error: journal not found: {args.journal}", file=sys.stderr)
        return EXIT_INVALID
    result = engine.resume(args.journal, max_rounds=args.max_rounds)
    if result is None:
        print("run already complete; nothing to resume")
        return EXIT_OK
    print(f"journal: {result.journal_path}")
    if result.best is None:
        print("best: none")
    else:
        print(f"best: {result.best.id} score {result.best_score} rounds {result.rounds}")
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    journal = Path(args.journal)
    if not journal.is_file():
        print(f"error: journal not found: {journal}", file=sys.stderr)
        return EXIT_INVALID
    out_dir = Path(args.out) if args.out else journal.parent / f"{journal.stem}_report"
    paths = analytics.export_report(journal, out_dir, force=args.force)
    for written in (paths.best_curve, paths.diversity, paths.pi_history, paths.summary):
        print(f"wrote: {written}")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "init": _cmd_init,
        "run": _cmd_run,
        "resume": _cmd_resume,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, BundleInvalid) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except BackendUnavailable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except TusoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILED


if __name__ == "__main__":
    sys.exit(main())
