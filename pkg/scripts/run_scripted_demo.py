"""Run the full optimization loop offline against a scripted backend.

Builds a tiny regression bundle in a work directory, drives the engine with
canned backend replies whose code really executes in the sandbox, then
exports the analysis report.  No network access or API key needed.

Usage:
    python3 scripts/run_scripted_demo.py --workdir demo_out --rounds 3
"""

from __future__ import annotations

import argparse
import shutil
from pathlib import Path

from _demo_task import real_code_routes, write_bundle, write_papers

from tuso.analytics import export_report
from tuso.config import RunConfig
from tuso.engine import Engine
from tuso.gateway import AssetStore, ScriptedBackend
from tuso.literature import FixtureSearch
from tuso.sandbox import load_bundle


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workdir", type=Path, default=Path("demo_out"))
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--rounds", type=int, default=3)
    parser.add_argument("--alpha", type=float, default=0.75,
                        help="probability of an instruction step vs a diagnostic step")
    parser.add_argument("--fresh", action="store_true",
                        help="delete the work directory first")
    args = parser.parse_args(argv)

    if args.fresh and args.workdir.exists():
        shutil.rmtree(args.workdir)
    args.workdir.mkdir(parents=True, exist_ok=True)

    manifest = write_bundle(args.workdir / "task")
    papers = write_papers(args.workdir / "papers.json")
    journal = args.workdir / "run.ldjson"
    if journal.exists():
        journal.unlink()

    config = RunConfig(
        budget_seconds=600.0,
        alpha=args.alpha,
        seed=args.seed,
        max_rounds=args.rounds,
    )
    engine = Engine(
        config,
        load_bundle(manifest),
        ScriptedBackend(by_asset=real_code_routes()),
        AssetStore(),
        journal,
        literature_source=FixtureSearch(papers),
        bundle_manifest=manifest,
    )
    result = engine.run()

    print(f"journal: {journal}")
    if result.best is None:
        print("no solution survived initialization")
        return 1
    print(f"best solution: {result.best.id}")
    print(f"best score:    {result.best_score:.6f}")
    print(f"rounds:        {result.rounds}")

    report_dir = args.workdir / "report"
    paths = export_report(journal, report_dir, force=True)
    for path in (paths.best_curve, paths.diversity, paths.pi_history, paths.summary):
        print(f"wrote: {path}")
    print()
    print(Path(paths.summary).read_text(encoding="utf-8"))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
