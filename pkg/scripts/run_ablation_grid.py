"""Compare the full method against each ablation switch on the offline demo task.

Runs the scripted demo five times: once intact and once per ablation
(no_categories, no_bayesian, no_diagnosis, no_knowledge), all from the same
seed, then tabulates what each switch removed from the journal.

Usage:
    python3 scripts/run_ablation_grid.py --workdir ablation_out
"""

from __future__ import annotations

import argparse
import json
import shutil
from pathlib import Path

from _demo_task import real_code_routes, write_bundle, write_papers

from tuso.config import AblationFlags, RunConfig
from tuso.engine import Engine
from tuso.gateway import AssetStore, ScriptedBackend
from tuso.literature import FixtureSearch
from tuso.sandbox import load_bundle

VARIANTS = [
    ("full", AblationFlags()),
    ("no_categories", AblationFlags(no_categories=True)),
    ("no_bayesian", AblationFlags(no_bayesian=True)),
    ("no_diagnosis", AblationFlags(no_diagnosis=True)),
    ("no_knowledge", AblationFlags(no_knowledge=True)),
]


def _journal_stats(journal: Path) -> dict:
    events = [json.loads(line) for line in journal.read_text(encoding="utf-8").splitlines()]
    run_end = next(e for e in events if e["ev"] == "run_end")
    trees = [e["tree"] for e in events if e["ev"] in ("init_done", "round_end")]
    categories = len(trees[-1]["categories"]) if trees else 0
    return {
        "best_score": run_end["best_score"],
        "rounds": run_end["rounds"],
        "categories": categories,
        "rewards": sum(e["ev"] == "reward" for e in events),
        "diagnostics": sum(e["ev"] == "diagnostic_run" for e in events),
        "literature": sum(e["ev"] == "literature" for e in events),
    }


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workdir", type=Path, default=Path("ablation_out"))
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--rounds", type=int, default=2)
    parser.add_argument("--alpha", type=float, default=0.75)
    args = parser.parse_args(argv)

    if args.workdir.exists():
        shutil.rmtree(args.workdir)
    args.workdir.mkdir(parents=True)

    manifest = write_bundle(args.workdir / "task")
    papers = write_papers(args.workdir / "papers.json")

    rows = []
    for name, flags in VARIANTS:
        journal = args.workdir / f"{name}.ldjson"
        config = RunConfig(
            budget_seconds=600.0,
            alpha=args.alpha,
            seed=args.seed,
            max_rounds=args.rounds,
            ablation=flags,
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
        engine.run()
        rows.append((name, _journal_stats(journal)))
        print(f"finished: {name}")

    print()
    header = ("variant", "best", "rounds", "categories", "rewards", "diagnostics", "literature")
    widths = [max(len(header[0]), *(len(n) for n, _ in rows))] + [len(h) + 2 for h in header[1:]]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for name, stats in rows:
        cells = [
            name,
            f"{stats['best_score']:.4f}",
            str(stats["rounds"]),
            str(stats["categories"]),
            str(stats["rewards"]),
            str(stats["diagnostics"]),
            str(stats["literature"]),
        ]
        print("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
    print(f"\njournals under: {args.workdir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
