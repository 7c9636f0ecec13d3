"""Shared builders for scripted end-to-end test runs."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

from tuso.config import AblationFlags, RunConfig
from tuso.engine import Engine
from tuso.gateway import AssetStore, ScriptedBackend
from tuso.sandbox import TaskBundle, load_bundle

TEMPLATE = '''"""Mini regression task: fit y from x over a fixed CSV dataset."""
import csv
import os


def load_dataset():
    path = os.environ["TUSO_DATASET"]
    xs, ys = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            xs.append(float(row["x"]))
            ys.append(float(row["y"]))
    return xs, ys

# >>> tuso-region-begin
def make_model(xs, ys):
    mean = sum(ys) / len(ys)
    return lambda x: mean
# <<< tuso-region-end

def evaluate(model, xs, ys):
    baseline = sum(ys) / len(ys)
    sse = sum((model(x) - y) ** 2 for x, y in zip(xs, ys))
    sst = sum((baseline - y) ** 2 for x, y in zip(xs, ys))
    return 1.0 - sse / sst


def main():
    xs, ys = load_dataset()
    model = make_model(xs, ys)
    print(f"tuso_evaluate: {evaluate(model, xs, ys)}")


if __name__ == "__main__":
    main()
'''

FAIL_SNIPPET = 'raise RuntimeError("scripted failure")'


def ok_snippet(score: float | str) -> str:
    """Region code that reports exactly ``score`` and stops the program.

    The snippet executes at module level where the model function was, so the
    template's own evaluator line never runs and the scripted score is the
    last (only) marker printed.
    """
    return f'print("tuso_evaluate: {score}")\nraise SystemExit(0)'


def hang_snippet(seconds: float) -> str:
    return f"import time\ntime.sleep({seconds})"


def dataset_text(rows: int = 40) -> str:
    lines = ["x,y"]
    for i in range(rows):
        x = i / 4.0
        lines.append(f"{x},{2.0 * x + 1.0 + (0.05 * (-1) ** i)}")
    return "\n".join(lines) + "\n"


def write_bundle(
    directory: Path,
    *,
    time_limit: float = 30.0,
    template: str = TEMPLATE,
    extra: Mapping[str, Any] | None = None,
) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "template.py").write_text(template, encoding="utf-8")
    (directory / "data.csv").write_text(dataset_text(), encoding="utf-8")
    lines = [
        "[bundle]",
        'name = "mini-regression"',
        'template = "template.py"',
        'run_command = "python3"',
        'dataset = "data.csv"',
        f"time_limit_seconds = {time_limit}",
        'task_description = "Fit a regression model y = f(x); score is R squared."',
        'data_available = "data.csv with columns x,y (40 rows)."',
    ]
    for key, value in (extra or {}).items():
        lines.append(f"{key} = {json.dumps(value)}")
    manifest = directory / "bundle.toml"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


def happy_routes(optimize_scores: tuple[float, ...] = (0.4, 0.3, 0.7, 0.05)) -> dict[str, Any]:
    """Scripted routes for a standard two-init run (one repaired)."""
    return {
        "category_draft": "<c>optimization</c> 3\n<c>features</c> 1",
        "instruction_draft": "<p>by tuning hyperparameters</p>\n<p>by trying a different model class</p>",
        "init_draft": "<m>mean baseline</m>\n<m>linear fit</m>",
        "implement": [ok_snippet(0.1), FAIL_SNIPPET],
        "repair": [ok_snippet(0.2)],
        "choose_instruction": "1",
        "optimize": [ok_snippet(s) for s in optimize_scores],
        "feedback": "improved via scripted tweak",
    }


def make_engine(
    bundle: TaskBundle,
    journal: Path,
    by_asset: Mapping[str, Any],
    *,
    config: RunConfig | None = None,
    default_reply: str | None = None,
    **engine_kwargs: Any,
) -> Engine:
    if config is None:
        config = RunConfig(budget_seconds=600.0, alpha=1.0, seed=7, max_rounds=2)
    backend = ScriptedBackend(by_asset=dict(by_asset), default=default_reply)
    return Engine(config, bundle, backend, AssetStore(), journal, **engine_kwargs)


def scripted_config(
    *,
    seed: int = 7,
    alpha: float = 1.0,
    max_rounds: int | None = 2,
    ablation: AblationFlags | None = None,
    **overrides: Any,
) -> RunConfig:
    return RunConfig(
        budget_seconds=overrides.pop("budget_seconds", 600.0),
        alpha=alpha,
        seed=seed,
        max_rounds=max_rounds,
        ablation=ablation or AblationFlags(),
        **overrides,
    )


def read_events(journal: Path) -> list[dict[str, Any]]:
    return [json.loads(line) for line in journal.read_text(encoding="utf-8").splitlines()]


def events_of(events: list[dict[str, Any]], kind: str) -> list[dict[str, Any]]:
    return [e for e in events if e.get("ev") == kind]
