"""Regression fixtures: fit quadratic data starting from a constant predictor.

Three variants share one generator: the standard task, a timeout variant
whose evaluator sleeps past the bundle's execution limit, and a warm-start
variant that ships a mediocre linear-fit region alongside the template.
Scores are 1 minus squared error normalized by the mean predictor's, so the
baseline region scores exactly 0 and the closed-form quadratic fit is the
oracle.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from taskpack.task import FixtureTask, write_manifest

POINTS = 60
NOISE_SIGMA = 0.2
BASELINE_SCORE = 0.0
ORACLE_FLOOR = 0.99
TIMEOUT_LIMIT_SECONDS = 2.0
TIMEOUT_SLEEP_SECONDS = 8.0

_TEMPLATE_BODY = '''"""Regression task: fit y from x; score is R squared vs the mean predictor."""
import csv
import os
{timeout_import}

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
{timeout_sleep}    baseline = sum(ys) / len(ys)
    sse = sum((model(x) - y) ** 2 for x, y in zip(xs, ys))
    sst = sum((baseline - y) ** 2 for x, y in zip(xs, ys))
    return 1.0 - sse / sst


def main():
    xs, ys = load_dataset()
    model = make_model(xs, ys)
    print(f"tuso_evaluate: {{evaluate(model, xs, ys)}}")


if __name__ == "__main__":
    main()
'''

TEMPLATE = _TEMPLATE_BODY.format(timeout_import="", timeout_sleep="")
TIMEOUT_TEMPLATE = _TEMPLATE_BODY.format(
    timeout_import="import time\n",
    timeout_sleep=f"    time.sleep({TIMEOUT_SLEEP_SECONDS})\n",
)

ORACLE_REGION = '''def make_model(xs, ys):
    import numpy as np
    coef = np.polyfit(np.asarray(xs, dtype=float), np.asarray(ys, dtype=float), 2)
    return lambda x: float(coef[0] * x * x + coef[1] * x + coef[2])
'''

# deliberately underpowered: a straight line through curved data
WARM_START_REGION = '''def make_model(xs, ys):
    n = len(xs)
    sx = sum(xs)
    sy = sum(ys)
    sxx = sum(x * x for x in xs)
    sxy = sum(x * y for x, y in zip(xs, ys))
    slope = (n * sxy - sx * sy) / (n * sxx - sx * sx)
    intercept = (sy - slope * sx) / n
    return lambda x: slope * x + intercept
'''


def _write_regression(
    seed: int,
    out_dir: Path,
    *,
    name: str,
    template_text: str,
    time_limit_seconds: float,
) -> FixtureTask:
    out_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    xs = [i / 10.0 for i in range(POINTS)]
    noise = rng.normal(0.0, NOISE_SIGMA, size=POINTS)
    ys = [0.8 * x * x - 3.0 * x + 2.0 + float(e) for x, e in zip(xs, noise)]
    rows = ["x,y"] + [f"{x!r},{y!r}" for x, y in zip(xs, ys)]
    data_path = out_dir / "data.csv"
    data_path.write_text("\n".join(rows) + "\n", encoding="utf-8")

    template_path = out_dir / "template.py"
    template_path.write_text(template_text, encoding="utf-8")
    oracle_path = out_dir / "oracle_region.py"
    oracle_path.write_text(ORACLE_REGION, encoding="utf-8")

    write_manifest(
        out_dir,
        name=name,
        template="template.py",
        dataset="data.csv",
        time_limit_seconds=time_limit_seconds,
        task_description=(
            "Fit a regression model y = f(x) on the provided points. Score is "
            "1 minus squared error normalized by the mean predictor's; higher "
            "is better."
        ),
        data_available="data.csv with columns x,y (60 rows, x in [0, 5.9]).",
    )
    return FixtureTask(
        name=name,
        generator_seed=seed,
        template_path=template_path,
        expected_baseline_score=BASELINE_SCORE,
        oracle_solution_path=oracle_path,
        oracle_score_floor=ORACLE_FLOOR,
    )


def make_regression_fixture(
    seed: int, out_dir: Path | str, *, timeout_variant: bool = False
) -> FixtureTask:
    """Generate the quadratic regression task; deterministic in seed.

    With timeout_variant the evaluator sleeps past the manifest's execution
    limit, so any run under that limit is reported timed out; the template
    still prints its baseline score when run without a limit.
    """
    if timeout_variant:
        return _write_regression(
            seed,
            Path(out_dir),
            name="regression-timeout",
            template_text=TIMEOUT_TEMPLATE,
            time_limit_seconds=TIMEOUT_LIMIT_SECONDS,
        )
    return _write_regression(
        seed,
        Path(out_dir),
        name="regression",
        template_text=TEMPLATE,
        time_limit_seconds=25.0,
    )


def make_warmstart_fixture(seed: int, out_dir: Path | str) -> FixtureTask:
    """Regression task plus a warm-start region scoring between 0 and the floor."""
    out_dir = Path(out_dir)
    task = _write_regression(
        seed,
        out_dir,
        name="regression-warmstart",
        template_text=TEMPLATE,
        time_limit_seconds=25.0,
    )
    (out_dir / "warm_start.py").write_text(WARM_START_REGION, encoding="utf-8")
    return task
