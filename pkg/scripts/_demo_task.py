"""Shared offline demo task: a tiny regression bundle plus scripted replies.

Both demo scripts build the same synthetic workspace so their journals are
directly comparable.  Everything here runs without network access or an API
key; the scripted backend stands in for a live model.
"""

from __future__ import annotations

import json
from pathlib import Path

TEMPLATE = '''"""Demo regression task: fit y from x over a fixed CSV dataset."""
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

# Region snippets the scripted backend hands back.  These are real model code,
# so scores come from actually running the spliced program in the sandbox.
SLOPE_GUESS = '''def make_model(xs, ys):
    slope = (ys[-1] - ys[0]) / (xs[-1] - xs[0])
    intercept = ys[0] - slope * xs[0]
    return lambda x: slope * x + intercept
'''

LEAST_SQUARES = '''def make_model(xs, ys):
    n = len(xs)
    sx = sum(xs)
    sy = sum(ys)
    sxx = sum(x * x for x in xs)
    sxy = sum(x * y for x, y in zip(xs, ys))
    slope = (n * sxy - sx * sy) / (n * sxx - sx * sx)
    intercept = (sy - slope * sx) / n
    return lambda x: slope * x + intercept
'''

MEDIAN_BASELINE = '''def make_model(xs, ys):
    ordered = sorted(ys)
    mid = ordered[len(ordered) // 2]
    return lambda x: mid
'''

RIDGE_LIKE = '''def make_model(xs, ys):
    n = len(xs)
    sx = sum(xs)
    sy = sum(ys)
    sxx = sum(x * x for x in xs) + 1e-3
    sxy = sum(x * y for x, y in zip(xs, ys))
    slope = (n * sxy - sx * sy) / (n * sxx - sx * sx)
    intercept = (sy - slope * sx) / n
    return lambda x: slope * x + intercept
'''

NEAREST_NEIGHBOR = '''def make_model(xs, ys):
    pairs = sorted(zip(xs, ys))
    def predict(x):
        best = min(pairs, key=lambda p: abs(p[0] - x))
        return best[1]
    return predict
'''


def dataset_text(rows: int = 40) -> str:
    lines = ["x,y"]
    for i in range(rows):
        x = i / 4.0
        lines.append(f"{x},{2.0 * x + 1.0 + (0.05 * (-1) ** i)}")
    return "\n".join(lines) + "\n"


def write_bundle(directory: Path, *, time_limit: float = 30.0) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "template.py").write_text(TEMPLATE, encoding="utf-8")
    (directory / "data.csv").write_text(dataset_text(), encoding="utf-8")
    manifest = directory / "bundle.toml"
    manifest.write_text(
        "\n".join(
            [
                "[bundle]",
                'name = "demo-regression"',
                'template = "template.py"',
                'run_command = "python3"',
                'dataset = "data.csv"',
                f"time_limit_seconds = {time_limit}",
                'task_description = "Fit a regression model y = f(x); score is R squared."',
                'data_available = "data.csv with columns x,y (40 rows)."',
            ]
        )
        + "\n",
        encoding="utf-8",
    )
    return manifest


def write_papers(path: Path) -> Path:
    path.write_text(
        json.dumps(
            {
                "data": [
                    {
                        "title": "Regularized linear estimators for noisy tabular data",
                        "abstract": (
                            "We revisit penalized least squares. "
                            "A small ridge term stabilizes ill conditioned fits. "
                            "Cross validation selects the penalty."
                        ),
                        "citationCount": 42,
                    },
                    {
                        "title": "Local averaging beats global under distribution shift",
                        "abstract": (
                            "Nearest neighbor predictors adapt locally. "
                            "Global parametric fits underperform when trends bend."
                        ),
                        "citationCount": 7,
                    },
                ]
            }
        ),
        encoding="utf-8",
    )
    return path


def real_code_routes() -> dict:
    """Scripted replies whose region code actually runs in the sandbox.

    The backend is canned but scores are genuine: each snippet is spliced
    into the template and measured, so the journal shows the same dynamics a
    live backend would produce.
    """
    return {
        "paper_abstract": "- penalized least squares stabilizes noisy fits\n- local averaging adapts to bends",
        "category_refine": "(no changes)",
        "instruction_refine": "(no additions)",
        "init_refine": "(keep)",
        "category_draft": "<c>model form</c> 3\n<c>robustness</c> 2",
        "instruction_draft": (
            "<p>by fitting parameters with least squares</p>\n"
            "<p>by switching to a local averaging predictor</p>\n"
            "<p>by adding a small regularization term</p>"
        ),
        "init_draft": "<m>endpoint slope heuristic</m>\n<m>median constant baseline</m>",
        "implement": [SLOPE_GUESS, MEDIAN_BASELINE],
        "repair": SLOPE_GUESS,
        "choose_instruction": "1",
        "optimize": [
            LEAST_SQUARES,
            NEAREST_NEIGHBOR,
            RIDGE_LIKE,
            SLOPE_GUESS,
            LEAST_SQUARES,
            NEAREST_NEIGHBOR,
            RIDGE_LIKE,
            LEAST_SQUARES,
            RIDGE_LIKE,
            NEAREST_NEIGHBOR,
        ],
        "feedback": "the fitted line tracks the trend; noise dominates the residual",
        "diagnose_instrument": (
            "import sys\n"
            "sys.stderr.write('probe: dataset loaded\\n')\n"
            "def make_model(xs, ys):\n"
            "    mean = sum(ys) / len(ys)\n"
            "    return lambda x: mean\n"
        ),
        "diagnose_improve": LEAST_SQUARES,
        "generic_optimize": [
            LEAST_SQUARES,
            RIDGE_LIKE,
            NEAREST_NEIGHBOR,
            SLOPE_GUESS,
            LEAST_SQUARES,
            RIDGE_LIKE,
            NEAREST_NEIGHBOR,
            LEAST_SQUARES,
            RIDGE_LIKE,
            NEAREST_NEIGHBOR,
        ],
    }
