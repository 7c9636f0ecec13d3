"""Denoise fixture: recover a low-rank signal matrix from noisy counts.

The generator draws a rank-3 ground truth (three row archetypes mixed with
small random weights), samples Poisson counts around it, and holds out a
random set of entries for scoring.  The evaluator reports 1 minus the
model's held-out squared error normalized by the raw input's, so the
identity baseline scores exactly 0 and a perfect denoiser scores 1.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from taskpack.task import FixtureTask, write_manifest

ROWS = 200
COLS = 50
RANK = 3
SIGNAL_SCALE = 16.0
HELD_OUT = 2000
BASELINE_SCORE = 0.0
ORACLE_FLOOR = 0.9

TEMPLATE = '''"""Denoise task: recover the underlying signal from a noisy count matrix."""
import json
import os


def load_dataset():
    with open(os.environ["TUSO_DATASET"]) as fh:
        payload = json.load(fh)
    return payload["noisy"], payload["heldout"]

# >>> tuso-region-begin
def denoise(counts):
    return [row[:] for row in counts]
# <<< tuso-region-end

def evaluate(denoised, noisy, heldout):
    model_err = 0.0
    input_err = 0.0
    for row, col, truth in heldout:
        model_err += (denoised[row][col] - truth) ** 2
        input_err += (noisy[row][col] - truth) ** 2
    return 1.0 - model_err / input_err


def main():
    noisy, heldout = load_dataset()
    denoised = denoise(noisy)
    print(f"tuso_evaluate: {evaluate(denoised, noisy, heldout)}")


if __name__ == "__main__":
    main()
'''

ORACLE_REGION = '''def denoise(counts):
    import numpy as np
    x = np.asarray(counts, dtype=float)
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    keep = 3
    return ((u[:, :keep] * s[:keep]) @ vt[:keep]).tolist()
'''


def make_denoise_fixture(seed: int, out_dir: Path | str) -> FixtureTask:
    """Generate the denoise task directory; deterministic in seed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    # rows cycle through three archetypes so the rank-3 structure stays well
    # conditioned at every seed
    archetypes = np.eye(RANK)[np.arange(ROWS) % RANK]
    row_factors = 2.0 * archetypes + rng.uniform(0.0, 0.4, (ROWS, RANK))
    col_factors = rng.uniform(1.0, 3.0, (RANK, COLS))
    truth = SIGNAL_SCALE * (row_factors @ col_factors)
    noisy = rng.poisson(truth)
    flat = rng.choice(ROWS * COLS, size=HELD_OUT, replace=False)
    held_rows, held_cols = np.divmod(flat, COLS)

    payload = {
        "noisy": [[int(v) for v in row] for row in noisy],
        "heldout": [
            [int(r), int(c), float(truth[r, c])]
            for r, c in zip(held_rows, held_cols)
        ],
    }
    data_path = out_dir / "data.json"
    data_path.write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")

    template_path = out_dir / "template.py"
    template_path.write_text(TEMPLATE, encoding="utf-8")
    oracle_path = out_dir / "oracle_region.py"
    oracle_path.write_text(ORACLE_REGION, encoding="utf-8")

    write_manifest(
        out_dir,
        name="denoise",
        template="template.py",
        dataset="data.json",
        time_limit_seconds=25.0,
        task_description=(
            "Denoise a 200x50 count matrix: replace the identity model with one "
            "that recovers the underlying signal. Score is 1 minus held-out MSE "
            "normalized by the noisy input's MSE; higher is better."
        ),
        data_available=(
            "data.json with the noisy integer matrix under 'noisy' and held-out "
            "(row, col, truth) triples under 'heldout'."
        ),
    )
    return FixtureTask(
        name="denoise",
        generator_seed=seed,
        template_path=template_path,
        expected_baseline_score=BASELINE_SCORE,
        oracle_solution_path=oracle_path,
        oracle_score_floor=ORACLE_FLOOR,
    )
