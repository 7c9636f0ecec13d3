"""Code-text embeddings, trajectory diversity, and journal reports.

The TF-IDF variant here is pinned so that scores are reproducible across
library versions: term frequency is the raw count, idf = ln((1+N)/(1+df)) + 1,
and each document vector is L2-normalized.  Cleaning removes comments,
imports, and bundle-declared boilerplate before tokenizing on alphanumeric
(plus underscore) runs, lowercased.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from tuso.errors import TusoError

DEFAULT_STRIP_PREFIXES = ("#", "import ", "from ")
DIVERSITY_WINDOW = 10

BEST_CURVE_HEADER = ("round", "best_score")
DIVERSITY_HEADER = ("ordinal", "solution_id", "diversity")
PI_HISTORY_HEADER = ("round", "category", "pi")

_TOKEN_RE = re.compile(r"[A-Za-z0-9_]+")


def clean_code(code: str, strip_prefixes: Sequence[str] = DEFAULT_STRIP_PREFIXES) -> list[str]:
    """Drop boilerplate lines, then tokenize what remains.

    A line is boilerplate when its left-stripped form starts with any of the
    given prefixes (comment marker, import keywords, bundle-declared
    patterns).  Tokens are maximal [A-Za-z0-9_]+ runs, lowercased.
    """
    kept_lines = []
    for line in code.splitlines():
        stripped = line.lstrip()
        if any(stripped.startswith(prefix) for prefix in strip_prefixes):
            continue
        kept_lines.append(line)
    return [tok.lower() for tok in _TOKEN_RE.findall("\n".join(kept_lines))]


def tfidf_embed(token_lists: Sequence[Sequence[str]]) -> np.ndarray:
    """Embed documents with the pinned tf-idf variant; rows are L2-normalized.

    All-boilerplate documents embed to the zero vector and stay zero.
    """
    n_docs = len(token_lists)
    vocab = sorted({tok for toks in token_lists for tok in toks})
    index = {tok: j for j, tok in enumerate(vocab)}
    matrix = np.zeros((n_docs, max(len(vocab), 1)), dtype=float)
    for i, toks in enumerate(token_lists):
        for tok in toks:
            matrix[i, index[tok]] += 1.0
    if vocab:
        df = (matrix > 0).sum(axis=0)
        idf = np.log((1.0 + n_docs) / (1.0 + df)) + 1.0
        matrix *= idf
        norms = np.linalg.norm(matrix, axis=1, keepdims=True)
        np.divide(matrix, norms, out=matrix, where=norms > 0)
    return matrix


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; any all-zero vector scores 0 against everything."""
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def trajectory_diversity(vectors: np.ndarray, window: int = DIVERSITY_WINDOW) -> list[float]:
    """diversity(i) = 1 - mean cosine(v_i, v_j) over j in [i-window, i+window], j != i.

    The window is clipped at the trajectory ends.  A point with no neighbors
    (singleton trajectory) is maximally diverse by convention.
    """
    n = len(vectors)
    out = []
    for i in range(n):
        lo = max(0, i - window)
        hi = min(n - 1, i + window)
        sims = [cosine(vectors[i], vectors[j]) for j in range(lo, hi + 1) if j != i]
        out.append(1.0 - (sum(sims) / len(sims)) if sims else 1.0)
    return out


def kmeans(X: np.ndarray, k: int, rng: np.random.Generator, iters: int = 25) -> np.ndarray:
    """Plain Lloyd k-means with k-means++ seeding; deterministic given rng state.

    Returns integer labels.  Empty clusters are reseeded to the point
    farthest from its assigned center.  When k >= n every point gets its own
    cluster.
    """
    n = len(X)
    if k <= 0:
        raise TusoError("kmeans requires k >= 1")
    if k >= n:
        return np.arange(n)

    centers = np.empty((k, X.shape[1]), dtype=float)
    first = int(rng.integers(n))
    centers[0] = X[first]
    dist_sq = ((X - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = float(dist_sq.sum())
        if total <= 0:
            centers[c] = X[int(rng.integers(n))]
        else:
            centers[c] = X[int(rng.choice(n, p=dist_sq / total))]
        dist_sq = np.minimum(dist_sq, ((X - centers[c]) ** 2).sum(axis=1))

    labels = np.zeros(n, dtype=int)
    for _ in range(iters):
        dists = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = dists.argmin(axis=1)
        for c in range(k):
            mask = new_labels == c
            if mask.any():
                centers[c] = X[mask].mean(axis=0)
            else:
                worst = int(dists[np.arange(n), new_labels].argmax())
                centers[c] = X[worst]
                new_labels[worst] = c
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels


@dataclass(frozen=True)
class ReportPaths:
    best_curve: Path
    diversity: Path
    pi_history: Path
    summary: Path


def export_report(journal_path: Path | str, out_dir: Path | str, force: bool = False) -> ReportPaths:
    """Write best-score curve, diversity trace, and pi history CSVs from a journal.

    Read-only over the journal; works on in-progress journals (flagged in the
    summary).  Refuses a non-empty output directory unless ``force``.
    """
    from tuso.journal import read_journal

    out = Path(out_dir)
    if out.exists() and any(out.iterdir()) and not force:
        raise TusoError(f"output directory {out} is not empty (use force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)

    events, _truncated = read_journal(journal_path)

    best_rows: list[tuple[int, float]] = []
    pi_rows: list[tuple[int, str, float]] = []
    ok_solutions: list[tuple[str, str]] = []  # (id, code)
    strip_prefixes = list(DEFAULT_STRIP_PREFIXES)
    status_counts: dict[str, int] = {}
    execution_count = 0
    completed = False
    running_best = -math.inf

    def _tree_rows(round_index: int, tree: dict) -> None:
        for cat in tree.get("categories", []):
            pi_rows.append((round_index, cat["name"], float(cat["pi"])))

    for event in events:
        kind = event.get("ev")
        if kind == "run_start":
            prefixes = event.get("bundle", {}).get("strip_prefixes")
            if prefixes:
                strip_prefixes = list(prefixes)
        elif kind == "tree":
            _tree_rows(int(event.get("round", 0)), event.get("tree", {}))
        elif kind == "solution":
            sol = event.get("solution", {})
            status = sol.get("status", "unknown")
            status_counts[status] = status_counts.get(status, 0) + 1
            if status == "ok":
                ok_solutions.append((sol["id"], sol.get("code", "")))
                if sol.get("score") is not None:
                    running_best = max(running_best, float(sol["score"]))
        elif kind == "execution":
            execution_count += 1
        elif kind == "round_end":
            round_index = int(event["round"])
            if math.isfinite(running_best):
                best_rows.append((round_index, running_best))
            tree = event.get("tree")
            if tree:
                _tree_rows(round_index, tree)
        elif kind == "run_end":
            completed = True

    paths = ReportPaths(
        best_curve=out / "best_curve.csv",
        diversity=out / "diversity.csv",
        pi_history=out / "pi_history.csv",
        summary=out / "summary.txt",
    )

    with open(paths.best_curve, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(BEST_CURVE_HEADER)
        writer.writerows(best_rows)

    vectors = tfidf_embed([clean_code(code, strip_prefixes) for _, code in ok_solutions])
    divs = trajectory_diversity(vectors) if len(ok_solutions) else []
    with open(paths.diversity, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(DIVERSITY_HEADER)
        for ordinal, ((sol_id, _), div) in enumerate(zip(ok_solutions, divs)):
            writer.writerow((ordinal, sol_id, div))

    with open(paths.pi_history, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PI_HISTORY_HEADER)
        writer.writerows(pi_rows)

    lines = [
        f"run complete: {'yes' if completed else 'no (in progress)'}",
        f"executions: {execution_count}",
        f"solutions by status: "
        + (", ".join(f"{k}={v}" for k, v in sorted(status_counts.items())) or "none"),
        f"best score: {running_best if math.isfinite(running_best) else 'n/a'}",
    ]
    paths.summary.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return paths
