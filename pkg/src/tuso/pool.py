"""Solution pool with diversity-aware top selection.

Solutions are insertion-ordered; failed and timed-out candidates are stored
for the record but never selected or returned as best.  diverse_top clusters
the ok solutions by code similarity and, per cluster, returns the shortest
solution whose score sits within a small band of the cluster best, trading a
hair of score for brevity and variety.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Mapping, Sequence

import numpy as np

from tuso import analytics
from tuso.errors import CorruptJournal, DuplicateId

BAND_FRACTION = 0.001
ZERO_BEST_BAND = 1e-9

_VALID_STATUS = ("ok", "failed", "timeout")


@dataclass(frozen=True)
class Solution:
    """One evaluated candidate.  status == "ok" if and only if it has a score."""

    id: str
    code: str
    status: str
    score: float | None = None
    round_index: int = 0
    parent_id: str | None = None
    category: str | None = None
    instruction: str | None = None
    created_at: float = 0.0

    def __post_init__(self) -> None:
        if self.status not in _VALID_STATUS:
            raise ValueError(f"invalid status '{self.status}'")
        if (self.status == "ok") != (self.score is not None):
            raise ValueError("a solution has a score exactly when its status is 'ok'")

    @property
    def length_chars(self) -> int:
        return len(self.code)

    def to_record(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "code": self.code,
            "status": self.status,
            "score": self.score,
            "round_index": self.round_index,
            "parent_id": self.parent_id,
            "category": self.category,
            "instruction": self.instruction,
            "created_at": self.created_at,
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "Solution":
        return cls(**{k: rec.get(k) for k in (
            "id", "code", "status", "score", "round_index",
            "parent_id", "category", "instruction", "created_at",
        )})


@dataclass
class SolutionPool:
    _items: dict[str, Solution] = field(default_factory=dict)

    def insert(self, solution: Solution) -> None:
        if solution.id in self._items:
            raise DuplicateId(f"solution id '{solution.id}' already in pool")
        self._items[solution.id] = solution

    def get(self, solution_id: str) -> Solution:
        return self._items[solution_id]

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Solution]:
        return iter(self._items.values())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SolutionPool):
            return NotImplemented
        return list(self._items.items()) == list(other._items.items())

    def ok_solutions(self) -> list[Solution]:
        return [s for s in self._items.values() if s.status == "ok"]

    def best(self) -> Solution | None:
        """Highest-scoring ok solution; ties go to the earliest inserted."""
        best: Solution | None = None
        for sol in self._items.values():
            if sol.status != "ok":
                continue
            if best is None or sol.score > best.score:  # type: ignore[operator]
                best = sol
        return best

    def diverse_top(
        self,
        n: int,
        rng: np.random.Generator,
        *,
        band: float = BAND_FRACTION,
        strip_prefixes: Sequence[str] = analytics.DEFAULT_STRIP_PREFIXES,
    ) -> list[Solution]:
        """Select up to n cluster representatives, sorted by score descending.

        Ok solutions are embedded (cleaned code, pinned tf-idf) and split into
        k = min(n, #ok) clusters.  Within each cluster, solutions scoring at
        least cluster_best - band*|cluster_best| are eligible (an absolute
        1e-9 band when the cluster best is 0) and the shortest eligible code
        wins.  Deterministic given the pool contents, n, and the rng state.
        """
        ok = self.ok_solutions()
        if not ok or n < 1:
            return []
        k = min(n, len(ok))
        tokens = [analytics.clean_code(s.code, strip_prefixes) for s in ok]
        vectors = analytics.tfidf_embed(tokens)
        labels = analytics.kmeans(vectors, k, rng)

        insertion_order = {sol_id: i for i, sol_id in enumerate(self._items)}
        representatives = []
        for cluster in range(int(labels.max()) + 1):
            members = [s for s, lab in zip(ok, labels) if lab == cluster]
            if not members:
                continue
            cluster_best = max(s.score for s in members)  # type: ignore[type-var]
            floor = (
                cluster_best - band * abs(cluster_best)
                if cluster_best != 0.0
                else -ZERO_BEST_BAND
            )
            eligible = [s for s in members if s.score >= floor]  # type: ignore[operator]
            pick = min(eligible, key=lambda s: (s.length_chars, insertion_order[s.id]))
            representatives.append(pick)
        representatives.sort(key=lambda s: (-s.score, insertion_order[s.id]))  # type: ignore[operator]
        return representatives

    def save(self, path: Path | str) -> None:
        """Write one JSON record per solution, insertion order preserved."""
        with open(path, "w", encoding="utf-8") as fh:
            for sol in self._items.values():
                fh.write(json.dumps(sol.to_record(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: Path | str) -> "SolutionPool":
        """Rebuild a pool from disk.

        An empty file loads as an empty pool.  A truncated final record is
        dropped with a warning; a malformed record anywhere else raises
        CorruptJournal with its index.
        """
        pool = cls()
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        records = [(i, line) for i, line in enumerate(lines) if line.strip()]
        for pos, (index, line) in enumerate(records):
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                if pos == len(records) - 1:
                    warnings.warn(
                        f"dropped truncated final record {index} in {path}",
                        RuntimeWarning,
                        stacklevel=2,
                    )
                    break
                raise CorruptJournal(f"malformed pool record in {path}", index) from None
            pool.insert(Solution.from_record(rec))
        return pool
