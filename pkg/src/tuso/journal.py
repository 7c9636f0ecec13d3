"""Append-only line-delimited JSON run journal.

One record per event.  Semantic fields (scores, codes, ids, probabilities,
decisions) are deterministic under a fixed seed and scripted backend; wall
timing fields are volatile.  Canonicalization strips the volatile fields and
resume markers so two equivalent runs compare byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import time
import warnings
from pathlib import Path
from typing import Any, Iterable

from tuso.errors import CorruptJournal

VOLATILE_KEYS = frozenset(
    {"at", "duration", "latency", "elapsed", "created_at", "started_at"}
)
VOLATILE_EVENTS = frozenset({"resumed"})


class JournalWriter:
    """Appends one timestamped JSON record per line, flushing each write."""

    def __init__(self, path: Path | str, append: bool = False) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        mode = "a" if append else "w"
        self._fh = open(self.path, mode, encoding="utf-8")

    def write(self, record: dict[str, Any]) -> None:
        record = dict(record)
        record.setdefault("at", time.time())
        self._fh.write(json.dumps(record, sort_keys=True) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "JournalWriter":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()


def read_journal(path: Path | str) -> tuple[list[dict[str, Any]], bool]:
    """Load journal events; returns (events, truncated_tail).

    A truncated final line is dropped (and flagged with a warning); a
    malformed line anywhere else raises CorruptJournal with its index.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    records = [(i, line) for i, line in enumerate(lines) if line.strip()]
    events: list[dict[str, Any]] = []
    truncated = False
    for pos, (index, line) in enumerate(records):
        try:
            events.append(json.loads(line))
        except json.JSONDecodeError:
            if pos == len(records) - 1:
                truncated = True
                warnings.warn(
                    f"dropped truncated final record {index} in {path}",
                    RuntimeWarning,
                    stacklevel=2,
                )
                break
            raise CorruptJournal(f"malformed journal record in {path}", index) from None
    return events, truncated


def _strip_volatile(value: Any) -> Any:
    if isinstance(value, dict):
        return {
            k: _strip_volatile(v) for k, v in value.items() if k not in VOLATILE_KEYS
        }
    if isinstance(value, list):
        return [_strip_volatile(v) for v in value]
    return value


def canonical_lines(events: Iterable[dict[str, Any]]) -> list[str]:
    """Volatile-free, key-sorted JSON lines for determinism comparisons."""
    out = []
    for event in events:
        if event.get("ev") in VOLATILE_EVENTS:
            continue
        out.append(json.dumps(_strip_volatile(event), sort_keys=True))
    return out


def canonical_text(path: Path | str) -> str:
    events, _ = read_journal(path)
    return "\n".join(canonical_lines(events)) + "\n"


def journal_fingerprint(path: Path | str) -> str:
    return hashlib.sha256(canonical_text(path).encode("utf-8")).hexdigest()


def last_round_boundary(path: Path | str) -> int:
    """Byte offset just past the last complete-round (or setup) boundary.

    Everything after the offset belongs to an unfinished round and is
    discarded on resume.  Boundaries are the ends of run_start-to-init
    setup (init_done) and each round_end line.
    """
    offset = 0
    good = 0
    with open(path, "rb") as fh:
        for raw in fh:
            offset += len(raw)
            line = raw.decode("utf-8", errors="replace").strip()
            if not line:
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError:
                continue
            if event.get("ev") in ("round_end", "init_done", "run_end"):
                good = offset
    return good
