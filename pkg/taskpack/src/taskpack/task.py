"""Fixture task contract and the template conventions every fixture follows.

A fixture is a directory holding a template program, its data file, an
oracle region, and a bundle manifest.  Templates mark their single editable
region with exact whole-line sentinels and report their score by printing a
marker line; both conventions live here so generators and tests share one
definition.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

SENTINEL_BEGIN = "# >>> tuso-region-begin"
SENTINEL_END = "# <<< tuso-region-end"
SCORE_MARKER = "tuso_evaluate:"


@dataclass(frozen=True)
class FixtureTask:
    """One generated task directory and its pinned score anchors.

    Running the unmodified template prints expected_baseline_score exactly;
    splicing the oracle region scores at least oracle_score_floor.
    """

    name: str
    generator_seed: int
    template_path: Path
    expected_baseline_score: float
    oracle_solution_path: Path
    oracle_score_floor: float


def splice_region(template_text: str, region_code: str) -> str:
    """Replace the sentinel-delimited region of a fixture template."""
    lines = template_text.splitlines()
    begins = [i for i, line in enumerate(lines) if line == SENTINEL_BEGIN]
    ends = [i for i, line in enumerate(lines) if line == SENTINEL_END]
    if len(begins) != 1 or len(ends) != 1:
        raise ValueError("template must contain exactly one sentinel pair")
    if ends[0] <= begins[0]:
        raise ValueError("region end sentinel precedes its begin sentinel")
    spliced = lines[: begins[0] + 1] + region_code.splitlines() + lines[ends[0] :]
    text = "\n".join(spliced)
    if template_text.endswith("\n"):
        text += "\n"
    return text


def write_manifest(
    directory: Path,
    *,
    name: str,
    template: str,
    dataset: str,
    time_limit_seconds: float,
    task_description: str,
    data_available: str,
) -> Path:
    lines = [
        "[bundle]",
        f"name = {json.dumps(name)}",
        f"template = {json.dumps(template)}",
        'run_command = "python3"',
        f"dataset = {json.dumps(dataset)}",
        f"time_limit_seconds = {time_limit_seconds}",
        f"task_description = {json.dumps(task_description)}",
        f"data_available = {json.dumps(data_available)}",
    ]
    manifest = directory / "bundle.toml"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest
