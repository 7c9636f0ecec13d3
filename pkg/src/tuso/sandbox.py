"""Sandboxed candidate execution against a task bundle.

A bundle pins a program template with a sentinel-delimited editable region,
the command that runs a candidate, a dataset, and a per-execution time limit.
Candidates run in a fresh scratch directory in their own process group; on
timeout the whole group is killed.  The only scoring channel is stdout: the
last line matching ``tuso_evaluate: <finite decimal>`` wins.

The candidate process runs with cwd set to the scratch directory; the
bundle's dataset is exposed both as the TUSO_DATASET environment variable
(absolute path) and as a basename symlink inside the scratch directory.
"""

from __future__ import annotations

import os
import re
import shlex
import shutil
import signal
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

try:
    import tomllib  # type: ignore[import-not-found]
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib  # type: ignore[no-redef]

from tuso.errors import (
    BundleInvalid,
    EmptyRegion,
    SentinelDuplicated,
    SentinelMissing,
    SpawnFailure,
)
from tuso.gateway import Gateway, strip_code_fences

SCORE_PREFIX = "tuso_evaluate:"
KILL_GRACE_SECONDS = 5.0
CAPTURE_CAP_BYTES = 1 << 20  # 1 MiB per stream, tail kept
REPAIR_TAIL_CHARS = 4000

_NUMBER_RE = re.compile(r"^[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?$")


@dataclass(frozen=True)
class TaskBundle:
    """Validated description of one optimization task."""

    name: str
    template_path: Path
    run_command: tuple[str, ...]
    sentinel_begin: str = "# >>> tuso-region-begin"
    sentinel_end: str = "# <<< tuso-region-end"
    dataset_path: Path | None = None
    time_limit_seconds: float = 600.0
    task_description: str = ""
    data_available: str = ""
    search_query: str = ""
    cleanup_policy: str = "delete"
    strip_prefixes: tuple[str, ...] = ("#", "import ", "from ")

    def template_text(self) -> str:
        return self.template_path.read_text(encoding="utf-8")

    def query(self) -> str:
        return self.search_query or self.task_description

    def validate(self) -> None:
        """Raise BundleInvalid (or a subclass) on the first failed check."""
        if not self.run_command:
            raise BundleInvalid("run_command must be non-empty")
        if self.time_limit_seconds <= 0:
            raise BundleInvalid("time_limit_seconds must be > 0")
        if self.cleanup_policy not in ("keep", "delete"):
            raise BundleInvalid(f"cleanup_policy must be keep or delete, got '{self.cleanup_policy}'")
        if not self.template_path.is_file():
            raise BundleInvalid(f"template not found: {self.template_path}")
        if self.dataset_path is not None and not self.dataset_path.exists():
            raise BundleInvalid(f"dataset not found: {self.dataset_path}")
        _locate_sentinels(self.template_text().splitlines(), self)

    def to_record(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "template": str(self.template_path),
            "template_sha256": _sha256_file(self.template_path),
            "run_command": list(self.run_command),
            "sentinel_begin": self.sentinel_begin,
            "sentinel_end": self.sentinel_end,
            "dataset": str(self.dataset_path) if self.dataset_path else None,
            "time_limit_seconds": self.time_limit_seconds,
            "cleanup_policy": self.cleanup_policy,
            "strip_prefixes": list(self.strip_prefixes),
        }


def _sha256_file(path: Path) -> str:
    import hashlib

    return hashlib.sha256(path.read_bytes()).hexdigest()


def load_bundle(manifest_path: Path | str) -> TaskBundle:
    """Read a bundle manifest (TOML, table [bundle]) and resolve its paths."""
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "bundle.toml"
    if not manifest_path.is_file():
        raise BundleInvalid(f"bundle manifest not found: {manifest_path}")
    try:
        with open(manifest_path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise BundleInvalid(f"bundle manifest is not valid TOML: {exc}") from None
    table = doc.get("bundle")
    if not isinstance(table, dict):
        raise BundleInvalid("bundle manifest must contain a [bundle] table")

    base = manifest_path.resolve().parent
    known = {
        "name", "template", "run_command", "sentinel_begin", "sentinel_end",
        "dataset", "time_limit_seconds", "task_description", "data_available",
        "search_query", "cleanup_policy", "strip_prefixes",
    }
    unknown = set(table) - known
    if unknown:
        raise BundleInvalid(f"unknown key(s) in [bundle]: {', '.join(sorted(unknown))}")
    if "template" not in table:
        raise BundleInvalid("bundle manifest must declare a template")
    if "run_command" not in table:
        raise BundleInvalid("bundle manifest must declare a run_command")

    run_command = table["run_command"]
    if isinstance(run_command, str):
        run_command = shlex.split(run_command)
    if not isinstance(run_command, list) or not all(isinstance(a, str) for a in run_command):
        raise BundleInvalid("run_command must be a string or list of strings")

    kwargs: dict[str, Any] = {
        "name": table.get("name", manifest_path.parent.name),
        "template_path": (base / table["template"]).resolve(),
        "run_command": tuple(run_command),
    }
    if "dataset" in table:
        kwargs["dataset_path"] = (base / table["dataset"]).resolve()
    for key in (
        "sentinel_begin", "sentinel_end", "time_limit_seconds", "task_description",
        "data_available", "search_query", "cleanup_policy",
    ):
        if key in table:
            kwargs[key] = table[key]
    if "strip_prefixes" in table:
        kwargs["strip_prefixes"] = tuple(table["strip_prefixes"])
    bundle = TaskBundle(**kwargs)
    bundle.validate()
    return bundle


@dataclass(frozen=True)
class ExecutionReport:
    """Outcome of one sandboxed run.

    score is present exactly when the process exited successfully and printed
    a parsable score marker; a timed-out run never has a score.
    """

    status: str  # ok | failed | timeout
    exit_code: int | None
    timed_out: bool
    duration: float
    stdout_tail: str
    stderr_tail: str
    score: float | None
    pgid: int | None = None
    scratch_dir: Path | None = None


def _locate_sentinels(lines: list[str], bundle: TaskBundle) -> tuple[int, int]:
    begins = [i for i, line in enumerate(lines) if line.rstrip("\r\n") == bundle.sentinel_begin]
    ends = [i for i, line in enumerate(lines) if line.rstrip("\r\n") == bundle.sentinel_end]
    if not begins:
        raise SentinelMissing(f"begin sentinel '{bundle.sentinel_begin}' not found in template")
    if not ends:
        raise SentinelMissing(f"end sentinel '{bundle.sentinel_end}' not found in template")
    if len(begins) > 1:
        raise SentinelDuplicated(f"begin sentinel occurs {len(begins)} times")
    if len(ends) > 1:
        raise SentinelDuplicated(f"end sentinel occurs {len(ends)} times")
    if begins[0] >= ends[0]:
        raise SentinelMissing("end sentinel precedes begin sentinel")
    return begins[0], ends[0]


def splice(template_text: str, bundle: TaskBundle, region_code: str) -> str:
    """Replace the editable region between the sentinel lines with region_code."""
    if not region_code.strip():
        raise EmptyRegion("refusing to splice an empty region")
    lines = template_text.splitlines()
    begin, end = _locate_sentinels(lines, bundle)
    region_lines = region_code.rstrip("\n").split("\n")
    out = lines[:begin + 1] + region_lines + lines[end:]
    return "\n".join(out) + ("\n" if template_text.endswith("\n") else "")


def extract_region(template_text: str, bundle: TaskBundle) -> str:
    """Return the current editable region (text strictly between sentinels)."""
    lines = template_text.splitlines()
    begin, end = _locate_sentinels(lines, bundle)
    return "\n".join(lines[begin + 1:end])


def parse_score(stdout: str) -> float | None:
    """Last finite score from ``tuso_evaluate:`` marker lines; None otherwise.

    A line qualifies only when the text after the marker is a plain decimal
    (scientific notation allowed, locale-independent); ``nan``/``inf`` lines
    never qualify.
    """
    score: float | None = None
    for line in stdout.splitlines():
        if not line.startswith(SCORE_PREFIX):
            continue
        rest = line[len(SCORE_PREFIX):].strip()
        if _NUMBER_RE.match(rest):
            score = float(rest)
    return score


def _tail(data: bytes, cap: int = CAPTURE_CAP_BYTES) -> str:
    return data[-cap:].decode("utf-8", errors="replace")


def execute(
    program_text: str,
    bundle: TaskBundle,
    *,
    time_limit: float | None = None,
    keep_scratch: bool | None = None,
) -> ExecutionReport:
    """Run a spliced program in a fresh scratch dir under the bundle's command.

    The process starts in its own session/process group; on timeout the whole
    group receives SIGKILL.  stdout/stderr are captured with a 1 MiB tail cap
    per stream.  The effective wall limit is the smaller of the bundle's
    limit and ``time_limit`` when given.
    """
    limit = bundle.time_limit_seconds
    if time_limit is not None:
        limit = min(limit, time_limit)
    keep = bundle.cleanup_policy == "keep" if keep_scratch is None else keep_scratch

    executable = shutil.which(bundle.run_command[0])
    if executable is None:
        raise SpawnFailure(f"run command not found: {bundle.run_command[0]}")

    scratch = Path(tempfile.mkdtemp(prefix="tuso-exec-"))
    suffix = bundle.template_path.suffix or ".txt"
    program_path = scratch / f"candidate{suffix}"
    program_path.write_text(program_text, encoding="utf-8")

    env = dict(os.environ)
    if bundle.dataset_path is not None:
        env["TUSO_DATASET"] = str(bundle.dataset_path)
        link = scratch / bundle.dataset_path.name
        if not link.exists():
            os.symlink(bundle.dataset_path, link)

    argv = [executable, *bundle.run_command[1:], str(program_path)]
    started = time.monotonic()
    try:
        proc = subprocess.Popen(
            argv,
            cwd=scratch,
            env=env,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            start_new_session=True,
        )
    except OSError as exc:
        if not keep:
            shutil.rmtree(scratch, ignore_errors=True)
        raise SpawnFailure(f"could not start {argv[0]}: {exc}") from exc

    pgid = os.getpgid(proc.pid)
    timed_out = False
    try:
        out, err = proc.communicate(timeout=limit)
    except subprocess.TimeoutExpired:
        timed_out = True
        try:
            os.killpg(pgid, signal.SIGKILL)
        except ProcessLookupError:
            pass
        out, err = proc.communicate()
    duration = time.monotonic() - started

    # Reap any stragglers in the group so nothing outlives the report.
    try:
        os.killpg(pgid, signal.SIGKILL)
    except ProcessLookupError:
        pass

    exit_code = proc.returncode
    stdout_tail = _tail(out or b"")
    stderr_tail = _tail(err or b"")
    score = None
    if not timed_out and exit_code == 0:
        score = parse_score(stdout_tail)
    status = "timeout" if timed_out else ("ok" if score is not None else "failed")

    if not keep:
        shutil.rmtree(scratch, ignore_errors=True)
        scratch_dir = None
    else:
        scratch_dir = scratch

    return ExecutionReport(
        status=status,
        exit_code=None if timed_out else exit_code,
        timed_out=timed_out,
        duration=duration,
        stdout_tail=stdout_tail,
        stderr_tail=stderr_tail,
        score=score,
        pgid=pgid,
        scratch_dir=scratch_dir,
    )


@dataclass
class ImplementOutcome:
    """Result of an implement-with-repair loop.

    code/report describe the last attempt; attempts holds every execution
    report in order.  ok means some attempt produced a score.
    """

    ok: bool
    code: str
    report: ExecutionReport | None
    attempts: list[ExecutionReport] = field(default_factory=list)
    attempt_index: int = 0
    stopped_by_budget: bool = False


def implement_with_repair(
    gw: Gateway,
    bundle: TaskBundle,
    asset_name: str,
    bindings: Mapping[str, str],
    *,
    attempts: int,
    per_attempt_limit: float | None = None,
    repair_asset: str = "repair",
    budget_gate: Callable[[], bool] | None = None,
    on_execution: Callable[[int, ExecutionReport], None] | None = None,
) -> ImplementOutcome:
    """Generate region code, execute it, and repair failures.

    ``attempts`` is the total execution budget: the first generation counts
    as attempt 1 and each repair as one more.  Failed attempts feed the last
    4,000 characters of stderr/stdout into the repair prompt.  When
    ``budget_gate`` returns False no further execution starts.
    """
    outcome = ImplementOutcome(ok=False, code="", report=None)
    base_bindings = dict(bindings)
    current_asset = asset_name
    for attempt in range(1, attempts + 1):
        if budget_gate is not None and not budget_gate():
            outcome.stopped_by_budget = True
            break
        completion = gw.complete(current_asset, base_bindings)
        code = strip_code_fences(completion.text).strip("\n")
        if not code.strip():
            code = "# empty completion"
        program = splice(bundle.template_text(), bundle, code)
        report = execute(program, bundle, time_limit=per_attempt_limit)
        outcome.attempts.append(report)
        outcome.attempt_index = attempt
        outcome.code = code
        outcome.report = report
        if on_execution is not None:
            on_execution(attempt, report)
        if report.score is not None:
            outcome.ok = True
            break
        current_asset = repair_asset
        base_bindings = dict(bindings)
        base_bindings.update(
            {
                "region_code": code,
                "stderr_tail": report.stderr_tail[-REPAIR_TAIL_CHARS:],
                "stdout_tail": report.stdout_tail[-REPAIR_TAIL_CHARS:],
            }
        )
        base_bindings.setdefault("task_description", bundle.task_description)
    return outcome


@dataclass
class DiagnosticOutcome:
    instrumented_ok: bool
    logs: str
    improve: ImplementOutcome
    instrument_report: ExecutionReport | None = None


def run_diagnostic(
    gw: Gateway,
    bundle: TaskBundle,
    parent_code: str,
    instruction: str,
    improve_bindings: Mapping[str, str],
    *,
    attempts: int,
    per_attempt_limit: float | None = None,
    budget_gate: Callable[[], bool] | None = None,
    on_instrument: Callable[[ExecutionReport | None], None] | None = None,
    on_execution: Callable[[int, ExecutionReport], None] | None = None,
) -> DiagnosticOutcome:
    """Two-phase diagnostic step.

    Phase 1 instruments the parent per the diagnostic instruction and runs it
    once; its score is ignored and it is never pooled.  Phase 2 improves the
    parent using the captured logs under the usual repair budget.  If
    instrumentation fails, phase 2 proceeds with empty logs.
    """
    logs = ""
    instrumented_ok = False
    instrument_report: ExecutionReport | None = None
    gate_open = budget_gate is None or budget_gate()
    if gate_open:
        try:
            completion = gw.complete(
                "diagnose_instrument",
                {
                    "task_description": bundle.task_description,
                    "parent_code": parent_code,
                    "instruction": instruction,
                },
            )
            instrumented = strip_code_fences(completion.text).strip("\n")
            program = splice(bundle.template_text(), bundle, instrumented)
            instrument_report = execute(program, bundle, time_limit=per_attempt_limit)
            logs = (
                instrument_report.stderr_tail[-REPAIR_TAIL_CHARS:]
                + "\n"
                + instrument_report.stdout_tail[-REPAIR_TAIL_CHARS:]
            ).strip()
            instrumented_ok = instrument_report.status != "timeout" and bool(logs)
        except (EmptyRegion, SpawnFailure):
            logs = ""
    if on_instrument is not None:
        on_instrument(instrument_report)

    bindings = dict(improve_bindings)
    bindings["logs"] = logs if logs else "(instrumentation produced no output)"
    improve = implement_with_repair(
        gw,
        bundle,
        "diagnose_improve",
        bindings,
        attempts=attempts,
        per_attempt_limit=per_attempt_limit,
        budget_gate=budget_gate,
        on_execution=on_execution,
    )
    return DiagnosticOutcome(
        instrumented_ok=instrumented_ok,
        logs=logs,
        improve=improve,
        instrument_report=instrument_report,
    )
