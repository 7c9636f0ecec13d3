"""Optimization engine: the top-level control loop.

One run: gather literature knowledge, build the knowledge tree, initialize a
pool of candidate solutions, then repeatedly select diverse top solutions and
improve each via instruction-based or diagnostic-based optimization until the
wall-clock budget (or an optional round bound) is exhausted.  Every event is
journaled; a journal replays to identical state under the same seed and a
scripted backend, and an interrupted run resumes from the last complete round
boundary.

Budget semantics: the wall clock starts at run start and covers LLM latency
and sandbox time alike.  A user-supplied warm-start solution is evaluated
during setup regardless of the budget (it anchors the run); LLM-driven
initializations and every optimization-round execution are budget-gated.
"""

from __future__ import annotations

import dataclasses
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from tuso import knowledge, literature, sandbox
from tuso.config import BackendSettings, RngStreams, RunConfig
from tuso.errors import AllInitializationsFailed, BundleInvalid, EmptyExtraction, TusoError
from tuso.gateway import (
    AssetStore,
    Completion,
    Gateway,
    HttpBackend,
    ScriptedBackend,
    extract_tagged,
    parse_index_choice,
)
from tuso.journal import JournalWriter, last_round_boundary, read_journal
from tuso.knowledge import Category, FeedbackEntry, KnowledgeTree
from tuso.literature import FixtureSearch, HttpSearch, NullSearch, PaperSummary, SearchSource
from tuso.pool import Solution, SolutionPool
from tuso.sandbox import ImplementOutcome, TaskBundle

DEFAULT_NUM_INIT = 5
CRASH_AFTER_ROUND_ENV = "TUSO_CRASH_AFTER_ROUND"


class ActionKind(str, Enum):
    INSTRUCTION = "instruction"
    DIAGNOSTIC = "diagnostic"


class SimulatedCrash(TusoError):
    """Raised by the test-only crash hook; leaves the journal unfinished."""


def select_action(rng: np.random.Generator, alpha: float) -> ActionKind:
    """Bernoulli(alpha) choice between instruction- and diagnostic-based steps."""
    return ActionKind.INSTRUCTION if rng.random() < alpha else ActionKind.DIAGNOSTIC


@dataclass(frozen=True)
class RunState:
    round_index: int
    n_top: int
    pool: SolutionPool
    tree: KnowledgeTree | None
    elapsed: float
    started_at: float


@dataclass(frozen=True)
class RunResult:
    best: Solution | None
    best_score: float | None
    rounds: int
    journal_path: Path


@dataclass
class _AttemptPlan:
    """Pre-drawn decisions for one optimization attempt (parallel mode)."""

    parent: Solution
    kind: ActionKind
    category: Category
    candidates: list[str]


@dataclass
class _AttemptResult:
    parent: Solution
    kind: ActionKind
    category: Category
    instruction: str
    outcome: ImplementOutcome
    buffered_events: list[dict[str, Any]] = field(default_factory=list)
    feedback_summary: str | None = None
    diagnostic_note: dict[str, Any] | None = None


def build_backend(settings: BackendSettings) -> object:
    if settings.kind == "scripted":
        return ScriptedBackend.from_file(settings.script_path)
    return HttpBackend(
        base_url=settings.base_url,
        model=settings.model,
        api_key=os.environ.get("TUSO_API_KEY", ""),
        timeout=settings.request_timeout,
    )


def build_literature_source(settings: BackendSettings) -> SearchSource:
    if settings.literature == "none":
        return NullSearch()
    if settings.literature == "http":
        return HttpSearch()
    return FixtureSearch(Path(settings.literature))


class Engine:
    """Drives one optimization run against a task bundle."""

    def __init__(
        self,
        config: RunConfig,
        bundle: TaskBundle,
        backend: object,
        assets: AssetStore,
        journal_path: Path | str,
        *,
        literature_source: SearchSource | None = None,
        methods_excerpts: Mapping[str, str] | None = None,
        warm_start_code: str | None = None,
        bundle_manifest: Path | str | None = None,
        settings: BackendSettings | None = None,
        append_journal: bool = False,
        sleeper: Callable[[float], None] = time.sleep,
    ) -> None:
        config.validate()
        self.config = config
        self.bundle = bundle
        self.rng = RngStreams(config.seed)
        self.writer = JournalWriter(journal_path, append=append_journal)
        self.journal_path = Path(journal_path)
        self.source = literature_source if literature_source is not None else NullSearch()
        self.methods_excerpts = dict(methods_excerpts or {})
        self.warm_start_code = warm_start_code
        self.bundle_manifest = str(bundle_manifest) if bundle_manifest else None
        self.settings = settings
        retry = settings.retry_attempts if settings else 3
        cap = settings.response_char_cap if settings else 65536
        self.gw = Gateway(
            backend=backend,
            assets=assets,
            jitter_rng=self.rng.jitter,
            retry_attempts=retry,
            response_char_cap=cap,
            sleeper=sleeper,
            on_complete=self._on_llm,
        )
        self.pool = SolutionPool()
        self.tree: KnowledgeTree | None = None
        self.summaries: list[PaperSummary] = []
        self.round_index = 0
        self.n_top = 0
        self._seq = 0
        self._start_mono = 0.0
        self._prior_elapsed = 0.0
        self._started_at = 0.0

    # -- bookkeeping ------------------------------------------------------

    def state(self) -> RunState:
        return RunState(
            round_index=self.round_index,
            n_top=self.n_top,
            pool=self.pool,
            tree=self.tree,
            elapsed=self._elapsed(),
            started_at=self._started_at,
        )

    def _elapsed(self) -> float:
        return self._prior_elapsed + (time.monotonic() - self._start_mono)

    def _budget_open(self) -> bool:
        return self._elapsed() < self.config.budget_seconds

    def _new_id(self) -> str:
        self._seq += 1
        return f"s{self._seq:04d}"

    def _on_llm(self, completion: Completion) -> None:
        self.writer.write(
            {
                "ev": "llm",
                "asset": completion.asset,
                "role": completion.role_hint,
                "attempt": completion.attempt,
                "chars": len(completion.text),
                "latency": completion.latency,
            }
        )

    def _journal_execution(
        self, phase: str, goal: str, attempt: int, report: sandbox.ExecutionReport
    ) -> None:
        self.writer.write(
            {
                "ev": "execution",
                "phase": phase,
                "goal": goal,
                "attempt": attempt,
                "status": report.status,
                "exit": report.exit_code,
                "timed_out": report.timed_out,
                "score": report.score,
                "duration": report.duration,
            }
        )

    def _journal_solution(self, solution: Solution) -> None:
        self.writer.write({"ev": "solution", "solution": solution.to_record()})

    def _boundary_payload(self) -> dict[str, Any]:
        assert self.tree is not None
        return {
            "n_top": self.n_top,
            "tree": self.tree.to_record(),
            "rng": self.rng.state(),
            "next_seq": self._seq,
            "elapsed": self._elapsed(),
        }

    def _make_solution(
        self,
        code: str,
        report: sandbox.ExecutionReport,
        *,
        parent: Solution | None = None,
        category: str | None = None,
        instruction: str | None = None,
    ) -> Solution:
        solution = Solution(
            id=self._new_id(),
            code=code,
            status=report.status,
            score=report.score,
            round_index=self.round_index,
            parent_id=parent.id if parent else None,
            category=category,
            instruction=instruction,
            created_at=time.time(),
        )
        self.pool.insert(solution)
        self._journal_solution(solution)
        return solution

    # -- setup ------------------------------------------------------------

    def _setup(self) -> None:
        cfg = self.config
        self.writer.write(
            {
                "ev": "run_start",
                "seed": cfg.seed,
                "config": cfg.to_record(),
                "backend": dataclasses.asdict(
                    dataclasses.replace(
                        self.settings,
                        script_path=str(self.settings.script_path) if self.settings.script_path else None,
                        prompt_dir=str(self.settings.prompt_dir) if self.settings.prompt_dir else None,
                    )
                )
                if self.settings
                else None,
                "bundle": self.bundle.to_record(),
                "bundle_manifest": self.bundle_manifest,
                "warm_start": self.warm_start_code is not None,
                "started_at": time.time(),
            }
        )
        if not cfg.ablation.no_knowledge:
            self.summaries = literature.gather_knowledge(
                self.gw,
                self.source,
                self.bundle.task_description,
                self.bundle.query(),
                self.methods_excerpts,
            )
            for summary in self.summaries:
                self.writer.write(
                    {"ev": "literature", "title": summary.title, "bullets": summary.bullets}
                )
        self.tree = knowledge.build_tree(
            self.gw,
            self.bundle.task_description,
            self.bundle.data_available,
            self.summaries,
            cfg,
        )
        self.writer.write({"ev": "tree", "round": 0, "tree": self.tree.to_record()})

        if self.warm_start_code is not None:
            self._evaluate_warm_start()

        self._initialize_solutions()

        ok = len(self.pool.ok_solutions())
        if ok == 0:
            self.writer.write({"ev": "error", "error": "AllInitializationsFailed"})
            raise AllInitializationsFailed(
                "no initialization produced a scoring solution; aborting cold start"
            )
        self.n_top = ok
        self.writer.write({"ev": "init_done", "round": 0, **self._boundary_payload()})

    def _evaluate_warm_start(self) -> None:
        """Evaluate the user-supplied starting solution before anything else.

        Setup-phase anchor: runs regardless of the remaining budget.
        """
        code = self.warm_start_code or ""
        program = sandbox.splice(self.bundle.template_text(), self.bundle, code)
        report = sandbox.execute(
            program, self.bundle, time_limit=self.config.attempt_limit_seconds
        )
        self._journal_execution("warm_start", "warm", 1, report)
        self._make_solution(code, report)

    def _draft_descriptions(self) -> list[str]:
        completion = self.gw.complete(
            "init_draft",
            {
                "task_description": self.bundle.task_description,
                "data_available": self.bundle.data_available,
                "warm_code": self.warm_start_code or "(none)",
                "num_candidates": DEFAULT_NUM_INIT,
            },
        )
        try:
            descriptions = extract_tagged(completion.text, "m")
        except EmptyExtraction:
            descriptions = ["a simple standard baseline model"]
        descriptions = [" ".join(d.split()) for d in descriptions if d.strip()]
        for summary in self.summaries:
            refine = self.gw.complete(
                "init_refine",
                {
                    "task_description": self.bundle.task_description,
                    "current_descriptions": "\n".join(f"<m>{d}</m>" for d in descriptions),
                    "summary_bullets": summary.bullet_block(),
                },
            )
            try:
                refined = extract_tagged(refine.text, "m")
            except EmptyExtraction:
                continue
            refined = [" ".join(d.split()) for d in refined if d.strip()]
            if refined:
                descriptions = refined
        return descriptions

    def _initialize_solutions(self) -> None:
        if not self._budget_open():
            return
        descriptions = self._draft_descriptions()
        self.writer.write({"ev": "init_plan", "descriptions": descriptions})
        for index, description in enumerate(descriptions, start=1):
            if not self._budget_open():
                break
            goal = f"init{index}"
            outcome = sandbox.implement_with_repair(
                self.gw,
                self.bundle,
                "implement",
                {
                    "task_description": self.bundle.task_description,
                    "data_available": self.bundle.data_available,
                    "template_code": self.bundle.template_text(),
                    "description": description,
                    "time_limit_seconds": self.bundle.time_limit_seconds,
                },
                attempts=self.config.init_repair_attempts + 1,
                per_attempt_limit=self.config.attempt_limit_seconds,
                budget_gate=self._budget_open,
                on_execution=lambda attempt, report, g=goal: self._journal_execution(
                    "init", g, attempt, report
                ),
            )
            if outcome.report is not None:
                self._make_solution(outcome.code, outcome.report)

    # -- optimization rounds ----------------------------------------------

    def _choose_kind(self) -> ActionKind:
        ablation = self.config.ablation
        if ablation.no_diagnosis or ablation.no_knowledge:
            return ActionKind.INSTRUCTION
        return select_action(self.rng.action, self.config.alpha)

    def _chooser(self, parent: Solution) -> Callable[[list[str]], int | None]:
        return self._chooser_for(self.gw, parent)

    def _optimize_bindings(self, parent: Solution, category: Category, instruction: str) -> dict[str, Any]:
        return {
            "task_description": self.bundle.task_description,
            "data_available": self.bundle.data_available,
            "parent_score": parent.score,
            "parent_code": parent.code,
            "instruction": instruction,
            "feedback_block": knowledge.feedback_block(category, self.config.feedback_window),
        }

    def _run_instruction_attempt(
        self,
        gw: Gateway,
        parent: Solution,
        category: Category,
        instruction: str,
        goal: str,
        on_execution: Callable[[int, sandbox.ExecutionReport], None],
    ) -> ImplementOutcome:
        asset = "generic_optimize" if self.config.ablation.no_knowledge else "optimize"
        bindings = self._optimize_bindings(parent, category, instruction)
        if asset == "generic_optimize":
            bindings = {"parent_score": parent.score, "parent_code": parent.code}
        return sandbox.implement_with_repair(
            gw,
            self.bundle,
            asset,
            bindings,
            attempts=self.config.optim_repair_attempts + 1,
            per_attempt_limit=self.config.attempt_limit_seconds,
            budget_gate=self._budget_open,
            on_execution=on_execution,
        )

    def _run_diagnostic_attempt(
        self,
        gw: Gateway,
        parent: Solution,
        instruction: str,
        goal: str,
        on_instrument: Callable[[sandbox.ExecutionReport | None], None],
        on_execution: Callable[[int, sandbox.ExecutionReport], None],
    ) -> sandbox.DiagnosticOutcome:
        assert self.tree is not None
        bindings = {
            "task_description": self.bundle.task_description,
            "parent_score": parent.score,
            "parent_code": parent.code,
            "feedback_block": knowledge.feedback_block(
                self.tree.diagnostic, self.config.feedback_window
            ),
        }
        return sandbox.run_diagnostic(
            gw,
            self.bundle,
            parent.code,
            instruction,
            bindings,
            attempts=self.config.optim_repair_attempts + 1,
            per_attempt_limit=self.config.attempt_limit_seconds,
            budget_gate=self._budget_open,
            on_instrument=on_instrument,
            on_execution=on_execution,
        )

    def _feedback_summary(
        self, gw: Gateway, instruction: str, parent: Solution, child_code: str, child_score: float
    ) -> str:
        completion = gw.complete(
            "feedback",
            {
                "instruction": instruction,
                "parent_code": parent.code,
                "child_code": child_code,
                "parent_score": parent.score,
                "child_score": child_score,
            },
        )
        text = completion.text.strip()
        return text.splitlines()[0] if text else "(no summary)"

    def _integrate_attempt(self, round_index: int, result: _AttemptResult) -> None:
        """Apply one attempt's outcome to pool, tree, and journal (single writer)."""
        assert self.tree is not None
        for event in result.buffered_events:
            self.writer.write(event)
        if result.diagnostic_note is not None:
            self.writer.write(result.diagnostic_note)
        outcome = result.outcome
        if outcome.report is None:
            return
        child = self._make_solution(
            outcome.code,
            outcome.report,
            parent=result.parent,
            category=result.category.name,
            instruction=result.instruction,
        )
        if child.status != "ok":
            return
        improved = child.score > result.parent.score  # type: ignore[operator]
        if improved and result.kind is ActionKind.INSTRUCTION:
            if not self.config.ablation.no_bayesian:
                knowledge.reward(self.tree, result.category.name, self.config.reward_factor)
                self.writer.write(
                    {
                        "ev": "reward",
                        "round": round_index,
                        "category": result.category.name,
                        "pi": {c.name: c.pi for c in self.tree.categories},
                    }
                )
        summary = result.feedback_summary
        if summary is None:
            summary = self._feedback_summary(
                self.gw, result.instruction, result.parent, child.code, child.score
            )
        entry = FeedbackEntry(
            instruction=result.instruction,
            summary=summary,
            parent_score=float(result.parent.score),  # type: ignore[arg-type]
            child_score=float(child.score),  # type: ignore[arg-type]
        )
        result.category.feedback.append(entry)
        self.writer.write(
            {
                "ev": "feedback",
                "round": round_index,
                "category": result.category.name,
                "instruction": result.instruction,
                "summary": summary,
                "parent_score": entry.parent_score,
                "child_score": entry.child_score,
                "improved": improved,
            }
        )

    def _sequential_attempt(self, round_index: int, parent: Solution) -> None:
        """Paper-faithful in-loop attempt: draws see all earlier updates."""
        assert self.tree is not None
        kind = self._choose_kind()
        if kind is ActionKind.INSTRUCTION:
            category = knowledge.sample_category(self.rng.category, self.tree)
        else:
            category = self.tree.diagnostic
        instruction = knowledge.pick_instruction(
            self.rng.instruction,
            category,
            k=self.config.instruction_draw,
            chooser=self._chooser(parent),
        )
        goal = f"r{round_index}:{parent.id}"
        self.writer.write(
            {
                "ev": "action",
                "round": round_index,
                "parent": parent.id,
                "kind": kind.value,
                "category": category.name,
                "instruction": instruction,
            }
        )
        result = _AttemptResult(
            parent=parent, kind=kind, category=category, instruction=instruction,
            outcome=ImplementOutcome(ok=False, code="", report=None),
        )
        if kind is ActionKind.INSTRUCTION:
            result.outcome = self._run_instruction_attempt(
                self.gw, parent, category, instruction, goal,
                lambda attempt, report: self._journal_execution("optim", goal, attempt, report),
            )
        else:
            def _note_instrument(report: sandbox.ExecutionReport | None) -> None:
                self.writer.write(
                    {
                        "ev": "diagnostic_run",
                        "round": round_index,
                        "parent": parent.id,
                        "status": report.status if report else "skipped",
                        "logs_captured": bool(report and (report.stderr_tail or report.stdout_tail)),
                        "duration": report.duration if report else 0.0,
                    }
                )

            diag = self._run_diagnostic_attempt(
                self.gw, parent, instruction, goal,
                _note_instrument,
                lambda attempt, report: self._journal_execution("diagnostic", goal, attempt, report),
            )
            result.outcome = diag.improve
        self._integrate_attempt(round_index, result)

    def _parallel_round(self, round_index: int, tops: Sequence[Solution]) -> None:
        """Concurrent attempts: decisions are pre-drawn in selection order,
        workers only call the backend and the sandbox, and results are
        integrated by the single writer in selection order."""
        assert self.tree is not None
        plans: list[tuple[_AttemptPlan, str]] = []
        for parent in tops:
            kind = self._choose_kind()
            category = (
                knowledge.sample_category(self.rng.category, self.tree)
                if kind is ActionKind.INSTRUCTION
                else self.tree.diagnostic
            )
            candidates = knowledge.draw_candidates(
                self.rng.instruction, category, self.config.instruction_draw
            )
            plans.append((_AttemptPlan(parent, kind, category, candidates), f"r{round_index}:{parent.id}"))

        def _work(plan: _AttemptPlan, goal: str) -> _AttemptResult:
            buffered: list[dict[str, Any]] = []
            local_gw = dataclasses.replace(
                self.gw,
                on_complete=lambda c: buffered.append(
                    {
                        "ev": "llm",
                        "asset": c.asset,
                        "role": c.role_hint,
                        "attempt": c.attempt,
                        "chars": len(c.text),
                        "latency": c.latency,
                    }
                ),
            )
            instruction = knowledge.choose_candidate(
                plan.candidates, self._chooser_for(local_gw, plan.parent)
            )
            buffered.append(
                {
                    "ev": "action",
                    "round": round_index,
                    "parent": plan.parent.id,
                    "kind": plan.kind.value,
                    "category": plan.category.name,
                    "instruction": instruction,
                }
            )
            result = _AttemptResult(
                parent=plan.parent, kind=plan.kind, category=plan.category,
                instruction=instruction,
                outcome=ImplementOutcome(ok=False, code="", report=None),
                buffered_events=buffered,
            )
            on_exec = lambda attempt, report: buffered.append(  # noqa: E731
                {
                    "ev": "execution",
                    "phase": "optim" if plan.kind is ActionKind.INSTRUCTION else "diagnostic",
                    "goal": goal,
                    "attempt": attempt,
                    "status": report.status,
                    "exit": report.exit_code,
                    "timed_out": report.timed_out,
                    "score": report.score,
                    "duration": report.duration,
                }
            )
            if plan.kind is ActionKind.INSTRUCTION:
                result.outcome = self._run_instruction_attempt(
                    local_gw, plan.parent, plan.category, instruction, goal, on_exec
                )
            else:
                diag = self._run_diagnostic_attempt(
                    local_gw, plan.parent, instruction, goal,
                    lambda report: buffered.append(
                        {
                            "ev": "diagnostic_run",
                            "round": round_index,
                            "parent": plan.parent.id,
                            "status": report.status if report else "skipped",
                            "logs_captured": bool(report and (report.stderr_tail or report.stdout_tail)),
                            "duration": report.duration if report else 0.0,
                        }
                    ),
                    on_exec,
                )
                result.outcome = diag.improve
            if result.outcome.report is not None and result.outcome.report.score is not None:
                result.feedback_summary = self._feedback_summary(
                    local_gw, instruction, plan.parent,
                    result.outcome.code, result.outcome.report.score,
                )
            return result

        with ThreadPoolExecutor(max_workers=self.config.max_parallel_evals) as pool:
            futures = [pool.submit(_work, plan, goal) for plan, goal in plans]
            for future in futures:
                self._integrate_attempt(round_index, future.result())

    def _chooser_for(self, gw: Gateway, parent: Solution) -> Callable[[list[str]], int | None]:
        def choose(candidates: list[str]) -> int | None:
            listing = "\n".join(f"{i + 1}. {c}" for i, c in enumerate(candidates))
            completion = gw.complete(
                "choose_instruction",
                {
                    "task_description": self.bundle.task_description,
                    "parent_score": parent.score,
                    "candidates": listing,
                    "k": len(candidates),
                },
            )
            index = parse_index_choice(completion.text, len(candidates))
            return None if index is None else index - 1

        return choose

    def _round(self) -> None:
        assert self.tree is not None
        round_index = self.round_index + 1
        tops = self.pool.diverse_top(
            self.n_top,
            self.rng.clustering,
            band=self.config.within_best_band,
            strip_prefixes=self.bundle.strip_prefixes,
        )
        self.writer.write(
            {
                "ev": "round_start",
                "round": round_index,
                "n_top": self.n_top,
                "selected": [s.id for s in tops],
            }
        )
        if self.config.max_parallel_evals > 1:
            self._parallel_round(round_index, tops)
        else:
            for parent in tops:
                if not self._budget_open():
                    break
                self._sequential_attempt(round_index, parent)
        self.round_index = round_index
        if round_index % self.config.decay_period_rounds == 0:
            self.n_top = max(1, self.n_top - 1)
            self.writer.write({"ev": "decay", "round": round_index, "n_top": self.n_top})
        best = self.pool.best()
        self.writer.write(
            {
                "ev": "round_end",
                "round": round_index,
                "best": best.id if best else None,
                **self._boundary_payload(),
            }
        )

    def _loop(self) -> None:
        crash_after = os.environ.get(CRASH_AFTER_ROUND_ENV)
        while True:
            if self.config.max_rounds is not None and self.round_index >= self.config.max_rounds:
                break
            if not self._budget_open():
                break
            if not self.pool.ok_solutions():
                break
            self._round()
            if crash_after and self.round_index >= int(crash_after):
                raise SimulatedCrash(f"simulated crash after round {self.round_index}")

    def _finish(self) -> RunResult:
        best = self.pool.best()
        self.writer.write(
            {
                "ev": "run_end",
                "best": best.id if best else None,
                "best_score": best.score if best else None,
                "rounds": self.round_index,
                "elapsed": self._elapsed(),
            }
        )
        return RunResult(
            best=best,
            best_score=best.score if best else None,
            rounds=self.round_index,
            journal_path=self.journal_path,
        )

    def run(self, *, resumed: bool = False) -> RunResult:
        self._start_mono = time.monotonic()
        self._started_at = time.time()
        try:
            if not resumed:
                self._setup()
            self._loop()
            return self._finish()
        finally:
            self.writer.close()

    # -- resume -----------------------------------------------------------

    def _restore(self, events: Sequence[Mapping[str, Any]]) -> None:
        boundary_event: Mapping[str, Any] | None = None
        for event in events:
            kind = event.get("ev")
            if kind == "solution":
                self.pool.insert(Solution.from_record(event["solution"]))
            elif kind in ("init_done", "round_end"):
                boundary_event = event
        if boundary_event is None:
            raise TusoError("journal holds no complete round boundary; cannot resume")
        self.tree = KnowledgeTree.from_record(boundary_event["tree"])
        self.n_top = int(boundary_event["n_top"])
        self.rng.restore(boundary_event["rng"])
        self._seq = int(boundary_event["next_seq"])
        self.round_index = int(boundary_event.get("round", 0))
        self._prior_elapsed = float(boundary_event.get("elapsed", 0.0))


def run(
    config: RunConfig,
    bundle: TaskBundle,
    backend: object,
    assets: AssetStore,
    journal_path: Path | str,
    **kwargs: Any,
) -> RunResult:
    """Convenience wrapper: build an Engine and run it."""
    return Engine(config, bundle, backend, assets, journal_path, **kwargs).run()


def resume(
    journal_path: Path | str,
    *,
    backend: object | None = None,
    assets: AssetStore | None = None,
    bundle: TaskBundle | None = None,
    settings: BackendSettings | None = None,
    max_rounds: int | None = None,
    sleeper: Callable[[float], None] = time.sleep,
) -> RunResult | None:
    """Continue an interrupted run from its last complete round boundary.

    Returns None when the journal already holds a run_end (completed run:
    resuming is a no-op).  Events after the last boundary belong to an
    unfinished round and are discarded with a warning.  With a scripted
    backend the journal's llm events are used to fast-forward the script to
    its pre-interruption position.
    """
    journal_path = Path(journal_path)
    events, _ = read_journal(journal_path)
    if any(e.get("ev") == "run_end" for e in events):
        return None

    boundary = last_round_boundary(journal_path)
    if boundary == 0:
        raise TusoError("journal ended before initialization completed; start a fresh run")
    if journal_path.stat().st_size > boundary:
        warnings.warn(
            "journal ends mid-round; discarding events after the last complete round",
            RuntimeWarning,
            stacklevel=2,
        )
        with open(journal_path, "r+b") as fh:
            fh.truncate(boundary)
        events, _ = read_journal(journal_path)

    if not events or events[0].get("ev") != "run_start":
        raise TusoError("journal does not begin with a run_start event")
    start = events[0]
    config = RunConfig.from_record(start["config"])
    if max_rounds is not None:
        config = dataclasses.replace(config, max_rounds=max_rounds)

    if settings is None and start.get("backend"):
        raw = dict(start["backend"])
        raw["script_path"] = Path(raw["script_path"]) if raw.get("script_path") else None
        raw["prompt_dir"] = Path(raw["prompt_dir"]) if raw.get("prompt_dir") else None
        settings = BackendSettings(**raw)

    if bundle is None:
        manifest = start.get("bundle_manifest")
        if not manifest:
            raise TusoError("journal does not record a bundle manifest; pass the bundle explicitly")
        bundle = sandbox.load_bundle(manifest)
    recorded_hash = start.get("bundle", {}).get("template_sha256")
    if recorded_hash and bundle.to_record()["template_sha256"] != recorded_hash:
        raise BundleInvalid("template changed since the journaled run; refusing to resume")

    if backend is None:
        if settings is None:
            raise TusoError("journal does not record backend settings; pass a backend explicitly")
        backend = build_backend(settings)
    if assets is None:
        assets = AssetStore(settings.prompt_dir if settings else None)

    engine = Engine(
        config,
        bundle,
        backend,
        assets,
        journal_path,
        settings=settings,
        bundle_manifest=start.get("bundle_manifest"),
        append_journal=True,
        sleeper=sleeper,
    )
    engine._restore(events)
    if isinstance(backend, ScriptedBackend):
        backend.fast_forward(
            [(e["asset"], e["role"]) for e in events if e.get("ev") == "llm"]
        )
    engine.writer.write({"ev": "resumed", "from_round": engine.round_index})
    return engine.run(resumed=True)
