"""End-to-end acceptance checks, one per core behavioral guarantee.

Each test prints a single PASS or FAIL line naming the guarantee it covers,
so a test run doubles as an acceptance report.  Tolerances are pinned in the
assertions themselves.
"""

from __future__ import annotations

import json
import os
import time
from contextlib import contextmanager

import numpy as np
import pytest

from helpers import (
    FAIL_SNIPPET,
    events_of,
    happy_routes,
    hang_snippet,
    make_engine,
    ok_snippet,
    read_events,
    scripted_config,
    write_bundle,
)
from oracles import brute_diversity
from tuso import cli
from tuso.config import AblationFlags
from tuso.engine import CRASH_AFTER_ROUND_ENV, SimulatedCrash, resume
from tuso.gateway import ScriptedBackend
from tuso.journal import canonical_text
from tuso.knowledge import Category, KnowledgeTree, reward, sample_category
from tuso.literature import FixtureSearch
from tuso.pool import Solution, SolutionPool
from tuso.sandbox import execute, load_bundle, parse_score, splice
from tuso import analytics


@contextmanager
def criterion(name: str):
    try:
        yield
    except Exception:
        print(f"FAIL [{name}]")
        raise
    print(f"PASS [{name}]")


def _acceptance_routes() -> dict:
    # First description fails its whole repair budget; the second scores 0.1.
    # Three optimization rounds then step through 0.4, 0.3, 0.7.
    return {
        "category_draft": "<c>optimization</c> 3\n<c>features</c> 1",
        "instruction_draft": "<p>by tuning hyperparameters</p>\n<p>by trying a different model class</p>",
        "init_draft": "<m>fragile idea</m>\n<m>mean baseline</m>",
        "implement": [FAIL_SNIPPET, ok_snippet(0.1)],
        "repair": FAIL_SNIPPET,
        "choose_instruction": "1",
        "optimize": [ok_snippet(0.4), ok_snippet(0.3), ok_snippet(0.7)],
        "feedback": "scripted improvement note",
    }


def _write_cli_setup(directory, bundle_manifest, journal_name):
    directory.mkdir(parents=True, exist_ok=True)
    script = directory / "script.json"
    script.write_text(json.dumps({"by_asset": _acceptance_routes()}), encoding="utf-8")
    journal = directory / journal_name
    config = directory / f"{journal_name}.toml"
    config.write_text(
        "\n".join(
            [
                "[run]",
                f"bundle = {json.dumps(str(bundle_manifest))}",
                f"journal = {json.dumps(str(journal))}",
                "budget_seconds = 600.0",
                "alpha = 1.0",
                "seed = 7",
                "max_rounds = 3",
                "[backend]",
                'kind = "scripted"',
                f"script_path = {json.dumps(str(script))}",
            ]
        )
        + "\n",
        encoding="utf-8",
    )
    return config, journal


def test_scripted_end_to_end(bundle_dir, tmp_path, capsys):
    with criterion("scripted end-to-end: best 0.7, replayable, under 2 minutes"):
        texts = []
        for name in ("first", "second"):
            config, journal = _write_cli_setup(tmp_path / "cli", bundle_dir, f"{name}.ldjson")
            started = time.monotonic()
            assert cli.main(["run", "-c", str(config)]) == 0
            assert time.monotonic() - started < 120.0
            out = capsys.readouterr().out
            assert "best: s0005 score 0.7 rounds 3" in out
            texts.append(canonical_text(journal))
        assert texts[0] == texts[1]


def test_bayesian_sampler_statistics():
    with criterion("bayesian sampler: frequencies track pi, rewards compound"):
        def fresh_tree():
            return KnowledgeTree(
                categories=[
                    Category("c1", 0.5, ["by a"]),
                    Category("c2", 0.3, ["by b"]),
                    Category("c3", 0.2, ["by c"]),
                ],
                diagnostic=Category("diagnostic", 0.0, ["by logging"]),
            )

        tree = fresh_tree()
        rng = np.random.default_rng(42)
        counts = {"c1": 0, "c2": 0, "c3": 0}
        for _ in range(10_000):
            counts[sample_category(rng, tree).name] += 1
        for name, pi in (("c1", 0.5), ("c2", 0.3), ("c3", 0.2)):
            assert abs(counts[name] / 10_000 - pi) <= 0.02, (name, counts[name])

        tree = fresh_tree()
        for _ in range(10):
            reward(tree, "c3", 1.1)
            assert abs(sum(c.pi for c in tree.categories) - 1.0) <= 1e-9
        floor = 0.2 * 1.1**10 / (0.8 + 0.2 * 1.1**10) - 1e-9
        assert tree.categories[2].pi > floor


def test_diverse_top_selection_oracle():
    with criterion("diverse-top: per-cluster band keeps shortest near-best code"):
        pool = SolutionPool()
        family_a = "alphatoken " * 200
        family_b = "betatoken " * 20
        specs = [
            ("long_best", family_a[:900], 0.800),
            ("short_nearbest", family_a[:400], 0.7995),
            ("shortest_offband", family_a[:100], 0.790),
            ("other_family", family_b[:50], 0.5),
        ]
        for sol_id, code, score in specs:
            assert len(code) == {"long_best": 900, "short_nearbest": 400,
                                 "shortest_offband": 100, "other_family": 50}[sol_id]
            pool.insert(Solution(id=sol_id, code=code, status="ok", score=score))
        tops = pool.diverse_top(2, np.random.default_rng(0))
        assert [s.id for s in tops] == ["short_nearbest", "other_family"]
        assert [s.score for s in tops] == [0.7995, 0.5]


def test_sandbox_enforcement(tmp_path):
    with criterion("sandbox: timeout kills the process group, marker parsing is strict"):
        manifest = write_bundle(tmp_path / "task", time_limit=10.0)
        bundle = load_bundle(manifest)
        region = (
            "import subprocess, time\n"
            "subprocess.Popen(['sleep', '120'])\n"
            + hang_snippet(20.0)
        )
        program = splice(bundle.template_text(), bundle, region)
        report = execute(program, bundle)
        assert report.timed_out and report.status == "timeout"
        assert report.score is None
        assert report.duration <= 10.0 + 5.0
        deadline = time.monotonic() + 5.0
        while True:
            try:
                os.killpg(report.pgid, 0)
            except ProcessLookupError:
                break
            assert time.monotonic() < deadline, "child processes survived the timeout"
            time.sleep(0.05)

        assert parse_score("tuso_evaluate: 0.35") == 0.35
        assert parse_score("tuso_evaluate: nan") is None
        scored = splice(bundle.template_text(), bundle, ok_snippet(0.35))
        assert execute(scored, bundle).score == 0.35
        nan_region = 'print("tuso_evaluate: nan")\nraise SystemExit(0)'
        nan_report = execute(splice(bundle.template_text(), bundle, nan_region), bundle)
        assert nan_report.score is None and nan_report.status == "failed"


def test_diversity_metric():
    with criterion("diversity: 0 on identical code, 1 on disjoint code, matches oracle"):
        identical = [["def", "f", "x", "return", "x"] for _ in range(25)]
        for value in analytics.trajectory_diversity(analytics.tfidf_embed(identical), window=10):
            assert abs(value - 0.0) <= 1e-12

        disjoint = [[f"tok{i}a", f"tok{i}b"] for i in range(25)]
        for value in analytics.trajectory_diversity(analytics.tfidf_embed(disjoint), window=10):
            assert abs(value - 1.0) <= 1e-12

        rng = np.random.default_rng(2024)
        vocab = [f"w{j}" for j in range(12)]
        snippets = [
            [vocab[int(k)] for k in rng.integers(0, len(vocab), size=int(rng.integers(3, 30)))]
            for _ in range(20)
        ]
        got = analytics.trajectory_diversity(analytics.tfidf_embed(snippets), window=10)
        expected = brute_diversity(snippets, window=10)
        assert len(got) == 20
        for g, e in zip(got, expected):
            assert abs(g - e) <= 1e-9


def test_resume_equivalence(bundle, tmp_path, monkeypatch):
    with criterion("resume: a run killed after round 2 replays to an equal journal"):
        scores = (0.4, 0.3, 0.7, 0.05, 0.8, 0.9)
        config = scripted_config(max_rounds=4)
        full_journal = tmp_path / "full.ldjson"
        make_engine(bundle, full_journal, happy_routes(scores), config=config).run()

        crash_journal = tmp_path / "crash.ldjson"
        engine = make_engine(bundle, crash_journal, happy_routes(scores), config=config)
        monkeypatch.setenv(CRASH_AFTER_ROUND_ENV, "2")
        with pytest.raises(SimulatedCrash):
            engine.run()
        monkeypatch.delenv(CRASH_AFTER_ROUND_ENV)
        tail = read_events(crash_journal)[-1]
        assert tail["ev"] == "round_end" and tail["round"] == 2

        result = resume(
            crash_journal,
            backend=ScriptedBackend(by_asset=happy_routes(scores)),
            bundle=bundle,
        )
        assert result is not None and result.rounds == 4
        assert canonical_text(crash_journal) == canonical_text(full_journal)


def test_ablation_structure(bundle, tmp_path):
    with criterion("ablations: each switch removes exactly its mechanism"):
        def run_with(flags: AblationFlags, journal_name: str, routes: dict, **kwargs):
            journal = tmp_path / journal_name
            engine = make_engine(
                bundle, journal, routes,
                config=scripted_config(ablation=flags, **kwargs.pop("config_overrides", {})),
                **kwargs,
            )
            engine.run()
            return read_events(journal)

        def tree_snapshots(events):
            return [events_of(events, "tree")[0]["tree"]] + [
                e["tree"]
                for e in events_of(events, "init_done") + events_of(events, "round_end")
            ]

        # no_categories: every journaled tree snapshot holds exactly one category.
        events = run_with(AblationFlags(no_categories=True), "nocat.ldjson", happy_routes())
        for snap in tree_snapshots(events):
            assert len(snap["categories"]) == 1

        # no_diagnosis: zero diagnostic actions even when the action coin
        # would otherwise always choose diagnosis (alpha = 0).
        events = run_with(
            AblationFlags(no_diagnosis=True), "nodiag.ldjson", happy_routes(),
            config_overrides={"alpha": 0.0},
        )
        actions = events_of(events, "action")
        assert actions and all(a["kind"] == "instruction" for a in actions)
        assert events_of(events, "diagnostic_run") == []

        # no_bayesian: pi constant across the whole journal.
        events = run_with(AblationFlags(no_bayesian=True), "nobayes.ldjson", happy_routes())
        assert events_of(events, "reward") == []
        pi_vectors = {
            tuple(round(c["pi"], 12) for c in snap["categories"])
            for snap in tree_snapshots(events)
        }
        assert len(pi_vectors) == 1

        # no_knowledge: zero literature events despite an available search
        # source, and every optimization prompt uses the generic asset.
        papers = tmp_path / "papers.json"
        papers.write_text(json.dumps({"data": [
            {"title": "P1", "abstract": "A. B.", "citationCount": 3},
            {"title": "P2", "abstract": "C. D.", "citationCount": 1},
        ]}))
        routes = {
            "init_draft": "<m>mean baseline</m>\n<m>linear fit</m>",
            "implement": [ok_snippet(0.1), FAIL_SNIPPET],
            "repair": [ok_snippet(0.2)],
            "generic_optimize": [ok_snippet(s) for s in (0.4, 0.3, 0.7, 0.05)],
            "choose_instruction": "1",
            "feedback": "generic note",
        }
        events = run_with(
            AblationFlags(no_knowledge=True), "noknow.ldjson", routes,
            literature_source=FixtureSearch(papers),
        )
        assert events_of(events, "literature") == []
        optimization_assets = {
            e["asset"] for e in events_of(events, "llm")
            if e["asset"] in ("optimize", "generic_optimize")
        }
        assert optimization_assets == {"generic_optimize"}


def test_repair_budget_contract(bundle, tmp_path):
    with criterion("repair budgets: at most 4 init repairs and 2 optimization repairs"):
        # Initialization side: description one burns its full budget.
        routes = _acceptance_routes()
        journal = tmp_path / "init_budget.ldjson"
        config = scripted_config(max_rounds=3)
        make_engine(bundle, journal, routes, config=config).run()
        events = read_events(journal)
        per_goal: dict[str, int] = {}
        for event in events_of(events, "execution"):
            per_goal[event["goal"]] = per_goal.get(event["goal"], 0) + 1
        assert per_goal["init1"] == 1 + 4  # one generation, four repairs, never more
        assert per_goal["init2"] == 1
        for goal, count in per_goal.items():
            limit = 1 + 4 if goal.startswith("init") else 1 + 2
            assert count <= limit, (goal, count)

        # Optimization side: a failing optimization step stops after 1 + 2 runs.
        routes = {
            "category_draft": "<c>optimization</c> 1",
            "instruction_draft": "<p>by tuning</p>",
            "init_draft": "<m>mean baseline</m>",
            "implement": [ok_snippet(0.1)],
            "repair": FAIL_SNIPPET,
            "optimize": FAIL_SNIPPET,
        }
        journal = tmp_path / "optim_budget.ldjson"
        make_engine(bundle, journal, routes, config=scripted_config(max_rounds=1)).run()
        events = read_events(journal)
        optim_execs = [e for e in events_of(events, "execution") if e["phase"] == "optim"]
        assert len(optim_execs) == 1 + 2
        assert [e["attempt"] for e in optim_execs] == [1, 2, 3]
        assert all(e["status"] == "failed" for e in optim_execs)
