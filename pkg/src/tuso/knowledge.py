"""Knowledge tree: methodological categories, instructions, and feedback.

The tree holds one node per category with a utility probability pi, a list of
"by ..." instructions, and an append-only feedback ledger.  A predefined
diagnostic category sits outside the probability mass and guides logging
runs.  Categories and instructions are drafted by the LLM and refined against
paper summaries; utilities are updated multiplicatively when a child solution
beats its parent.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from tuso.config import RunConfig
from tuso.errors import EmptyExtraction
from tuso.gateway import AssetStore, Gateway, extract_pair_tagged, extract_tagged
from tuso.literature import PaperSummary

DIAGNOSTIC_CATEGORY = "diagnostic"
DEFAULT_NUM_CATEGORIES = 8
INSTRUCTION_DRAFT_COUNT = 10
INSTRUCTIONS_PER_SUMMARY = 10
PI_TOLERANCE = 1e-9

_WEIGHTED_CAT_RE = re.compile(r"<c>(.*?)</c>[ \t]*([0-9]+(?:\.[0-9]+)?)?", re.DOTALL)


@dataclass
class FeedbackEntry:
    instruction: str
    summary: str
    parent_score: float
    child_score: float

    def to_record(self) -> dict[str, Any]:
        return {
            "instruction": self.instruction,
            "summary": self.summary,
            "parent_score": self.parent_score,
            "child_score": self.child_score,
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "FeedbackEntry":
        return cls(
            instruction=rec["instruction"],
            summary=rec["summary"],
            parent_score=rec["parent_score"],
            child_score=rec["child_score"],
        )


@dataclass
class Category:
    name: str
    pi: float = 0.0
    instructions: list[str] = field(default_factory=list)
    feedback: list[FeedbackEntry] = field(default_factory=list)

    def to_record(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "pi": self.pi,
            "instructions": list(self.instructions),
            "feedback": [f.to_record() for f in self.feedback],
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "Category":
        return cls(
            name=rec["name"],
            pi=rec["pi"],
            instructions=list(rec["instructions"]),
            feedback=[FeedbackEntry.from_record(f) for f in rec["feedback"]],
        )


@dataclass
class KnowledgeTree:
    """Sampling categories plus the out-of-distribution diagnostic category."""

    categories: list[Category]
    diagnostic: Category

    def category(self, name: str) -> Category:
        if name == self.diagnostic.name:
            return self.diagnostic
        for cat in self.categories:
            if cat.name == name:
                return cat
        raise KeyError(f"no category named '{name}'")

    def pis(self) -> np.ndarray:
        return np.array([c.pi for c in self.categories], dtype=float)

    def check_normalized(self) -> None:
        total = float(self.pis().sum())
        if abs(total - 1.0) > PI_TOLERANCE:
            raise AssertionError(f"category probabilities sum to {total}, not 1")

    def to_record(self) -> dict[str, Any]:
        return {
            "categories": [c.to_record() for c in self.categories],
            "diagnostic": self.diagnostic.to_record(),
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "KnowledgeTree":
        return cls(
            categories=[Category.from_record(c) for c in rec["categories"]],
            diagnostic=Category.from_record(rec["diagnostic"]),
        )


def normalize_instruction(text: str) -> str:
    """Instructions always read "by ...": strip wrapping and fix the prefix."""
    cleaned = " ".join(text.split())
    if not cleaned:
        return cleaned
    if cleaned.lower().startswith("by ") and len(cleaned) > 3:
        return "by " + cleaned[3:]
    return "by " + cleaned


def _normalize_category_name(name: str) -> str:
    slug = re.sub(r"\W+", "_", name.strip().lower()).strip("_")
    return slug


def _renormalize(categories: Sequence[Category]) -> None:
    total = sum(c.pi for c in categories)
    if total <= 0:
        uniform = 1.0 / len(categories)
        for cat in categories:
            cat.pi = uniform
        return
    for cat in categories:
        cat.pi = cat.pi / total


def _parse_weighted_categories(text: str) -> list[tuple[str, float | None]]:
    out = []
    for match in _WEIGHTED_CAT_RE.finditer(text):
        name = _normalize_category_name(match.group(1))
        if not name:
            continue
        weight = float(match.group(2)) if match.group(2) else None
        out.append((name, weight))
    return out


def build_categories(
    gw: Gateway,
    task_description: str,
    data_available: str,
    summaries: Sequence[PaperSummary],
    *,
    no_categories: bool = False,
    num_categories: int = DEFAULT_NUM_CATEGORIES,
) -> list[Category]:
    """Draft categories with pipeline-position weights, then refine per summary.

    A draft that yields no parsable categories falls back to the packaged
    generic category set with uniform weights.  Under the single-category
    ablation the list collapses to one category holding all probability mass.
    """
    if no_categories:
        return [Category(name="all", pi=1.0)]

    completion = gw.complete(
        "category_draft",
        {
            "task_description": task_description,
            "data_available": data_available,
            "num_categories": num_categories,
            "few_shot": gw.assets.data_text("fewshot_categories").strip(),
        },
    )
    parsed = _parse_weighted_categories(completion.text)
    seen: set[str] = set()
    categories: list[Category] = []
    weights: list[float | None] = []
    for name, weight in parsed:
        if name in seen:
            continue
        seen.add(name)
        categories.append(Category(name=name))
        weights.append(weight)

    if not categories:
        names = [_normalize_category_name(n) for n in gw.assets.data_lines("generic_categories")]
        categories = [Category(name=n) for n in names if n]
        weights = [None] * len(categories)

    if all(w is not None for w in weights) and sum(w for w in weights) > 0:  # type: ignore[misc]
        for cat, w in zip(categories, weights):
            cat.pi = float(w)  # type: ignore[arg-type]
    else:
        for cat in categories:
            cat.pi = 1.0
    _renormalize(categories)

    for summary in summaries:
        categories = _refine_categories(gw, task_description, categories, summary)
    return categories


def _refine_categories(
    gw: Gateway,
    task_description: str,
    categories: list[Category],
    summary: PaperSummary,
) -> list[Category]:
    """One refine pass: adds or merges categories, never deletes outright.

    The reply is taken as the new category set only when it contributes at
    least one new name (a merge); replies that merely drop names are ignored.
    New categories enter with the mean existing weight, then everything is
    renormalized.
    """
    completion = gw.complete(
        "category_refine",
        {
            "task_description": task_description,
            "current_categories": "\n".join(c.name for c in categories),
            "summary_bullets": summary.bullet_block(),
        },
    )
    try:
        raw = extract_tagged(completion.text, "c")
    except EmptyExtraction:
        return categories

    reply_names: list[str] = []
    for name in (_normalize_category_name(r) for r in raw):
        if name and name not in reply_names:
            reply_names.append(name)
    if not reply_names:
        return categories

    existing = {c.name: c for c in categories}
    new_names = [n for n in reply_names if n not in existing]
    if not new_names:
        return categories

    mean_pi = float(np.mean([c.pi for c in categories]))
    updated: list[Category] = []
    for name in reply_names:
        if name in existing:
            updated.append(existing[name])
        else:
            updated.append(Category(name=name, pi=mean_pi))
    _renormalize(updated)
    return updated


def build_instructions(
    gw: Gateway,
    task_description: str,
    data_available: str,
    summaries: Sequence[PaperSummary],
    category: Category,
) -> Category:
    """Fill one category: 10 drafted instructions plus up to 10 per summary.

    Every instruction is normalized to start with "by "; exact duplicates are
    dropped.  A draft that parses to nothing seeds the category from the
    generic instruction asset so no category is ever left empty.
    """
    completion = gw.complete(
        "instruction_draft",
        {
            "task_description": task_description,
            "data_available": data_available,
            "category": category.name,
            "to_generate": INSTRUCTION_DRAFT_COUNT,
            "few_shot": gw.assets.data_text("fewshot_instructions").strip(),
        },
    )
    try:
        drafted = extract_tagged(completion.text, "p")
    except EmptyExtraction:
        drafted = gw.assets.data_lines("generic_instructions")

    def _absorb(items: Sequence[str], cap: int | None = None) -> None:
        added = 0
        for item in items:
            if cap is not None and added >= cap:
                break
            norm = normalize_instruction(item)
            if norm and norm not in category.instructions:
                category.instructions.append(norm)
                added += 1

    _absorb(drafted[:INSTRUCTION_DRAFT_COUNT])

    for summary in summaries:
        refine = gw.complete(
            "instruction_refine",
            {
                "task_description": task_description,
                "category": category.name,
                "current_instructions": "\n".join(category.instructions),
                "summary_bullets": summary.bullet_block(),
                "n_new_min": 1,
                "n_new_max": INSTRUCTIONS_PER_SUMMARY,
            },
        )
        pairs = extract_pair_tagged(refine.text)
        matched = [
            instr
            for cat_name, instr in pairs
            if _normalize_category_name(cat_name) == category.name
        ]
        _absorb(matched, cap=INSTRUCTIONS_PER_SUMMARY)

    if not category.instructions:
        _absorb(gw.assets.data_lines("generic_instructions"))
    return category


def build_tree(
    gw: Gateway,
    task_description: str,
    data_available: str,
    summaries: Sequence[PaperSummary],
    config: RunConfig,
) -> KnowledgeTree:
    """Assemble the full tree: categories, per-category instructions, diagnostics."""
    diagnostic = Category(
        name=DIAGNOSTIC_CATEGORY,
        pi=0.0,
        instructions=[normalize_instruction(i) for i in gw.assets.data_lines("diagnostic_instructions")],
    )
    if config.ablation.no_knowledge:
        generic = [normalize_instruction(i) for i in gw.assets.data_lines("generic_instructions")]
        tree = KnowledgeTree(
            categories=[Category(name="generic", pi=1.0, instructions=generic)],
            diagnostic=diagnostic,
        )
        tree.check_normalized()
        return tree

    categories = build_categories(
        gw,
        task_description,
        data_available,
        summaries,
        no_categories=config.ablation.no_categories,
    )
    for category in categories:
        build_instructions(gw, task_description, data_available, summaries, category)
    tree = KnowledgeTree(categories=categories, diagnostic=diagnostic)
    tree.check_normalized()
    return tree


def sample_category(rng: np.random.Generator, tree: KnowledgeTree) -> Category:
    """Draw a category according to the utility probabilities."""
    tree.check_normalized()
    pis = tree.pis()
    index = int(rng.choice(len(pis), p=pis / pis.sum()))
    return tree.categories[index]


def reward(
    tree: KnowledgeTree,
    category_name: str,
    factor: float = 1.1,
    *,
    enabled: bool = True,
) -> None:
    """Multiply one category's utility by ``factor`` and renormalize.

    Disabled (frozen utilities) under the no_bayesian ablation.  The
    diagnostic category carries no probability mass and is never rewarded.
    """
    if not enabled or category_name == tree.diagnostic.name:
        return
    cat = tree.category(category_name)
    cat.pi *= factor
    _renormalize(tree.categories)
    tree.check_normalized()


def draw_candidates(rng: np.random.Generator, category: Category, k: int = 3) -> list[str]:
    """Uniformly draw up to k distinct instructions from a category."""
    if not category.instructions:
        raise ValueError(f"category '{category.name}' has no instructions")
    count = min(k, len(category.instructions))
    idx = rng.choice(len(category.instructions), size=count, replace=False)
    return [category.instructions[int(i)] for i in idx]


def choose_candidate(candidates: Sequence[str], chooser: Callable[[list[str]], int | None] | None) -> str:
    """Let the chooser pick one candidate (0-based); fall back to the first.

    The chooser is only consulted when there is an actual choice to make.
    """
    choice = 0
    if chooser is not None and len(candidates) > 1:
        picked = chooser(list(candidates))
        if picked is not None and 0 <= picked < len(candidates):
            choice = picked
    return candidates[choice]


def pick_instruction(
    rng: np.random.Generator,
    category: Category,
    k: int = 3,
    chooser: Callable[[list[str]], int | None] | None = None,
) -> str:
    """Uniformly draw k distinct instructions, then let the chooser pick one.

    The chooser returns a 0-based index into the drawn candidates; None (or
    an out-of-range reply upstream) falls back to the first candidate.
    """
    return choose_candidate(draw_candidates(rng, category, k), chooser)


def recent_feedback(category: Category, window: int = 5) -> list[FeedbackEntry]:
    """The last ``window`` feedback entries, oldest first (newest last)."""
    if window < 1:
        return []
    return category.feedback[-window:]


def feedback_block(category: Category, window: int = 5) -> str:
    entries = recent_feedback(category, window)
    if not entries:
        return "(none yet)"
    return "\n".join(
        f"- [{e.parent_score:.6g} -> {e.child_score:.6g}] {e.summary}" for e in entries
    )
