"""Literature search and paper summarization.

Step one of a run: query a scholarly search API for papers relevant to the
task, keep the most cited ones, and distill each abstract into at most 15
bullet points.  When a methods-section excerpt is available the bullets are
refined against it.  Search failures degrade to an empty paper list so the
engine can continue knowledge-free.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol

from tuso import gateway
from tuso.errors import EmptyExtraction, NetworkFailure
from tuso.gateway import Gateway

MAX_PAPERS = 10
MAX_BULLETS = 15
MAX_EXCERPT_WORDS = 1200

SEARCH_FIELDS = "title,abstract,citationCount"

_BULLET_RE = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s+(.*\S)\s*$")
_SENTENCE_END_RE = re.compile(r"(?<=[.!?])\s")


@dataclass(frozen=True)
class PaperMeta:
    title: str
    abstract: str
    citation_count: int


@dataclass
class PaperSummary:
    """A paper reduced to 1..15 bullet points of methodological content."""

    title: str
    bullets: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not 1 <= len(self.bullets) <= MAX_BULLETS:
            raise ValueError(
                f"summary must hold between 1 and {MAX_BULLETS} bullets, got {len(self.bullets)}"
            )

    def bullet_block(self) -> str:
        return "\n".join(f"- {b}" for b in self.bullets)


class SearchSource(Protocol):
    def search(self, query: str, limit: int) -> list[dict]: ...


class HttpSearch:
    """GET-based paper search against a scholarly graph API."""

    def __init__(self, base_url: str = "https://api.semanticscholar.org/graph/v1", timeout: float = 30.0) -> None:
        self.base_url = base_url.rstrip("/")
        self._timeout = timeout

    def search(self, query: str, limit: int) -> list[dict]:
        import requests

        gateway.SOCKET_OPS.bump()
        try:
            resp = requests.get(
                f"{self.base_url}/paper/search",
                params={"query": query, "fields": SEARCH_FIELDS, "limit": limit},
                timeout=self._timeout,
            )
        except Exception as exc:
            raise NetworkFailure(f"paper search transport failure: {exc}") from exc
        if resp.status_code != 200:
            raise NetworkFailure(f"paper search returned HTTP {resp.status_code}")
        try:
            return list(resp.json().get("data", []))
        except Exception as exc:
            raise NetworkFailure(f"paper search returned malformed JSON: {exc}") from exc


class FixtureSearch:
    """Replays a recorded search response from a JSON file (offline runs)."""

    def __init__(self, path: Path | str) -> None:
        self.path = Path(path)

    def search(self, query: str, limit: int) -> list[dict]:
        doc = json.loads(self.path.read_text(encoding="utf-8"))
        rows = doc.get("data", doc) if isinstance(doc, dict) else doc
        return list(rows)[:limit]


class NullSearch:
    """No literature at all; search always yields nothing."""

    def search(self, query: str, limit: int) -> list[dict]:
        return []


def search_papers(source: SearchSource, query: str, limit: int = MAX_PAPERS) -> list[PaperMeta]:
    """Fetch up to ``limit`` papers sorted by citation count, descending.

    Ties keep the API's original order.  Any NetworkFailure degrades to an
    empty list; the caller proceeds without literature knowledge.
    """
    try:
        rows = source.search(query, limit)
    except NetworkFailure:
        return []
    papers = []
    for row in rows:
        title = str(row.get("title") or "").strip()
        if not title:
            continue
        papers.append(
            PaperMeta(
                title=title,
                abstract=str(row.get("abstract") or "").strip(),
                citation_count=int(row.get("citationCount") or 0),
            )
        )
    papers.sort(key=lambda p: -p.citation_count)
    return papers[:limit]


def _parse_bullets(text: str) -> list[str]:
    bullets = []
    for line in text.splitlines():
        match = _BULLET_RE.match(line)
        if match:
            bullets.append(match.group(1))
    return bullets


def first_sentence(text: str) -> str:
    stripped = " ".join(text.split())
    if not stripped:
        return "(no abstract available)"
    return _SENTENCE_END_RE.split(stripped, maxsplit=1)[0]


def truncate_words(text: str, limit: int = MAX_EXCERPT_WORDS) -> str:
    words = text.split()
    if len(words) <= limit:
        return text
    return " ".join(words[:limit])


def summarize_abstract(gw: Gateway, task_description: str, paper: PaperMeta) -> PaperSummary:
    """Distill an abstract into at most 15 bullets; a parse failure falls back
    to a single bullet holding the abstract's first sentence."""
    completion = gw.complete(
        "paper_abstract",
        {
            "task_description": task_description,
            "title": paper.title,
            "abstract": paper.abstract,
            "max_bullets": MAX_BULLETS,
        },
    )
    bullets = _parse_bullets(completion.text)
    if not bullets:
        bullets = [first_sentence(paper.abstract)]
    return PaperSummary(title=paper.title, bullets=bullets[:MAX_BULLETS])


def refine_summary(gw: Gateway, summary: PaperSummary, excerpt: str) -> PaperSummary:
    """Refine bullets against a methods excerpt (truncated to 1,200 words).

    An unparsable reply leaves the summary unchanged.
    """
    completion = gw.complete(
        "paper_refine",
        {
            "title": summary.title,
            "bullets": summary.bullet_block(),
            "excerpt": truncate_words(excerpt),
            "max_bullets": MAX_BULLETS,
        },
    )
    bullets = _parse_bullets(completion.text)
    if not bullets:
        return summary
    return PaperSummary(title=summary.title, bullets=bullets[:MAX_BULLETS])


def gather_knowledge(
    gw: Gateway,
    source: SearchSource,
    task_description: str,
    query: str,
    methods_excerpts: Mapping[str, str] | None = None,
) -> list[PaperSummary]:
    """Run the full literature step: search, summarize, optionally refine."""
    summaries = []
    for paper in search_papers(source, query):
        try:
            summary = summarize_abstract(gw, task_description, paper)
        except EmptyExtraction:
            summary = PaperSummary(title=paper.title, bullets=[first_sentence(paper.abstract)])
        excerpt = (methods_excerpts or {}).get(paper.title, "")
        if excerpt:
            summary = refine_summary(gw, summary, excerpt)
        summaries.append(summary)
    return summaries
