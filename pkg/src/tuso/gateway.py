"""Prompt assets, completion backends, and tagged-span extraction.

All prompt text lives in on-disk asset files (see ``tuso/assets``); this
module loads and renders them, talks to a completion backend with retries,
and parses the tagged spans the prompts ask for.  The scripted backend
serves canned replies and performs no network operations at all, which the
module-level ``SOCKET_OPS`` counter makes checkable from tests.
"""

from __future__ import annotations

import json
import re
import string
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from tuso.errors import (
    BackendUnavailable,
    EmptyExtraction,
    TemplateBindingMissing,
    TransientBackendError,
    TusoError,
)

ROLE_HINTS = frozenset(
    {
        "paper_summarizer",
        "category_builder",
        "instruction_builder",
        "initializer",
        "optimizer",
        "diagnostician",
        "feedback_writer",
    }
)

# Prompt asset name -> role hint.  Bodies live on disk; this table is the
# only in-code knowledge about an asset.
ASSET_ROLES: dict[str, str] = {
    "paper_abstract": "paper_summarizer",
    "paper_refine": "paper_summarizer",
    "category_draft": "category_builder",
    "category_refine": "category_builder",
    "instruction_draft": "instruction_builder",
    "instruction_refine": "instruction_builder",
    "init_draft": "initializer",
    "init_refine": "initializer",
    "implement": "initializer",
    "repair": "initializer",
    "optimize": "optimizer",
    "generic_optimize": "optimizer",
    "choose_instruction": "optimizer",
    "diagnose_instrument": "diagnostician",
    "diagnose_improve": "diagnostician",
    "feedback": "feedback_writer",
}

# Plain data files (seed lists, few-shot blocks) also loaded from disk.
DATA_ASSETS = (
    "diagnostic_instructions",
    "generic_categories",
    "generic_instructions",
    "fewshot_categories",
    "fewshot_instructions",
)

_TAGS = ("c", "p", "m")
_TAG_RES = {tag: re.compile(rf"<{tag}>(.*?)</{tag}>", re.DOTALL) for tag in _TAGS}
_PAIR_RE = re.compile(r"<(c|p)>(.*?)</\1>", re.DOTALL)
_FENCE_RE = re.compile(r"```[A-Za-z0-9_+-]*\n(.*?)```", re.DOTALL)
_INT_RE = re.compile(r"-?\d+")


class _Counter:
    """Counts outbound network operations; scripted runs must leave it at zero."""

    def __init__(self) -> None:
        self.count = 0

    def bump(self) -> None:
        self.count += 1

    def reset(self) -> None:
        self.count = 0


SOCKET_OPS = _Counter()


@dataclass(frozen=True)
class PromptAsset:
    name: str
    body: str
    role_hint: str

    def placeholders(self) -> set[str]:
        return {
            fname
            for _, fname, _, _ in string.Formatter().parse(self.body)
            if fname is not None and fname != ""
        }


@dataclass(frozen=True)
class Completion:
    text: str
    asset: str
    role_hint: str
    attempt: int
    latency: float = 0.0


class AssetStore:
    """Loads prompt and data assets from a directory (default: the packaged set)."""

    def __init__(self, directory: Path | str | None = None) -> None:
        if directory is None:
            directory = Path(str(resources.files("tuso").joinpath("assets")))
        self.directory = Path(directory)
        self._cache: dict[str, str] = {}

    def _read(self, name: str) -> str:
        if name not in self._cache:
            path = self.directory / f"{name}.txt"
            if not path.is_file():
                raise TusoError(f"prompt asset not found: {path}")
            self._cache[name] = path.read_text(encoding="utf-8")
        return self._cache[name]

    def get(self, name: str) -> PromptAsset:
        if name not in ASSET_ROLES:
            raise TusoError(f"unknown prompt asset '{name}'")
        return PromptAsset(name=name, body=self._read(name), role_hint=ASSET_ROLES[name])

    def data_lines(self, name: str) -> list[str]:
        if name not in DATA_ASSETS:
            raise TusoError(f"unknown data asset '{name}'")
        text = self._read(name)
        return [line.strip() for line in text.splitlines() if line.strip()]

    def data_text(self, name: str) -> str:
        if name not in DATA_ASSETS:
            raise TusoError(f"unknown data asset '{name}'")
        return self._read(name)


def render(asset: PromptAsset, bindings: Mapping[str, str]) -> str:
    """Fill an asset's placeholders; any unbound placeholder is an error."""
    try:
        return asset.body.format_map({k: str(v) for k, v in bindings.items()})
    except KeyError as exc:
        raise TemplateBindingMissing(str(exc.args[0]), asset.name) from None
    except IndexError:
        raise TemplateBindingMissing("<positional>", asset.name) from None


def extract_tagged(text: str, tag: str) -> list[str]:
    """Return inner spans of every well-formed <tag>...</tag>, in order.

    Malformed spans are skipped; zero well-formed spans raises EmptyExtraction.
    """
    if tag not in _TAGS:
        raise TusoError(f"unsupported extraction tag '{tag}'")
    spans = _TAG_RES[tag].findall(text)
    if not spans:
        raise EmptyExtraction(f"no <{tag}> spans found")
    return spans


def extract_pair_tagged(text: str) -> list[tuple[str, str]]:
    """Return (category, instruction) pairs from adjacent <c>/<p> spans.

    A <p> pairs with the nearest preceding unpaired <c>; orphans on either
    side are dropped, so "<c>A</c><c>B</c><p>by y</p>" yields [(B, by y)].
    """
    pairs: list[tuple[str, str]] = []
    pending_c: str | None = None
    for match in _PAIR_RE.finditer(text):
        tag, inner = match.group(1), match.group(2)
        if tag == "c":
            pending_c = inner
        elif pending_c is not None:
            pairs.append((pending_c, inner))
            pending_c = None
    return pairs


def strip_code_fences(text: str) -> str:
    """Return the largest fenced code block if any, else the text unchanged."""
    blocks = _FENCE_RE.findall(text)
    if not blocks:
        return text
    return max(blocks, key=len)


def parse_index_choice(text: str, k: int) -> int | None:
    """Parse a 1-based index in [1, k] from a selection reply; None if absent."""
    match = _INT_RE.search(text)
    if match is None:
        return None
    value = int(match.group())
    if 1 <= value <= k:
        return value
    return None


class ScriptedBackend:
    """Deterministic reply source for offline runs and tests.

    Replies are resolved per request in fixed order: the asset-name route,
    then the role route, then the shared queue, then the default constant.
    A list is a FIFO queue; a string is an inexhaustible constant.  When no
    route can serve a request the backend raises BackendUnavailable.
    """

    def __init__(
        self,
        queue: Sequence[str] = (),
        by_asset: Mapping[str, Sequence[str] | str] | None = None,
        by_role: Mapping[str, Sequence[str] | str] | None = None,
        default: str | None = None,
    ) -> None:
        self._queue = list(queue)
        self._by_asset = {k: (v if isinstance(v, str) else list(v)) for k, v in (by_asset or {}).items()}
        self._by_role = {k: (v if isinstance(v, str) else list(v)) for k, v in (by_role or {}).items()}
        self._default = default
        self._lock = threading.Lock()  # queues are popped from worker threads

    @classmethod
    def from_file(cls, path: Path | str) -> "ScriptedBackend":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            queue=doc.get("queue", []),
            by_asset=doc.get("by_asset", {}),
            by_role=doc.get("by_role", {}),
            default=doc.get("default"),
        )

    def _resolve(self, asset_name: str, role_hint: str, consume: bool) -> str:
        with self._lock:
            for table, key in ((self._by_asset, asset_name), (self._by_role, role_hint)):
                route = table.get(key)
                if isinstance(route, str):
                    return route
                if route:
                    return route.pop(0) if consume else route[0]
            if self._queue:
                return self._queue.pop(0) if consume else self._queue[0]
            if self._default is not None:
                return self._default
        raise BackendUnavailable(
            f"scripted backend exhausted (asset '{asset_name}', role '{role_hint}')"
        )

    def complete(self, prompt: str, *, asset_name: str, role_hint: str) -> str:
        return self._resolve(asset_name, role_hint, consume=True)

    def fast_forward(self, consumed: Iterable[tuple[str, str]]) -> None:
        """Discard replies already served before a resume, in their original order."""
        for asset_name, role_hint in consumed:
            self._resolve(asset_name, role_hint, consume=True)


class HttpBackend:
    """Chat-completion backend over HTTP with a bearer token from the environment."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str,
        post: Callable[..., object] | None = None,
        timeout: float = 60.0,
    ) -> None:
        if not api_key:
            raise BackendUnavailable("no API key: set the TUSO_API_KEY environment variable")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self._api_key = api_key
        self._timeout = timeout
        if post is None:
            import requests

            post = requests.post
        self._post = post

    def complete(self, prompt: str, *, asset_name: str, role_hint: str) -> str:
        SOCKET_OPS.bump()
        try:
            resp = self._post(
                f"{self.base_url}/chat/completions",
                headers={"Authorization": f"Bearer {self._api_key}"},
                json={
                    "model": self.model,
                    "messages": [{"role": "user", "content": prompt}],
                },
                timeout=self._timeout,
            )
        except Exception as exc:  # connection errors, timeouts
            raise TransientBackendError(f"transport failure: {exc}") from exc
        status = getattr(resp, "status_code", 0)
        if status in (401, 403):
            raise BackendUnavailable(f"authentication rejected (HTTP {status})")
        if status != 200:
            raise TransientBackendError(f"HTTP {status} from completion endpoint")
        try:
            payload = resp.json()  # type: ignore[attr-defined]
            return payload["choices"][0]["message"]["content"]
        except Exception as exc:
            raise TransientBackendError(f"malformed completion payload: {exc}") from exc


@dataclass
class Gateway:
    """Renders assets, calls the backend with retries, truncates replies.

    Retries apply only to transient transport errors; backoff is exponential
    with jitter drawn from a dedicated RNG stream so retry timing cannot
    perturb any other random sequence.  on_complete, when set, observes every
    completion (the engine uses it to journal LLM events).
    """

    backend: object
    assets: AssetStore
    jitter_rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    retry_attempts: int = 3
    response_char_cap: int = 65536
    backoff_base: float = 0.5
    sleeper: Callable[[float], None] = time.sleep
    on_complete: Callable[[Completion], None] | None = None

    def complete(self, asset_name: str, bindings: Mapping[str, str]) -> Completion:
        asset = self.assets.get(asset_name)
        prompt = render(asset, bindings)
        started = time.monotonic()
        last_error: Exception | None = None
        for attempt in range(1, self.retry_attempts + 1):
            try:
                text = self.backend.complete(
                    prompt, asset_name=asset.name, role_hint=asset.role_hint
                )
            except TransientBackendError as exc:
                last_error = exc
                if attempt == self.retry_attempts:
                    break
                delay = self.backoff_base * (2 ** (attempt - 1))
                delay += float(self.jitter_rng.uniform(0.0, self.backoff_base))
                self.sleeper(delay)
                continue
            completion = Completion(
                text=str(text)[: self.response_char_cap],
                asset=asset.name,
                role_hint=asset.role_hint,
                attempt=attempt,
                latency=time.monotonic() - started,
            )
            if self.on_complete is not None:
                self.on_complete(completion)
            return completion
        raise BackendUnavailable(
            f"backend failed after {self.retry_attempts} attempts: {last_error}"
        )
