"""Run configuration, ablation toggles, and seeded RNG substreams."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

try:
    import tomllib  # type: ignore[import-not-found]
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib  # type: ignore[no-redef]

from tuso.errors import ConfigError

ABLATION_NAMES = ("no_categories", "no_bayesian", "no_diagnosis", "no_knowledge")

# Fixed fan-out order; changing it would silently reseed every stream.
RNG_STREAM_NAMES = ("action", "category", "instruction", "clustering", "jitter")


@dataclass(frozen=True)
class AblationFlags:
    """Structural toggles used by the ablation experiments."""

    no_categories: bool = False
    no_bayesian: bool = False
    no_diagnosis: bool = False
    no_knowledge: bool = False

    @classmethod
    def from_names(cls, names: list[str]) -> "AblationFlags":
        unknown = [n for n in names if n not in ABLATION_NAMES]
        if unknown:
            raise ConfigError(f"unknown ablation name(s): {', '.join(unknown)}")
        return cls(**{name: name in names for name in ABLATION_NAMES})

    def names(self) -> list[str]:
        return [name for name in ABLATION_NAMES if getattr(self, name)]


@dataclass(frozen=True)
class RunConfig:
    """Everything that shapes one optimization run.

    budget_seconds is a wall-clock budget over the whole run (LLM latency and
    sandbox time both count).  attempt_limit_seconds caps each implementation
    attempt; the effective per-execution limit is the smaller of this and the
    bundle's own time limit.  max_rounds is an optional hard bound on the
    number of optimization rounds, mostly useful for scripted runs and tests;
    the wall-clock budget always applies as well.
    """

    budget_seconds: float = 28800.0
    alpha: float = 0.8
    attempt_limit_seconds: float = 600.0
    init_repair_attempts: int = 4
    optim_repair_attempts: int = 2
    feedback_window: int = 5
    instruction_draw: int = 3
    reward_factor: float = 1.1
    within_best_band: float = 0.001
    decay_period_rounds: int = 2
    seed: int = 0
    max_parallel_evals: int = 1
    max_rounds: int | None = None
    ablation: AblationFlags = field(default_factory=AblationFlags)

    def validate(self) -> None:
        if self.budget_seconds < 0:
            raise ConfigError("budget_seconds must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if self.attempt_limit_seconds <= 0:
            raise ConfigError("attempt_limit_seconds must be > 0")
        if self.init_repair_attempts < 0 or self.optim_repair_attempts < 0:
            raise ConfigError("repair attempt counts must be >= 0")
        if self.feedback_window < 1:
            raise ConfigError("feedback_window must be >= 1")
        if self.instruction_draw < 1:
            raise ConfigError("instruction_draw must be >= 1")
        if self.reward_factor <= 1.0:
            raise ConfigError("reward_factor must be > 1")
        if self.within_best_band <= 0:
            raise ConfigError("within_best_band must be > 0")
        if self.decay_period_rounds < 1:
            raise ConfigError("decay_period_rounds must be >= 1")
        if self.max_parallel_evals < 1:
            raise ConfigError("max_parallel_evals must be >= 1")
        if self.max_rounds is not None and self.max_rounds < 0:
            raise ConfigError("max_rounds must be >= 0")

    def to_record(self) -> dict[str, Any]:
        rec = dataclasses.asdict(self)
        rec["ablation"] = self.ablation.names()
        return rec

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "RunConfig":
        kwargs = dict(rec)
        kwargs["ablation"] = AblationFlags.from_names(list(kwargs.get("ablation", [])))
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


class RngStreams:
    """Named RNG substreams fanned out from one root seed.

    Each consumer (action coin, category sampler, instruction draws, cluster
    seeding, retry jitter) owns a stream, so adding draws to one part of the
    engine cannot shift the sequences seen by the others.
    """

    def __init__(self, seed: int) -> None:
        self.seed = seed
        root = np.random.SeedSequence(seed)
        children = root.spawn(len(RNG_STREAM_NAMES))
        self._generators = {
            name: np.random.default_rng(child)
            for name, child in zip(RNG_STREAM_NAMES, children)
        }

    def __getattr__(self, name: str) -> np.random.Generator:
        try:
            return self.__dict__["_generators"][name]
        except KeyError:
            raise AttributeError(name) from None

    def get(self, name: str) -> np.random.Generator:
        if name not in self._generators:
            raise KeyError(f"unknown rng stream '{name}'")
        return self._generators[name]

    def state(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "streams": {
                name: gen.bit_generator.state
                for name, gen in self._generators.items()
            },
        }

    def restore(self, state: Mapping[str, Any]) -> None:
        for name, bg_state in state["streams"].items():
            self._generators[name].bit_generator.state = bg_state


@dataclass(frozen=True)
class BackendSettings:
    """How to obtain LLM completions and literature results.

    kind is "scripted" (deterministic replies from a script file, no network)
    or "http" (chat-completion endpoint; the API key comes only from the
    TUSO_API_KEY environment variable, never from this file).  literature is
    "none", "http", or a path to a recorded search fixture.
    """

    kind: str = "scripted"
    model: str = ""
    base_url: str = ""
    script_path: Path | None = None
    prompt_dir: Path | None = None
    literature: str = "none"
    response_char_cap: int = 65536
    retry_attempts: int = 3
    request_timeout: float = 60.0

    def validate(self) -> None:
        if self.kind not in ("scripted", "http"):
            raise ConfigError(f"backend.kind must be 'scripted' or 'http', got '{self.kind}'")
        if self.kind == "scripted" and self.script_path is None:
            raise ConfigError("backend.kind = 'scripted' requires backend.script")
        if self.kind == "http" and not self.base_url:
            raise ConfigError("backend.kind = 'http' requires backend.base_url")
        if self.response_char_cap < 1:
            raise ConfigError("backend.response_char_cap must be >= 1")
        if self.retry_attempts < 1:
            raise ConfigError("backend.retry_attempts must be >= 1")


@dataclass(frozen=True)
class FileConfig:
    """Parsed contents of a run config file."""

    run: RunConfig
    backend: BackendSettings
    bundle: Path
    journal: Path
    warm_start: Path | None = None


_RUN_PATH_KEYS = ("bundle", "journal", "warm_start")


def _run_config_from_table(table: dict[str, Any]) -> RunConfig:
    known = {f.name for f in dataclasses.fields(RunConfig)} - {"ablation"}
    kwargs: dict[str, Any] = {}
    ablation_names: list[str] = []
    for key, value in table.items():
        if key == "ablation":
            if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                raise ConfigError("run.ablation must be a list of ablation names")
            ablation_names = value
        elif key in known:
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown key in [run]: {key}")
    cfg = RunConfig(ablation=AblationFlags.from_names(ablation_names), **kwargs)
    cfg.validate()
    return cfg


def _backend_from_table(table: dict[str, Any], base_dir: Path) -> BackendSettings:
    known = {f.name for f in dataclasses.fields(BackendSettings)}
    kwargs: dict[str, Any] = {}
    for key, value in table.items():
        name = {"script": "script_path"}.get(key, key)
        if name not in known:
            raise ConfigError(f"unknown key in [backend]: {key}")
        if name in ("script_path", "prompt_dir"):
            value = (base_dir / value).resolve()
        kwargs[name] = value
    settings = BackendSettings(**kwargs)
    settings.validate()
    return settings


def load_config(path: Path | str) -> FileConfig:
    """Parse a TOML run config (tables [run] and [backend]); unknown keys are rejected."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file is not valid TOML: {exc}") from None

    unknown_tables = set(doc) - {"run", "backend"}
    if unknown_tables:
        raise ConfigError(f"unknown table(s) in config: {', '.join(sorted(unknown_tables))}")

    base_dir = path.resolve().parent
    run_table = dict(doc.get("run", {}))
    paths: dict[str, Path | None] = {k: None for k in _RUN_PATH_KEYS}
    for key in _RUN_PATH_KEYS:
        if key in run_table:
            raw = run_table.pop(key)
            if not isinstance(raw, str):
                raise ConfigError(f"run.{key} must be a path string")
            paths[key] = (base_dir / raw).resolve()

    if paths["bundle"] is None:
        raise ConfigError("run.bundle is required")
    if paths["journal"] is None:
        raise ConfigError("run.journal is required")

    run = _run_config_from_table(run_table)
    backend = _backend_from_table(dict(doc.get("backend", {})), base_dir)
    return FileConfig(
        run=run,
        backend=backend,
        bundle=paths["bundle"],
        journal=paths["journal"],
        warm_start=paths["warm_start"],
    )
