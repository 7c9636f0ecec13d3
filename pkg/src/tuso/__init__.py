"""Agentic optimization engine for scientific computing tasks.

The engine maintains a pool of candidate solutions to a task whose quality is
measured by a sandboxed evaluation script.  A knowledge tree of methodological
categories and instructions, built from literature summaries, drives an LLM to
iteratively improve diverse top solutions under a wall-clock budget.
"""

from __future__ import annotations

from tuso.config import AblationFlags, RngStreams, RunConfig
from tuso.errors import (
    AllInitializationsFailed,
    BackendUnavailable,
    BundleInvalid,
    CorruptJournal,
    DuplicateId,
    EmptyExtraction,
    EmptyRegion,
    NetworkFailure,
    SentinelDuplicated,
    SentinelMissing,
    SpawnFailure,
    TemplateBindingMissing,
    TusoError,
)

__version__ = "0.1.0"

__all__ = [
    "AblationFlags",
    "AllInitializationsFailed",
    "BackendUnavailable",
    "BundleInvalid",
    "CorruptJournal",
    "DuplicateId",
    "EmptyExtraction",
    "EmptyRegion",
    "NetworkFailure",
    "RngStreams",
    "RunConfig",
    "SentinelDuplicated",
    "SentinelMissing",
    "SpawnFailure",
    "TemplateBindingMissing",
    "TusoError",
    "__version__",
]
