"""Offline synthetic task bundles for region-rewrite optimization runs."""

from taskpack.denoise import make_denoise_fixture
from taskpack.regression import make_regression_fixture, make_warmstart_fixture
from taskpack.task import (
    SCORE_MARKER,
    SENTINEL_BEGIN,
    SENTINEL_END,
    FixtureTask,
    splice_region,
)

__all__ = [
    "FixtureTask",
    "SCORE_MARKER",
    "SENTINEL_BEGIN",
    "SENTINEL_END",
    "make_denoise_fixture",
    "make_regression_fixture",
    "make_warmstart_fixture",
    "splice_region",
]
