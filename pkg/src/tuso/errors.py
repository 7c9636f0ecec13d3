"""Exception types shared across the package."""

from __future__ import annotations


class TusoError(RuntimeError):
    """Base class for every error raised by this package."""


class ConfigError(TusoError):
    """A config file or override failed validation."""


class BundleInvalid(TusoError):
    """A task bundle failed validation."""


class SentinelMissing(BundleInvalid):
    """A sentinel line is absent from the template (or out of order)."""


class SentinelDuplicated(BundleInvalid):
    """A sentinel line occurs more than once in the template."""


class EmptyRegion(BundleInvalid):
    """Splice was asked to install an empty editable region."""


class SpawnFailure(TusoError):
    """The bundle's run command could not be started."""


class AllInitializationsFailed(TusoError):
    """Cold start produced zero compiling solutions."""


class BackendUnavailable(TusoError):
    """The completion backend cannot serve requests (auth, exhaustion, retries spent)."""


class TransientBackendError(TusoError):
    """A retriable transport failure from the HTTP completion backend."""


class TemplateBindingMissing(TusoError):
    """A prompt asset referenced a placeholder the caller did not bind."""

    def __init__(self, placeholder: str, asset: str = "") -> None:
        self.placeholder = placeholder
        self.asset = asset
        where = f" in asset '{asset}'" if asset else ""
        super().__init__(f"missing binding for placeholder '{placeholder}'{where}")


class EmptyExtraction(TusoError):
    """Tag extraction found zero well-formed spans."""


class NetworkFailure(TusoError):
    """A literature search request failed at the transport or HTTP level."""


class DuplicateId(TusoError):
    """A solution with this id is already present in the pool."""


class CorruptJournal(TusoError):
    """A journal or pool file contains a malformed non-final record."""

    def __init__(self, message: str, index: int) -> None:
        self.index = index
        super().__init__(f"{message} (record index {index})")
