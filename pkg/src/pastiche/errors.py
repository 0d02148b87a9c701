"""Exception types shared across the engine."""

from __future__ import annotations


class PasticheError(Exception):
    """Base class for engine errors."""


class DatasetError(PasticheError):
    """A dataset file is malformed or internally inconsistent."""


class ConfigError(PasticheError):
    """A configuration value is missing, ill-typed, or out of range.

    Messages always name the offending field so callers can surface them verbatim.
    """


class ItemError(PasticheError):
    """A single plan item failed during execution; the message names its index."""

    def __init__(self, index: int, message: str) -> None:
        super().__init__(f"item {index}: {message}")
        self.index = index
