"""Shared exception taxonomy.

Every failure the library raises deliberately derives from AdvfasError so the
CLI can map families to stable exit codes: configuration problems exit 2,
artifact I/O problems exit 3, numeric failures exit 4.
"""

from __future__ import annotations

__all__ = [
    "AdvfasError",
    "DomainError",
    "ConfigError",
    "ShapeError",
    "GraphError",
    "DataFormatError",
    "CheckpointError",
    "BadMagicError",
    "UnsupportedVersionError",
    "TruncatedFileError",
    "UnreachableOptimumError",
    "NumericError",
]


class AdvfasError(Exception):
    """Base class for all library-raised failures."""


class DomainError(AdvfasError, ValueError):
    """A score, label, or probability lies outside its mathematical domain."""


class ConfigError(AdvfasError, ValueError):
    """A configuration value or argument combination is invalid."""


class ShapeError(AdvfasError, ValueError):
    """An array has the wrong shape or dimensionality."""


class GraphError(AdvfasError, RuntimeError):
    """A loss value is not connected to the parameters being differentiated."""


class DataFormatError(AdvfasError, ValueError):
    """A dataset file is malformed (bad magic, bad version, truncation, ...)."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class CheckpointError(AdvfasError, ValueError):
    """A checkpoint file is malformed."""


class BadMagicError(CheckpointError):
    """The checkpoint does not start with the expected magic bytes."""


class UnsupportedVersionError(CheckpointError):
    """The checkpoint declares a format version this build cannot read."""


class TruncatedFileError(CheckpointError):
    """The checkpoint ends before its declared payload does."""


class UnreachableOptimumError(AdvfasError, ArithmeticError):
    """The unconstrained optimum lies outside the feasible range."""


class NumericError(AdvfasError, ArithmeticError):
    """A computation produced a non-finite value."""
