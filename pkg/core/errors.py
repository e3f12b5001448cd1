"""
Exception hierarchy for cmvband.
Every error carries the CLI exit code it maps to.
"""

from typing import List, Optional


class CmvBandError(Exception):
    """Base class for all cmvband errors."""

    exit_code: int = 1


class ConfigError(CmvBandError, ValueError):
    """Invalid configuration or operation parameters."""

    exit_code = 2


class EmbeddingError(ConfigError):
    """A coin contraction that cannot be housed in U(3)."""


class NumericFailure(CmvBandError, ArithmeticError):
    """Non-convergence, residual above tolerance or loss of unitarity."""

    exit_code = 3


class WalkBoundaryError(NumericFailure):
    """Walk amplitude reached the truncation boundary."""


class AcceptanceFailure(CmvBandError):
    """One or more acceptance checks failed."""

    exit_code = 4

    def __init__(self, message: str, failed: Optional[List[str]] = None):
        super().__init__(message)
        self.failed = failed or []


class OutputError(CmvBandError):
    """A report file could not be written."""
