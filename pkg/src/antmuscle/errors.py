"""Exception types shared across the package."""

from __future__ import annotations


class AntmuscleError(Exception):
    """Base class for all package-specific errors."""


class DomainError(AntmuscleError, ValueError):
    """An input lies outside the mathematical domain of an operation
    (e.g. the rational force law evaluated past its pole)."""


class ConfigurationError(AntmuscleError, ValueError):
    """Inconsistent or incomplete configuration."""


class FeasibilityError(AntmuscleError, ValueError):
    """Requested coordinates lie outside the feasible set; the message
    names the violated bound."""


class InstabilityError(AntmuscleError, RuntimeError):
    """A simulation tripped a divergence guard.

    ``diagnostics`` holds the state at the time of the trip and, for
    experiment runners, a partial log of the trial so far.
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class FitError(AntmuscleError, RuntimeError):
    """Parameter identification failed.

    ``details`` carries per-start diagnostics for post-mortem.
    """

    def __init__(self, message: str, details: list | None = None):
        super().__init__(message)
        self.details = details or []


class InsufficientDataError(FitError):
    """Too few samples for the number of free parameters."""


class TrajectoryParseError(AntmuscleError, ValueError):
    """A trajectory file is malformed; the message names the line."""


class TrajectorySchemaError(AntmuscleError, ValueError):
    """A trajectory file parses but violates the schema (non-uniform
    timestamps, wrong columns, bad rate)."""
