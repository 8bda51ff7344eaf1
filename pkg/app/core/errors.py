"""
Exception hierarchy.

Configuration and input problems map to CLI exit code 1, numerical
failures to exit code 2. Solver non-convergence is reported through
result flags and never raised.
"""

from typing import Any, Dict, Optional


class EquiMeanError(Exception):
    """Root of all errors raised by this package."""

    exit_code = 1


class ConfigError(EquiMeanError):
    """Invalid configuration, flags or config file."""

    exit_code = 1


class InvalidInputError(ConfigError, ValueError):
    """Input data that does not fit the requested operation."""


class DimensionMismatch(InvalidInputError):
    """Points, parameters or isometries of incompatible shapes or variants."""


class UnsupportedDimension(InvalidInputError):
    """A dimension outside the supported range (e.g. torus quadrature with p > 4)."""


class UnsupportedMetric(InvalidInputError):
    """A metric that is not implemented for the manifold."""


class NumericalError(EquiMeanError):
    """A numerical failure during sampling, estimation or simulation."""

    exit_code = 2


class NotPositiveDefinite(NumericalError, ValueError):
    """Matrix rejected as non-SPD (smallest eigenvalue below tolerance)."""


class InvariantViolation(NumericalError):
    """A computed value broke a type invariant."""


class UndefinedEstimate(NumericalError):
    """An estimator has no defined value for the data (e.g. zero resultant)."""


class SamplerError(NumericalError):
    """A sampler cannot produce draws (e.g. pathological rejection rate)."""


class ChainError(NumericalError):
    """A Markov chain failed; carries a dump of the offending state."""

    def __init__(self, message: str, state: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.state = state or {}

    def __str__(self) -> str:
        base = super().__str__()
        if not self.state:
            return base
        return f"{base} (state: {self.state})"
