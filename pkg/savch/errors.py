# savch/errors.py
"""
Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can tell physics failures
(energy identity = 3, mass drift = 4) apart from configuration (2) and
other numerical (5) failures. Plain ``OSError`` maps to 1 in the CLI.
"""
from __future__ import annotations

from typing import TYPE_CHECKING, Any, List, Optional

if TYPE_CHECKING:
    from savch.dto import StepReport


class SavchError(RuntimeError):
    """Base class; also raised for broken internal invariants."""

    exit_code = 5


class PreconditionError(SavchError, ValueError):
    """Argument or precondition violation."""

    exit_code = 2


class ConfigError(PreconditionError):
    """Config file could not be parsed or validated."""

    def __init__(self, message: str, key: Optional[str] = None) -> None:
        super().__init__(message)
        self.key = key


class SimulationError(SavchError):
    """A step-level assertion failed. Carries enough state for a dump."""

    def __init__(
        self,
        message: str,
        *,
        report: Optional["StepReport"] = None,
        state: Any = None,
        reports: Optional[List["StepReport"]] = None,
    ) -> None:
        super().__init__(message)
        self.report = report
        self.state = state
        self.reports = list(reports or [])


class EnergyIdentityError(SimulationError):
    exit_code = 3


class MassDriftError(SimulationError):
    exit_code = 4


class RankOneDenominatorError(SimulationError):
    pass


class SpectralConvergenceError(SavchError):
    """Probe did not converge; keeps the best iterate seen."""

    def __init__(self, message: str, *, best_lambda: float, best_vector: Any, residual: float, iterations: int) -> None:
        super().__init__(message)
        self.best_lambda = best_lambda
        self.best_vector = best_vector
        self.residual = residual
        self.iterations = iterations
