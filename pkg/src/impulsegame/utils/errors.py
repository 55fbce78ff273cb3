"""Exception hierarchy shared by every impulsegame module."""

from typing import Any, Optional


class ImpulseGameError(Exception):
    """Base class for all errors raised by impulsegame."""


class ProblemError(ImpulseGameError, ValueError):
    """A game instance is malformed or was queried with invalid arguments."""


class GridError(ImpulseGameError, ValueError):
    """Invalid grid construction, grid mismatch, or a non-finite query point."""


class ValidationFailure(ImpulseGameError):
    """A fatal assumption check failed; downstream solving is refused."""

    def __init__(self, message: str, report: Optional[Any] = None):
        super().__init__(message)
        self.report = report


class DivergenceError(ImpulseGameError, ArithmeticError):
    """The iterate left the region any correct iterate stays in."""

    def __init__(self, message: str, iteration: int, sup_norm: float, threshold: float):
        super().__init__(message)
        self.iteration = iteration
        self.sup_norm = sup_norm
        self.threshold = threshold


class NotConvergedError(ImpulseGameError):
    """An operation that needs a converged solve received a non-converged one."""


class ImpulseLoopError(ImpulseGameError, RuntimeError):
    """Too many zero-time impulses were requested at a single instant."""


class OracleBudgetError(ImpulseGameError):
    """The exhaustive game-tree enumeration exceeded its work budget."""


class ConfigError(ImpulseGameError, ValueError):
    """A run configuration could not be parsed or validated."""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class PositivityError(ProblemError, ValidationFailure):
    """An impulse-cost parameter violates the strict-positivity assumption."""


class FormMismatchError(ImpulseGameError, ValueError):
    """Two solve reports cannot be compared because their forms do not pair up."""
