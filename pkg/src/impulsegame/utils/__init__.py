"""Logging setup and the exception hierarchy."""

from impulsegame.utils.errors import (
    ConfigError,
    DivergenceError,
    FormMismatchError,
    GridError,
    ImpulseGameError,
    ImpulseLoopError,
    NotConvergedError,
    OracleBudgetError,
    PositivityError,
    ProblemError,
    ValidationFailure,
)
from impulsegame.utils.logging import configure_logging, get_logger

__all__ = [
    "ConfigError",
    "DivergenceError",
    "FormMismatchError",
    "GridError",
    "ImpulseGameError",
    "ImpulseLoopError",
    "NotConvergedError",
    "OracleBudgetError",
    "PositivityError",
    "ProblemError",
    "ValidationFailure",
    "configure_logging",
    "get_logger",
]
