"""Game instances: the problem model, the built-in problems and assumption checks."""

from impulsegame.model.builtins import available_problems, make_builtin, register_problem, resolve_params
from impulsegame.model.problem import Component, ControlPair, LipschitzHints, ProblemSpec, evaluate
from impulsegame.model.validation import ValidationReport, validate_problem

__all__ = [
    "Component",
    "ControlPair",
    "LipschitzHints",
    "ProblemSpec",
    "ValidationReport",
    "available_problems",
    "evaluate",
    "make_builtin",
    "register_problem",
    "resolve_params",
    "validate_problem",
]
