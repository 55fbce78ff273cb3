"""
ImpulseGame - grid solvers for two-player zero-sum differential games with
continuous and impulse controls.

The package discretizes the quasi-variational inequalities of the game with
a semi-Lagrangian scheme, iterates them to their fixed point, extracts
feedback policies and simulates the resulting trajectories.
"""

__version__ = "0.1.0"

from impulsegame.core.operators import QviForm, StepParams
from impulsegame.core.solver import SolveReport, SolverParams, solve
from impulsegame.grid.grid import Grid
from impulsegame.model.builtins import make_builtin
from impulsegame.model.problem import ProblemSpec

__all__ = ["Grid", "ProblemSpec", "QviForm", "SolveReport", "SolverParams", "StepParams", "make_builtin", "solve"]
