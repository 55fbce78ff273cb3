"""
Tests for the independent oracles: exhaustive game trees and Gauss-Seidel sweeps.
"""

import numpy as np
import pytest

from impulsegame.core.operators import QviForm, StepParams
from impulsegame.core.oracle import ValueInterval, gauss_seidel_solve, tree_value
from impulsegame.core.solver import SolverParams, solve
from impulsegame.grid.field import interpolate, sup_norm_diff
from impulsegame.grid.grid import build_grid
from impulsegame.model.builtins import make_builtin
from impulsegame.utils.errors import OracleBudgetError

DEPTH = 15
TOL = 1e-10


def _solve(problem, grid, form, h):
    return solve(problem, grid, form, SolverParams(step=StepParams(h=h, grid=grid), tol_fix=TOL))


# -- Test fixtures --

@pytest.fixture
def constant():
    return make_builtin("constant", {"f0": 2.0, "lam": 1.0, "kappa": 1.0, "jump": 0.5})


@pytest.fixture
def integer_impulses():
    """Minimizer jumps by whole units, so exact and gridded states coincide."""
    return make_builtin("impulse1d", {"lam": 1.0, "kappa": 4.0, "W": 4.0, "n_eta": 9})


# -- Game Tree Tests --

@pytest.mark.parametrize("form", [QviForm.L, QviForm.U])
def test_tree_brackets_constant_solution(constant, form):
    grid = build_grid([-2.0], [2.0], [9])
    step = StepParams(h=0.5, grid=grid)
    report = _solve(constant, grid, form, 0.5)
    for x0 in (-1.0, -0.5, 0.0, 0.5, 1.0):
        interval = tree_value(constant, x0, DEPTH, step, form)
        assert interval.contains(interpolate(report.field, x0), slack=1e-8)
        assert interval.padding == pytest.approx(0.5**DEPTH * 2.0)


@pytest.mark.parametrize("form", [QviForm.L, QviForm.U])
def test_tree_brackets_impulse_solution(integer_impulses, form):
    grid = build_grid([-3.0], [3.0], [61])
    step = StepParams(h=0.5, grid=grid)
    report = _solve(integer_impulses, grid, form, 0.5)
    for x0 in (-2.0, -1.0, 0.0, 1.0, 2.0):
        interval = tree_value(integer_impulses, x0, DEPTH, step, form)
        assert interval.contains(interpolate(report.field, x0), slack=1e-8)


def test_tree_value_at_the_jump_region(integer_impulses):
    """From x = 2 the minimizer pays 4 to reach the origin, matching staying put."""
    grid = build_grid([-3.0], [3.0], [61])
    interval = tree_value(integer_impulses, 2.0, DEPTH, StepParams(h=0.5, grid=grid), "U")
    assert interval.contains(4.0)
    assert interval.width < 1.0


def test_tree_depth_zero(constant):
    grid = build_grid([-2.0], [2.0], [9])
    interval = tree_value(constant, 0.0, 0, StepParams(h=0.5, grid=grid), "L")
    assert interval.value == 0.0
    assert interval.hi == pytest.approx(2.0)


def test_tree_budget(integer_impulses):
    grid = build_grid([-3.0], [3.0], [61])
    with pytest.raises(OracleBudgetError):
        tree_value(integer_impulses, 1.0, DEPTH, StepParams(h=0.5, grid=grid), "L", budget=10)


def test_value_interval_order():
    with pytest.raises(ValueError):
        ValueInterval(lo=1.0, hi=0.0, value=0.5, padding=0.5)


# -- Gauss-Seidel Tests --

@pytest.mark.parametrize(
    "name, lo, hi, nodes, form",
    [
        ("constant", [-1.0], [1.0], [21], QviForm.L),
        ("linear1d", [-2.0], [2.0], [41], QviForm.U),
        ("impulse1d", [-3.0], [3.0], [61], QviForm.LMAX),
        ("portfolio", [-2.0, -2.0], [2.0, 2.0], [9, 9], QviForm.U),
    ],
)
def test_gauss_seidel_matches_jacobi(name, lo, hi, nodes, form):
    """Both sweeps reach the same fixed point; lambda h = 0.5 makes each error at most tol."""
    problem = make_builtin(name)
    grid = build_grid(lo, hi, nodes)
    jacobi = _solve(problem, grid, form, 0.5)
    seidel = gauss_seidel_solve(problem, grid, form, TOL, h=0.5)
    assert jacobi.converged
    assert sup_norm_diff(jacobi.field, seidel) <= 2 * (TOL + TOL)
    assert seidel.form_tag == form.value


def test_gauss_seidel_default_step(constant):
    grid = build_grid([-1.0], [1.0], [21])
    field = gauss_seidel_solve(constant, grid, "Umin", 1e-10)
    assert np.max(np.abs(field.values - 2.0)) <= 1e-8


if __name__ == "__main__":
    pytest.main([__file__])
