"""
Tests for the QVI operators: branch values, nesting, monotonicity and the shift bounds.
"""

from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from impulsegame.core.operators import (
    HamiltonianKind,
    Nesting,
    QviForm,
    QviOperator,
    StepParams,
    apply_update,
    auto_step,
    combine,
    hamiltonian,
    hjbi_residual,
    intervene,
    intervention_continuity,
    optimize_table,
    qvi_update,
    sl_value,
)
from impulsegame.core.solver import SolverParams, solve
from impulsegame.grid.field import constant_field, field_from_function
from impulsegame.grid.grid import build_grid
from impulsegame.model.builtins import make_builtin
from impulsegame.utils.errors import GridError, ProblemError

NODES = 21
FORMS = list(QviForm)


@lru_cache(maxsize=None)
def _operator(name: str, form: QviForm) -> QviOperator:
    """Operators on a 21-node grid, built once per problem and form."""
    problem = make_builtin(name)
    grid = build_grid([-2.0], [2.0], [NODES])
    return QviOperator(problem, grid, form, auto_step(problem, grid))


# -- Test fixtures --

@pytest.fixture
def constant():
    return make_builtin("constant", {"f0": 2.0, "lam": 1.0, "kappa": 1.0})


@pytest.fixture
def grid():
    return build_grid([-1.0], [1.0], [21])


@pytest.fixture
def step(grid):
    return StepParams(h=0.1, grid=grid)


@pytest.fixture(scope="module")
def impulse_solve():
    """Converged upper solve of the impulse game on 61 nodes with the automatic step."""
    problem = make_builtin("impulse1d", {"lam": 1.0, "kappa": 4.0})
    grid = build_grid([-3.0], [3.0], [61])
    report = solve(problem, grid, "U", SolverParams(step=StepParams(h=auto_step(problem, grid), grid=grid)))
    return problem, grid, report


# -- Forms and Steps --

def test_form_parts():
    assert QviForm.L.hamiltonian is HamiltonianKind.LOWER
    assert QviForm.L.nesting is Nesting.MIN_OUTER
    assert QviForm.U.hamiltonian is HamiltonianKind.UPPER
    assert QviForm.U.nesting is Nesting.MAX_OUTER
    assert QviForm.LMAX.nesting is Nesting.MAX_OUTER
    assert QviForm.UMIN.nesting is Nesting.MIN_OUTER
    assert QviForm.from_parts("upper", "min_outer") is QviForm.UMIN


def test_combine_nesting():
    s, m, n = np.array([5.0, 0.0, 2.0]), np.array([1.0, 1.0, 3.0]), np.array([3.0, 3.0, 1.0])
    # min-outer: max(min(S, N), M)
    assert np.array_equal(combine(QviForm.L, s, m, n), [3.0, 1.0, 3.0])
    # max-outer: min(max(S, M), N)
    assert np.array_equal(combine(QviForm.U, s, m, n), [3.0, 1.0, 1.0])


def test_step_must_keep_discounting(constant, grid):
    with pytest.raises(ProblemError, match="lambda\\*h"):
        StepParams(h=1.0, grid=grid).check(constant)
    with pytest.raises(ValueError):
        StepParams(h=-0.1, grid=grid)


def test_auto_step(constant, grid):
    """No drift: one cell per step."""
    assert auto_step(constant, grid) == pytest.approx(0.1)
    linear = make_builtin("linear1d")
    # |a + b| <= 2
    assert auto_step(linear, grid) == pytest.approx(0.05)
    slow_discount = make_builtin("constant", {"lam": 10.0})
    assert auto_step(slow_discount, grid) == pytest.approx(0.05)


# -- Branches --

def test_optimize_table_orders_lower_below_upper():
    """Matching pennies: max-min is -1, min-max is +1."""
    table = np.array([[1.0, -1.0], [-1.0, 1.0]])[:, :, None]
    lower, _, _ = optimize_table(table, HamiltonianKind.LOWER)
    upper, _, _ = optimize_table(table, "upper")
    assert lower[0] == -1.0
    assert upper[0] == 1.0


def test_branches_on_a_constant_field(constant, grid, step):
    field = constant_field(grid, 1.5)
    value, controls = sl_value(field, constant, [0.3], step, "lower")
    assert value == pytest.approx(0.1 * 2.0 + 0.9 * 1.5)
    assert (controls.a, controls.b) == (0, 0)

    m, arg_xi = intervene(field, constant, [0.3], "xi")
    n, arg_eta = intervene(field, constant, [0.3], "eta")
    assert m == pytest.approx(0.5)
    assert n == pytest.approx(2.5)
    assert arg_xi == 0 and arg_eta == 0
    with pytest.raises(ProblemError, match="player"):
        intervene(field, constant, [0.3], "zeta")


def test_lower_branch_sits_below_the_upper_one():
    """On v = x^2 at the origin the maximizer moving first can always be undone; the reverse cannot."""
    problem = make_builtin("linear1d")
    grid = build_grid([-2.0], [2.0], [41])
    field = field_from_function(grid, lambda x: x[:, 0] ** 2)
    step = StepParams(h=0.1, grid=grid)
    lower, _ = sl_value(field, problem, [0.0], step, "lower")
    upper, _ = sl_value(field, problem, [0.0], step, "upper")
    assert lower == pytest.approx(0.0, abs=1e-12)
    assert upper == pytest.approx(0.9 * 0.01, abs=1e-12)
    assert lower <= upper


def test_point_update_matches_sweep(grid, step):
    problem = make_builtin("impulse1d")
    field = field_from_function(grid, lambda x: np.cos(3 * x[:, 0]))
    swept = apply_update(field, problem, "U", step)
    for i in (0, 7, 20):
        x = grid.node(i)
        assert qvi_update(field, problem, x, "U", step) == swept.values[i]


def test_row_slices_match_full_apply():
    operator = _operator("linear1d", QviForm.L)
    values = np.sin(np.linspace(0.0, 3.0, NODES))
    full = operator.apply(values)
    assert np.array_equal(operator.apply(values, slice(4, 11)), full[4:11])
    branches = operator.branches(values)
    assert np.array_equal(branches.value, full)


def test_separated_hamiltonian_satisfies_isaacs():
    """For drift a + b the lower and upper Hamiltonians coincide exactly."""
    problem = make_builtin("linear1d")
    rng = np.random.default_rng(5)
    points = rng.uniform(-2.0, 2.0, size=(64, 1))
    grads = rng.normal(scale=3.0, size=(64, 1))
    lower = hamiltonian(problem, points, grads, HamiltonianKind.LOWER)
    upper = hamiltonian(problem, points, grads, HamiltonianKind.UPPER)
    assert np.array_equal(lower, upper)
    # -(x^2 + min_b max_a p (a + b)) = -x^2 for the symmetric control sets
    assert np.allclose(lower, -points[:, 0] ** 2)


# -- Monotonicity and Shift Bounds --

@pytest.mark.parametrize("name", ["linear1d", "impulse1d"])
@pytest.mark.parametrize("form", FORMS)
@settings(max_examples=100, deadline=None)
@given(
    base=arrays(np.float64, NODES, elements=st.floats(min_value=-10.0, max_value=10.0)),
    bump=arrays(np.float64, NODES, elements=st.floats(min_value=0.0, max_value=5.0)),
)
def test_update_is_monotone(name, form, base, bump):
    """f1 <= f2 nodewise implies T f1 <= T f2 nodewise."""
    operator = _operator(name, form)
    lower, upper = base, base + bump
    assert np.all(operator.apply(lower) <= operator.apply(upper))


@pytest.mark.parametrize("name", ["linear1d", "impulse1d"])
@pytest.mark.parametrize("form", FORMS)
@settings(max_examples=100, deadline=None)
@given(
    base=arrays(np.float64, NODES, elements=st.floats(min_value=-10.0, max_value=10.0)),
    k=st.sampled_from([0.1, 1.0, 10.0]),
)
def test_update_shift_bounds(name, form, base, k):
    """(1 - lambda h) k <= T(f + k) - T f <= k."""
    operator = _operator(name, form)
    beta = 1.0 - operator.problem.discount * operator.h
    diff = operator.apply(base + k) - operator.apply(base)
    assert np.all(diff >= beta * k - 1e-12)
    assert np.all(diff <= k + 1e-12)


# -- Residuals and Continuity --

@pytest.mark.parametrize("form", FORMS)
def test_constant_solution_has_zero_residual(constant, grid, form):
    residual = hjbi_residual(constant_field(grid, 2.0), constant, form)
    assert residual.sup_norm() == 0.0


@pytest.mark.parametrize("form", FORMS)
def test_zero_field_is_a_strict_subsolution(constant, grid, form):
    """With f0 = 2 the zero field sits below every branch: the residual is -1 everywhere."""
    residual = hjbi_residual(constant_field(grid, 0.0), constant, form)
    assert np.all(residual.values < 0.0)
    assert np.allclose(residual.values, -1.0)


@pytest.mark.parametrize("form", [QviForm.L, QviForm.U])
def test_converged_impulse_game_has_a_small_residual(impulse_solve, form):
    problem, grid, _ = impulse_solve
    report = solve(problem, grid, form, SolverParams(step=StepParams(h=auto_step(problem, grid), grid=grid)))
    assert hjbi_residual(report.field, problem, form).sup_norm() <= 1e-6


def test_residual_needs_three_nodes(constant):
    tiny = build_grid([-1.0], [1.0], [2])
    with pytest.raises(GridError, match="3 nodes"):
        hjbi_residual(constant_field(tiny, 2.0), constant, "L")


def test_intervention_continuity(constant, grid):
    report = intervention_continuity(field_from_function(grid, lambda x: x[:, 0]), constant)
    for player in ("xi", "eta"):
        assert report[player]["bound"] == pytest.approx(1.0)
        assert report[player]["ok"]


def test_intervention_continuity_on_converged_fields(impulse_solve):
    """Translation jumps with constant costs keep M v and N v within the seminorm of v."""
    problem, _, report = impulse_solve
    portfolio = make_builtin("portfolio")
    plane = build_grid([-2.0, -2.0], [2.0, 2.0], [9, 9])
    params = SolverParams(step=StepParams(h=auto_step(portfolio, plane), grid=plane), tol_fix=1e-9)
    cases = [(report.field, problem), (solve(portfolio, plane, "U", params).field, portfolio)]
    for field, game in cases:
        continuity = intervention_continuity(field, game)
        for player in ("xi", "eta"):
            assert continuity[player]["ok"] is True


if __name__ == "__main__":
    pytest.main([__file__])
