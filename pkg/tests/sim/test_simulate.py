"""
Tests for feedback policies and forward simulation.
"""

import logging

import numpy as np
import pandas as pd
import pytest

from impulsegame.core.operators import QviForm, StepParams, auto_step
from impulsegame.core.solver import SolveReport, SolverParams, solve
from impulsegame.grid.field import interpolate, make_field
from impulsegame.grid.grid import build_grid
from impulsegame.model.builtins import make_builtin
from impulsegame.sim.policy import Decision, PolicyField, extract_policy, write_policy_csv
from impulsegame.sim.simulate import replay, simulate, write_trajectory_csv, write_trajectory_summary
from impulsegame.utils.errors import GridError, ImpulseLoopError, NotConvergedError


def _hand_policy(grid, decision, eta_action=None, eta_active=None, xi_action=None, ctrl=0):
    """A policy built node by node; unspecified entries are zero / inactive."""
    size = grid.size
    return PolicyField(
        grid=grid,
        form=QviForm.L,
        decision=np.array(decision, dtype=np.int8),
        ctrl_a=np.full(size, ctrl),
        ctrl_b=np.full(size, ctrl),
        xi_action=np.array(xi_action if xi_action is not None else np.zeros(size), dtype=int),
        eta_action=np.array(eta_action if eta_action is not None else np.zeros(size), dtype=int),
        xi_active=np.zeros(size, dtype=bool),
        eta_active=np.array(eta_active if eta_active is not None else np.zeros(size), dtype=bool),
    )


# -- Test fixtures --

@pytest.fixture(scope="module")
def impulse_game():
    """Converged upper solve of the impulse game on the standard grid, with its policy."""
    problem = make_builtin("impulse1d", {"lam": 1.0, "kappa": 4.0})
    grid = build_grid([-3.0], [3.0], [241])
    step = StepParams(h=0.1, grid=grid)
    report = solve(problem, grid, "U", SolverParams(step=step, tol_fix=1e-10))
    return problem, report, extract_policy(report, problem, step)


@pytest.fixture
def unit_jumps():
    """Constant game with unit jumps on five nodes of [-2, 2]."""
    problem = make_builtin("constant", {"f0": 0.0, "lam": 1.0, "kappa": 1.0, "jump": 1.0})
    return problem, build_grid([-2.0], [2.0], [5])


# -- Policy Tests --

def test_policy_counts(impulse_game):
    _, _, policy = impulse_game
    counts = policy.counts()
    assert sum(counts.values()) == policy.grid.size
    # only the minimizer ever jumps, and only beyond |x| = 2
    assert counts[Decision.IMPULSE_XI.value] == 0
    assert counts[Decision.IMPULSE_ETA.value] > 0


def test_policy_at_the_boundary(impulse_game):
    problem, _, policy = impulse_game
    decision = policy.lookup([3.0])
    assert decision.decision is Decision.IMPULSE_ETA
    assert problem.impulse_set_eta[decision.eta_action, 0] == -3.0
    assert decision.eta_active
    assert policy.lookup([0.5]).decision is Decision.CONTINUOUS


def test_policy_needs_a_converged_report(unit_jumps):
    problem, grid = unit_jumps
    report = SolveReport(
        problem=problem.name,
        form=QviForm.L,
        field=make_field(grid, np.zeros(5)),
        iterations=1,
        residual_history=[1.0],
        converged=False,
        wall_time=0.0,
        h=0.1,
        discount=1.0,
        tol_fix=1e-10,
    )
    with pytest.raises(NotConvergedError):
        extract_policy(report, problem, StepParams(h=0.1, grid=grid))


def test_write_policy_csv(impulse_game, tmp_path):
    problem, _, policy = impulse_game
    path = write_policy_csv(policy, problem, tmp_path / "policy_U.csv")
    frame = pd.read_csv(path)
    assert len(frame) == policy.grid.size
    assert list(frame.columns[:2]) == ["x0", "decision"]
    assert set(frame["decision"]) <= {d.value for d in Decision}


# -- Payoff Consistency --

@pytest.mark.parametrize("x0", [0.5, 1.0, 3.0])
def test_payoff_matches_the_value_field(impulse_game, x0):
    problem, report, policy = impulse_game
    record = simulate(problem, policy, [x0], horizon=20.0, h=0.01)
    assert abs(record.payoff - interpolate(report.field, x0)) <= 0.1
    assert record.recompute_payoff() == pytest.approx(record.payoff, abs=1e-9)
    assert record.events.count("flow") == 2000
    assert not record.truncated


def test_single_impulse_from_the_boundary(impulse_game):
    problem, _, policy = impulse_game
    record = simulate(problem, policy, [3.0], horizon=20.0, h=0.01)
    assert len(record.impulses) == 1
    event = record.impulses[0]
    assert (event.t, event.player, event.displacement) == (0.0, "eta", [-3.0])
    assert event.cost == 4.0
    assert record.impulse_times("xi") == []
    assert record.final_state() == [0.0]


def test_no_impulse_inside_the_continuation_region(impulse_game):
    problem, _, policy = impulse_game
    record = simulate(problem, policy, [1.0], horizon=20.0, h=0.01)
    assert record.impulses == []
    assert record.payoff == pytest.approx(record.integral_term)


def test_replay_reproduces_the_payoff(impulse_game):
    problem, _, policy = impulse_game
    record = simulate(problem, policy, [3.0], horizon=5.0, h=0.01)
    again = replay(problem, record, [3.0])
    assert again.payoff == pytest.approx(record.payoff, abs=1e-12)
    assert again.states == record.states


def test_constant_gain_payoff():
    """With a constant gain the payoff is the discounted rectangle sum of f0."""
    problem = make_builtin("constant", {"f0": 2.0, "lam": 1.0, "kappa": 1.0})
    grid = build_grid([-1.0], [1.0], [21])
    policy = _hand_policy(grid, decision=[0] * 21)
    horizon, h = 5.0, 0.01
    record = simulate(problem, policy, [0.5], horizon=horizon, h=h)

    riemann = 2.0 * h * (1.0 - np.exp(-horizon)) / (1.0 - np.exp(-h))
    assert record.payoff == pytest.approx(riemann, rel=1e-9)
    assert record.payoff == pytest.approx(2.0 * (1.0 - np.exp(-horizon)), rel=1e-2)
    assert record.final_state() == [0.5]


def test_nearby_starts_stay_close():
    """Replaying one decision sequence from a shifted start keeps the gap within exp(C t) of the shift."""
    problem = make_builtin("portfolio")
    grid = build_grid([-2.0, -2.0], [2.0, 2.0], [11, 11])
    step = StepParams(h=auto_step(problem, grid), grid=grid)
    report = solve(problem, grid, "U", SolverParams(step=step, tol_fix=1e-8))
    policy = extract_policy(report, problem, step)

    x0 = np.array([1.0, -1.0])
    shift = np.array([0.01, -0.02])
    record = simulate(problem, policy, x0.tolist(), horizon=2.0, h=0.01)
    shifted = replay(problem, record, (x0 + shift).tolist())

    rate = problem.lipschitz_hints.drift
    assert len(shifted.states) == len(record.states)
    for t, a, b in zip(record.times, record.states, shifted.states):
        gap = np.max(np.abs(np.array(b) - np.array(a)))
        assert gap <= np.exp(rate * t) * np.max(np.abs(shift)) + 1e-12


def test_truncation_error_bound(impulse_game):
    problem, _, policy = impulse_game
    record = simulate(problem, policy, [1.0], horizon=2.0, h=0.01)
    assert record.truncation_error_bound == pytest.approx(np.exp(-2.0) * 9.0)


# -- Priority Rule --

def test_minimizer_impulse_wins_a_tie(unit_jumps):
    """Both obstacles bind at the origin; the policy picks the minimizer's jump to -1."""
    problem, grid = unit_jumps
    report = SolveReport(
        problem=problem.name,
        form=QviForm.L,
        field=make_field(grid, [0.0, 0.0, 1.0, 2.0, 2.0]),
        iterations=1,
        residual_history=[0.0],
        converged=True,
        wall_time=0.0,
        h=0.1,
        discount=1.0,
        tol_fix=1e-10,
    )
    policy = extract_policy(report, problem, StepParams(h=0.1, grid=grid))
    origin = policy.at_node(2)
    assert origin.decision is Decision.IMPULSE_ETA
    assert origin.xi_active and origin.eta_active
    assert origin.eta_action == 1

    record = simulate(problem, policy, [0.0], horizon=0.1, h=0.1)
    assert [(e.player, e.displacement) for e in record.impulses] == [("eta", [-1.0])]
    assert record.final_state() == [-1.0]
    assert record.payoff == 1.0


def test_maximizer_decision_yields_to_an_active_minimizer(unit_jumps):
    problem, grid = unit_jumps
    policy = _hand_policy(
        grid,
        decision=[0, 0, 2, 0, 0],
        eta_action=[0, 0, 1, 0, 0],
        eta_active=[False, False, True, False, False],
    )
    record = simulate(problem, policy, [0.0], horizon=0.2, h=0.1)
    assert [e.player for e in record.impulses] == ["eta"]
    assert record.events[:2] == ["start", "eta"]


def test_other_player_is_suppressed_within_an_instant(unit_jumps, caplog):
    """After the minimizer jumps, a maximizer impulse at the same time stamp is dropped."""
    problem, grid = unit_jumps
    policy = _hand_policy(grid, decision=[0, 2, 1, 0, 0], eta_action=[0, 0, 1, 0, 0])
    with caplog.at_level(logging.WARNING):
        record = simulate(problem, policy, [0.0], horizon=0.1, h=0.1)
    assert [e.player for e in record.impulses] == ["eta"]
    assert "suppressed" in caplog.text


def test_minimizer_takes_over_an_instant_the_maximizer_opened(unit_jumps, caplog):
    """The maximizer jumps to +1 first; the minimizer's request there undoes it and jumps from the origin."""
    problem, grid = unit_jumps
    policy = _hand_policy(
        grid,
        decision=[0, 0, 2, 1, 0],
        xi_action=[0, 0, 0, 0, 0],
        eta_action=[0, 0, 1, 0, 0],
    )
    with caplog.at_level(logging.WARNING):
        record = simulate(problem, policy, [0.0], horizon=0.1, h=0.1)
    assert [(e.t, e.player, e.displacement) for e in record.impulses] == [(0.0, "eta", [-1.0])]
    assert record.final_state() == [-1.0]
    assert record.events == ["start", "eta", "flow"]
    assert record.payoff == 1.0
    assert record.recompute_payoff() == record.payoff
    assert "rolled back" in caplog.text


def test_impulse_loop_guard(unit_jumps):
    """Two nodes sending the state back and forth at one instant."""
    problem, grid = unit_jumps
    policy = _hand_policy(grid, decision=[0, 1, 1, 0, 0], eta_action=[0, 0, 1, 0, 0])
    with pytest.raises(ImpulseLoopError):
        simulate(problem, policy, [0.0], horizon=0.1, h=0.1, max_consecutive_impulses=10)


# -- Simulation Edge Cases --

def test_initial_state_outside_the_box(impulse_game):
    problem, _, policy = impulse_game
    with pytest.raises(GridError):
        simulate(problem, policy, [3.5], horizon=1.0, h=0.01)


def test_horizon_must_be_a_multiple_of_the_step(impulse_game):
    problem, _, policy = impulse_game
    with pytest.raises(ValueError, match="multiple"):
        simulate(problem, policy, [1.0], horizon=1.005, h=0.01)


def test_leaving_the_box_truncates():
    """Both players push right at full speed."""
    problem = make_builtin("linear1d")
    grid = build_grid([-1.0], [1.0], [5])
    policy = _hand_policy(grid, decision=[0] * 5, ctrl=2)
    record = simulate(problem, policy, [0.8], horizon=5.0, h=0.1)
    assert record.truncated
    assert record.times[-1] == pytest.approx(0.4)


def test_trajectory_artifacts(impulse_game, tmp_path):
    problem, _, policy = impulse_game
    record = simulate(problem, policy, [3.0], horizon=1.0, h=0.01)
    csv_path = write_trajectory_csv(record, tmp_path / "trajectory.csv")
    frame = pd.read_csv(csv_path)
    assert list(frame.columns) == ["t", "x0", "event", "payoff"]
    assert len(frame) == len(record.times)
    assert list(frame["event"][:2]) == ["start", "eta"]

    json_path = write_trajectory_summary(record, tmp_path / "trajectory.json", {"form": "U"})
    text = json_path.read_text()
    assert '"form": "U"' in text
    assert '"truncated": false' in text


if __name__ == "__main__":
    pytest.main([__file__])
