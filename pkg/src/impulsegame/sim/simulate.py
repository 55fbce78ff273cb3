"""
Forward simulation of the controlled system under a feedback policy.

Each time step first resolves impulses at the current instant (the
minimizer's impulse takes precedence whenever its obstacle is active, and
maximizer jumps already made at that instant are undone if the minimizer
asks to jump afterwards), then takes one explicit Euler step of the flow.
The discounted payoff is accumulated term by term so it can be recomputed
from the record.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from impulsegame.core.solver import gain_sup
from impulsegame.grid.field import CSV_FLOAT_FORMAT
from impulsegame.model.problem import ControlPair, ProblemSpec
from impulsegame.sim.policy import Decision, NodeDecision, PolicyField
from impulsegame.utils.errors import GridError, ImpulseLoopError
from impulsegame.utils.logging import get_logger

logger = get_logger(__name__)

DEFAULT_MAX_CONSECUTIVE_IMPULSES = 10


class ImpulseEvent(BaseModel):
    """One instantaneous jump."""

    t: float
    player: str
    action: int
    displacement: List[float]
    cost: float
    discounted_cost: float


class TrajectoryRecord(BaseModel):
    """
    A simulated trajectory with its impulse events and discounted payoff.

    ``states`` holds one row per recorded instant: the initial state, the
    state after every impulse (same time stamp) and the state after every
    flow step. ``events`` names what produced each row.
    """

    x0: List[float]
    horizon: float
    h: float
    discount: float
    times: List[float] = Field(default_factory=list)
    states: List[List[float]] = Field(default_factory=list)
    events: List[str] = Field(default_factory=list)
    running_payoff: List[float] = Field(default_factory=list)
    impulses: List[ImpulseEvent] = Field(default_factory=list)
    controls: List[ControlPair] = Field(default_factory=list)
    integral_term: float = 0.0
    payoff: float = 0.0
    truncation_error_bound: float = 0.0
    truncated: bool = False

    def record(self, t: float, state: np.ndarray, event: str) -> None:
        self.times.append(float(t))
        self.states.append([float(c) for c in state])
        self.events.append(event)
        self.running_payoff.append(self.payoff)

    def rollback(self, rows: int, impulses: int, payoff: float) -> None:
        """Drop every row and impulse recorded after the given counts and restore the payoff."""
        del self.times[rows:], self.states[rows:], self.events[rows:], self.running_payoff[rows:]
        del self.impulses[impulses:]
        self.payoff = payoff

    def recompute_payoff(self) -> float:
        """Integral term minus discounted maximizer costs plus discounted minimizer costs."""
        total = self.integral_term
        for event in self.impulses:
            weight = np.exp(-self.discount * event.t)
            total += event.cost * weight if event.player == "eta" else -event.cost * weight
        return float(total)

    def impulse_times(self, player: Optional[str] = None) -> List[float]:
        return [e.t for e in self.impulses if player is None or e.player == player]

    def final_state(self) -> List[float]:
        return self.states[-1]

    def summary(self) -> Dict[str, Any]:
        """JSON-ready summary of the run."""
        return {
            "x0": self.x0,
            "horizon": self.horizon,
            "h": self.h,
            "steps": self.events.count("flow"),
            "payoff": self.payoff,
            "integral_term": self.integral_term,
            "impulses": [e.dict() for e in self.impulses],
            "truncation_error_bound": self.truncation_error_bound,
            "truncated": self.truncated,
            "final_state": self.final_state(),
        }


def _choose_impulse(decision: NodeDecision) -> Optional[Tuple[str, int]]:
    """The impulse to apply at a node, if any; the minimizer wins whenever its obstacle is active."""
    if decision.decision is Decision.IMPULSE_ETA:
        return "eta", decision.eta_action
    if decision.decision is Decision.IMPULSE_XI:
        if decision.eta_active:
            logger.debug(f"node {decision.node}: both players impulse, applying eta only")
            return "eta", decision.eta_action
        return "xi", decision.xi_action
    return None


def _escaped(policy: PolicyField, y: np.ndarray) -> bool:
    grid = policy.grid
    margin = grid.spacing
    return bool(np.any(y < grid.lo_array - margin) or np.any(y > grid.hi_array + margin))


def _steps(horizon: float, h: float) -> int:
    if not h > 0 or not horizon >= 0:
        raise ValueError(f"need h > 0 and horizon >= 0, got h={h}, horizon={horizon}")
    steps = int(round(horizon / h))
    if abs(steps * h - horizon) > 1e-9 * max(horizon, 1.0):
        raise ValueError(f"horizon {horizon} is not a multiple of the step {h}")
    return steps


def simulate(
    problem: ProblemSpec,
    policy: PolicyField,
    x0: Union[float, Sequence[float]],
    horizon: float,
    h: float,
    max_consecutive_impulses: int = DEFAULT_MAX_CONSECUTIVE_IMPULSES,
) -> TrajectoryRecord:
    """
    Simulate the system from ``x0`` under ``policy`` for ``horizon`` seconds.

    Args:
        problem: The game instance
        policy: Feedback policy, looked up at the nearest node
        x0: Initial state inside the grid box
        horizon: Simulated time, a multiple of ``h``
        h: Euler step
        max_consecutive_impulses: Impulses allowed at a single instant

    Returns:
        TrajectoryRecord: States, impulses and the discounted payoff

    Raises:
        GridError: If ``x0`` lies outside the box
        ImpulseLoopError: If more than ``max_consecutive_impulses`` impulses
            are requested at one instant
    """
    y = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    if y.shape != (policy.grid.dim,) or not bool(policy.grid.contains(y)[0]):
        raise GridError(f"initial state {y.tolist()} is not inside {policy.grid!r}")
    steps = _steps(horizon, h)
    lam = problem.discount

    record = TrajectoryRecord(x0=y.tolist(), horizon=horizon, h=h, discount=lam)
    record.record(0.0, y, "start")

    for i in range(steps):
        t = i * h
        weight = float(np.exp(-lam * t))

        # one player owns each instant; eta takes it over from xi
        owner: Optional[str] = None
        start_state, start_payoff = y.copy(), record.payoff
        start_rows, start_impulses = len(record.times), len(record.impulses)
        count = 0
        while True:
            impulse = _choose_impulse(policy.lookup(y))
            if impulse is None:
                break
            if owner == "eta" and impulse[0] == "xi":
                logger.warning(f"t={t:.6g}: xi-impulse suppressed after an eta-impulse at the same instant")
                break
            if owner == "xi" and impulse[0] == "eta":
                dropped = len(record.impulses) - start_impulses
                logger.warning(f"t={t:.6g}: {dropped} xi-impulse(s) rolled back for an eta-impulse at the same instant")
                record.rollback(start_rows, start_impulses, start_payoff)
                y = start_state.copy()
                impulse = ("eta", policy.lookup(y).eta_action)
                count = 0
            if count == max_consecutive_impulses:
                raise ImpulseLoopError(
                    f"more than {max_consecutive_impulses} impulses requested at t={t:.6g} (state {y.tolist()})"
                )
            player, action = impulse
            owner = player
            point = y[None, :]
            jump = problem.jump_at(point, player, action)[0]
            cost = float(problem.cost_at(point, player, action)[0])
            y = y + jump
            record.payoff += cost * weight if player == "eta" else -cost * weight
            record.impulses.append(
                ImpulseEvent(
                    t=t,
                    player=player,
                    action=action,
                    displacement=jump.tolist(),
                    cost=cost,
                    discounted_cost=cost * weight,
                )
            )
            record.record(t, y, player)
            logger.debug(f"t={t:.4g}: {player}-impulse {action} to {y.tolist()} (cost {cost:.4g})")
            count += 1

        controls = policy.lookup(y).controls
        point = y[None, :]
        gain = float(problem.gain_at(point, controls.a, controls.b)[0])
        term = h * gain * weight
        record.integral_term += term
        record.payoff += term
        record.controls.append(controls)
        y = y + h * problem.drift_at(point, controls.a, controls.b)[0]
        record.record(t + h, y, "flow")

        if _escaped(policy, y):
            record.truncated = True
            logger.warning(f"trajectory left the box by more than one cell at t={t + h:.6g}; truncated")
            break

    elapsed = record.times[-1]
    record.truncation_error_bound = float(np.exp(-lam * elapsed) * gain_sup(problem, policy.grid) / lam)
    logger.info(
        f"Simulated {problem.name} from {record.x0} over {elapsed:.6g}s: payoff {record.payoff:.6g}, "
        f"{len(record.impulses)} impulses"
    )
    return record


def replay(problem: ProblemSpec, record: TrajectoryRecord, x0: Union[float, Sequence[float]]) -> TrajectoryRecord:
    """
    Re-run the decision sequence of ``record`` from another initial state.

    Impulses (player, action, time) and the control pair of every flow step are
    taken from ``record``; only the state evolution is recomputed.
    """
    y = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    lam, h = record.discount, record.h
    out = TrajectoryRecord(x0=y.tolist(), horizon=record.horizon, h=h, discount=lam)
    out.record(0.0, y, "start")

    pending = list(record.impulses)
    for i, controls in enumerate(record.controls):
        t = i * h
        weight = float(np.exp(-lam * t))
        while pending and abs(pending[0].t - t) <= 1e-12:
            event = pending.pop(0)
            point = y[None, :]
            jump = problem.jump_at(point, event.player, event.action)[0]
            cost = float(problem.cost_at(point, event.player, event.action)[0])
            y = y + jump
            out.payoff += cost * weight if event.player == "eta" else -cost * weight
            out.impulses.append(
                ImpulseEvent(
                    t=t,
                    player=event.player,
                    action=event.action,
                    displacement=jump.tolist(),
                    cost=cost,
                    discounted_cost=cost * weight,
                )
            )
            out.record(t, y, event.player)
        point = y[None, :]
        term = h * float(problem.gain_at(point, controls.a, controls.b)[0]) * weight
        out.integral_term += term
        out.payoff += term
        out.controls.append(controls)
        y = y + h * problem.drift_at(point, controls.a, controls.b)[0]
        out.record(t + h, y, "flow")
    return out


def write_trajectory_csv(record: TrajectoryRecord, path: Union[str, Path]) -> Path:
    """Write ``t, x0..x{n-1}, event, payoff`` with one row per recorded instant."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    states = np.array(record.states)
    frame = pd.DataFrame({"t": record.times})
    for i in range(states.shape[1]):
        frame[f"x{i}"] = states[:, i]
    frame["event"] = record.events
    frame["payoff"] = record.running_payoff
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return path


def write_trajectory_summary(record: TrajectoryRecord, path: Union[str, Path], extra: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {**record.summary(), **(extra or {})}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path
