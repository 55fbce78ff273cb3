"""
Game instance definition.

A ``ProblemSpec`` bundles every function and set of the controlled system:
the drift ``b``, the running gain ``f``, the two jump maps ``g_xi`` / ``g_eta``,
the two impulse costs ``c`` / ``chi``, sampled continuous control sets for both
players, truncated impulse candidate sets, and the discount rate.

Player-xi maximizes the payoff and pays ``c`` for each impulse; player-eta
minimizes it and pays ``chi``. All callables are vectorized over states:

- ``drift(x, a, b)`` maps states ``(P, n)`` and one control vector per player
  to velocities ``(P, n)``
- ``gain(x, a, b)`` returns ``(P,)``
- ``jump_xi(x, xi)`` / ``jump_eta(x, eta)`` return displacements ``(P, n)``
- ``cost_xi(x, xi)`` / ``cost_eta(x, eta)`` return ``(P,)``
"""

from enum import Enum
from typing import Any, Callable, Dict, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, validator

from impulsegame.utils.errors import ProblemError
from impulsegame.utils.logging import get_logger

logger = get_logger(__name__)

DriftFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
GainFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
JumpFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
CostFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


class Component(str, Enum):
    """Evaluable components of a game instance."""

    DRIFT = "drift"
    GAIN = "gain"
    JUMP_XI = "jump_xi"
    JUMP_ETA = "jump_eta"
    COST_XI = "cost_xi"
    COST_ETA = "cost_eta"


class LipschitzHints(BaseModel):
    """Optional Lipschitz constants in the state variable, used for step heuristics and checks."""

    drift: Optional[float] = None
    gain: Optional[float] = None
    jump_xi: Optional[float] = None
    jump_eta: Optional[float] = None
    cost_xi: Optional[float] = None
    cost_eta: Optional[float] = None

    class Config:
        frozen = True


class ControlPair(BaseModel):
    """Indices of a continuous control pair (theta_1 for player-xi, theta_2 for player-eta)."""

    a: int
    b: int

    class Config:
        frozen = True

    @validator("a", "b")
    def validate_index(cls, v: int) -> int:
        """Indices are non-negative; the upper bound is checked against a problem."""
        if v < 0:
            raise ValueError(f"control index must be non-negative, got {v}")
        return v


def _as_point_set(v: Any) -> np.ndarray:
    arr = np.array(v, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("a control or impulse set must be a non-empty list of points")
    if not np.all(np.isfinite(arr)):
        raise ValueError("control and impulse sets must be finite")
    arr.flags.writeable = False
    return arr


class ProblemSpec(BaseModel):
    """
    Full description of a two-player zero-sum game with continuous and impulse controls.

    Instances are immutable and every evaluation is pure, so a single problem can
    be shared between concurrent sweeps and simulations.
    """

    name: str = "custom"
    dim: int
    drift: DriftFn
    gain: GainFn
    jump_xi: JumpFn
    jump_eta: JumpFn
    cost_xi: CostFn
    cost_eta: CostFn
    ctrl_set_a: np.ndarray
    ctrl_set_b: np.ndarray
    impulse_set_xi: np.ndarray
    impulse_set_eta: np.ndarray
    discount: float
    lipschitz_hints: LipschitzHints = Field(default_factory=LipschitzHints)
    params: Dict[str, float] = Field(default_factory=dict)

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @validator("dim")
    def validate_dim(cls, v: int) -> int:
        """State dimension must be a positive integer."""
        if v < 1:
            raise ValueError(f"state dimension must be positive, got {v}")
        return v

    @validator("discount")
    def validate_discount(cls, v: float) -> float:
        """The discount rate lambda must be strictly positive."""
        if not np.isfinite(v) or v <= 0:
            raise ValueError(f"discount must be > 0, got {v}")
        return float(v)

    @validator("ctrl_set_a", "ctrl_set_b", "impulse_set_xi", "impulse_set_eta", pre=True)
    def validate_point_set(cls, v: Any) -> np.ndarray:
        """Convert candidate lists to read-only ``(count, dim)`` arrays."""
        return _as_point_set(v)

    # -- Sizes --

    @property
    def n_ctrl_a(self) -> int:
        return self.ctrl_set_a.shape[0]

    @property
    def n_ctrl_b(self) -> int:
        return self.ctrl_set_b.shape[0]

    @property
    def n_xi(self) -> int:
        return self.impulse_set_xi.shape[0]

    @property
    def n_eta(self) -> int:
        return self.impulse_set_eta.shape[0]

    # -- Batched evaluation over a set of states --

    def drift_at(self, points: np.ndarray, ia: int, ib: int) -> np.ndarray:
        """Velocities ``(P, n)`` for control pair ``(ia, ib)`` at ``points``."""
        out = self.drift(points, self.ctrl_set_a[ia], self.ctrl_set_b[ib])
        return np.broadcast_to(np.asarray(out, dtype=float), (points.shape[0], self.dim))

    def gain_at(self, points: np.ndarray, ia: int, ib: int) -> np.ndarray:
        """Running gain ``(P,)`` for control pair ``(ia, ib)`` at ``points``."""
        out = self.gain(points, self.ctrl_set_a[ia], self.ctrl_set_b[ib])
        return np.broadcast_to(np.asarray(out, dtype=float), (points.shape[0],))

    def jump_at(self, points: np.ndarray, player: str, k: int) -> np.ndarray:
        """Jump displacements ``(P, n)`` of impulse ``k`` of ``player`` ('xi' or 'eta')."""
        if player == "xi":
            out = self.jump_xi(points, self.impulse_set_xi[k])
        else:
            out = self.jump_eta(points, self.impulse_set_eta[k])
        return np.broadcast_to(np.asarray(out, dtype=float), (points.shape[0], self.dim))

    def cost_at(self, points: np.ndarray, player: str, k: int) -> np.ndarray:
        """Impulse costs ``(P,)`` of impulse ``k`` of ``player`` ('xi' or 'eta')."""
        if player == "xi":
            out = self.cost_xi(points, self.impulse_set_xi[k])
        else:
            out = self.cost_eta(points, self.impulse_set_eta[k])
        return np.broadcast_to(np.asarray(out, dtype=float), (points.shape[0],))

    def gain_table(self, points: np.ndarray) -> np.ndarray:
        """Running gain for every control pair, shape ``(nA, nB, P)``."""
        return np.stack(
            [
                np.stack([self.gain_at(points, ia, ib) for ib in range(self.n_ctrl_b)])
                for ia in range(self.n_ctrl_a)
            ]
        )

    def drift_table(self, points: np.ndarray) -> np.ndarray:
        """Velocities for every control pair, shape ``(nA, nB, P, n)``."""
        return np.stack(
            [
                np.stack([self.drift_at(points, ia, ib) for ib in range(self.n_ctrl_b)])
                for ia in range(self.n_ctrl_a)
            ]
        )

    def scaled(self, mu: float) -> "ProblemSpec":
        """
        Return the problem with gain ``mu * f`` and costs ``mu * c``, ``mu * chi``.

        Drift and jump maps are unchanged; for ``mu > 0`` the value field of the
        scaled game is ``mu`` times the original one.
        """
        if mu <= 0:
            raise ProblemError(f"scaling factor must be positive, got {mu}")
        gain, cost_xi, cost_eta = self.gain, self.cost_xi, self.cost_eta
        hints = self.lipschitz_hints
        return ProblemSpec(
            name=f"{self.name}*{mu:g}",
            dim=self.dim,
            drift=self.drift,
            gain=lambda x, a, b: mu * np.asarray(gain(x, a, b), dtype=float),
            jump_xi=self.jump_xi,
            jump_eta=self.jump_eta,
            cost_xi=lambda x, k: mu * np.asarray(cost_xi(x, k), dtype=float),
            cost_eta=lambda x, k: mu * np.asarray(cost_eta(x, k), dtype=float),
            ctrl_set_a=self.ctrl_set_a,
            ctrl_set_b=self.ctrl_set_b,
            impulse_set_xi=self.impulse_set_xi,
            impulse_set_eta=self.impulse_set_eta,
            discount=self.discount,
            lipschitz_hints=LipschitzHints(
                drift=hints.drift,
                gain=None if hints.gain is None else mu * hints.gain,
                jump_xi=hints.jump_xi,
                jump_eta=hints.jump_eta,
                cost_xi=None if hints.cost_xi is None else mu * hints.cost_xi,
                cost_eta=None if hints.cost_eta is None else mu * hints.cost_eta,
            ),
            params={**self.params, "mu": mu},
        )

    def __repr__(self) -> str:
        return (
            f"<ProblemSpec name='{self.name}' dim={self.dim} "
            f"controls={self.n_ctrl_a}x{self.n_ctrl_b} impulses={self.n_xi}/{self.n_eta} "
            f"discount={self.discount}>"
        )


def _check_index(index: int, count: int, what: str) -> None:
    if not 0 <= index < count:
        raise ProblemError(f"{what} index {index} out of range [0, {count})")


def evaluate(
    problem: ProblemSpec,
    component: Union[Component, str],
    x: Any,
    arg: Union[ControlPair, Tuple[int, int], int],
) -> Union[float, np.ndarray]:
    """
    Evaluate one component of a game at a single state.

    Args:
        problem: The game instance
        component: Which function to evaluate
        x: State vector of length ``problem.dim``
        arg: A ``ControlPair`` for drift/gain, an impulse index for jumps/costs

    Returns:
        The velocity or displacement vector, or the scalar gain/cost

    Raises:
        ProblemError: If an index is out of range, the state is not finite, or
            the component evaluates to a non-finite value
    """
    component = Component(component)
    point = np.asarray(x, dtype=float).reshape(1, -1)
    if point.shape[1] != problem.dim:
        raise ProblemError(f"state has dimension {point.shape[1]}, expected {problem.dim}")
    if not np.all(np.isfinite(point)):
        raise ProblemError(f"state must be finite, got {point[0].tolist()}")

    if component in (Component.DRIFT, Component.GAIN):
        pair = arg if isinstance(arg, ControlPair) else ControlPair(a=arg[0], b=arg[1])
        _check_index(pair.a, problem.n_ctrl_a, "ctrl_set_a")
        _check_index(pair.b, problem.n_ctrl_b, "ctrl_set_b")
        if component is Component.DRIFT:
            value: Union[float, np.ndarray] = np.array(problem.drift_at(point, pair.a, pair.b)[0])
        else:
            value = float(problem.gain_at(point, pair.a, pair.b)[0])
    else:
        player = "xi" if component in (Component.JUMP_XI, Component.COST_XI) else "eta"
        count = problem.n_xi if player == "xi" else problem.n_eta
        _check_index(int(arg), count, f"impulse_set_{player}")
        if component in (Component.JUMP_XI, Component.JUMP_ETA):
            value = np.array(problem.jump_at(point, player, int(arg))[0])
        else:
            value = float(problem.cost_at(point, player, int(arg))[0])

    if not np.all(np.isfinite(value)):
        raise ProblemError(f"{component.value} is not finite at x={point[0].tolist()} (arg={arg})")
    return value
