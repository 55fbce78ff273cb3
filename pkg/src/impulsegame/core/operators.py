"""
Discrete operators of the lower and upper QVIs.

The fixed-point update at a point ``x`` combines three branches:

- ``S``: the semi-Lagrangian step ``h f + (1 - lambda h) v(x + h b)``, optimized
  over the control table as max-min (lower) or min-max (upper)
- ``M``: the maximizer's intervention ``max_xi v(x + g_xi) - c``
- ``N``: the minimizer's intervention ``min_eta v(x + g_eta) + chi``

and nests them according to the ``QviForm``. Every operator precomputes its
interpolation stencils for a fixed set of query points, so applying it to a
new field is a gather and a reduction.
"""

from enum import Enum
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, validator

from impulsegame.grid.field import ValueField, discrete_lipschitz, make_field
from impulsegame.grid.grid import Grid
from impulsegame.grid.stencil import apply_stencil, multilinear_stencil
from impulsegame.model.problem import ControlPair, ProblemSpec
from impulsegame.utils.errors import GridError, ProblemError
from impulsegame.utils.logging import get_logger

logger = get_logger(__name__)

Rows = Union[slice, np.ndarray]

# Upper cap on lambda * h used by the automatic step rule
AUTO_STEP_MAX_DISCOUNT = 0.5


class HamiltonianKind(str, Enum):
    LOWER = "lower"
    UPPER = "upper"


class Nesting(str, Enum):
    """
    Obstacle nesting, named after the residual's outer operation.

    ``min_outer``: ``min{max[lv + H, v - N], v - M} = 0``, update ``max(min(S, N), M)``.
    ``max_outer``: ``max{min[lv + H, v - M], v - N} = 0``, update ``min(max(S, M), N)``.
    """

    MIN_OUTER = "min_outer"
    MAX_OUTER = "max_outer"


class QviForm(str, Enum):
    """The four QVIs: a Hamiltonian kind combined with an obstacle nesting."""

    L = "L"
    U = "U"
    LMAX = "Lmax"
    UMIN = "Umin"

    @property
    def hamiltonian(self) -> HamiltonianKind:
        return HamiltonianKind.LOWER if self in (QviForm.L, QviForm.LMAX) else HamiltonianKind.UPPER

    @property
    def nesting(self) -> Nesting:
        return Nesting.MIN_OUTER if self in (QviForm.L, QviForm.UMIN) else Nesting.MAX_OUTER

    @classmethod
    def from_parts(cls, hamiltonian: Union[HamiltonianKind, str], nesting: Union[Nesting, str]) -> "QviForm":
        for form in cls:
            if form.hamiltonian == HamiltonianKind(hamiltonian) and form.nesting == Nesting(nesting):
                return form
        raise ValueError(f"no form for {hamiltonian}/{nesting}")  # pragma: no cover


class StepParams(BaseModel):
    """Time step of the semi-Lagrangian scheme together with its grid."""

    h: float
    grid: Grid

    class Config:
        frozen = True

    @validator("h")
    def validate_h(cls, v: float) -> float:
        """The step must be a finite positive number of seconds."""
        if not np.isfinite(v) or v <= 0:
            raise ValueError(f"time step must be > 0, got {v}")
        return float(v)

    def discount_factor(self, problem: ProblemSpec) -> float:
        """``1 - lambda h``."""
        return 1.0 - problem.discount * self.h

    def check(self, problem: ProblemSpec) -> "StepParams":
        """
        Ensure ``0 < lambda h < 1`` for ``problem``.

        Raises:
            ProblemError: If the step is too large for the problem's discount
        """
        lam_h = problem.discount * self.h
        if not lam_h < 1.0:
            raise ProblemError(f"lambda*h must be < 1, got {lam_h:.6g} (lambda={problem.discount}, h={self.h})")
        if problem.dim != self.grid.dim:
            raise GridError(f"problem dimension {problem.dim} does not match grid dimension {self.grid.dim}")
        return self


def max_speed(problem: ProblemSpec, grid: Grid) -> float:
    """Largest drift component over grid nodes and control pairs."""
    return float(np.max(np.abs(problem.drift_table(grid.nodes()))))


def auto_step(problem: ProblemSpec, grid: Grid) -> float:
    """
    Default time step ``dx_min / max(|b|_inf, 1)``, capped so ``lambda h <= 0.5``.

    Foot points then stay within one cell of their node.
    """
    h = grid.min_spacing / max(max_speed(problem, grid), 1.0)
    h = min(h, AUTO_STEP_MAX_DISCOUNT / problem.discount)
    logger.debug(f"auto step for {problem.name}: h={h:.6g}")
    return h


def _as_points(points: Optional[np.ndarray], grid: Grid) -> np.ndarray:
    if points is None:
        return grid.nodes()
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != grid.dim:
        raise GridError(f"points have dimension {pts.shape[1]}, grid has {grid.dim}")
    return pts


def _finite(table: np.ndarray, what: str, problem: ProblemSpec) -> np.ndarray:
    if not np.all(np.isfinite(table)):
        raise ProblemError(f"{problem.name}: {what} is not finite at every query point")
    return table


# -- Branch operators --

class SemiLagrangianOperator:
    """
    The continuous-control branch ``S`` for a fixed set of points.

    Holds the gain table ``(nA, nB, P)`` and the stencils of the foot points
    ``x + h b(x; a, b)``.
    """

    def __init__(self, problem: ProblemSpec, grid: Grid, h: float, points: Optional[np.ndarray] = None):
        self.problem = problem
        self.grid = grid
        self.h = float(h)
        self.beta = 1.0 - problem.discount * self.h
        self.points = _as_points(points, grid)

        self.gain = _finite(problem.gain_table(self.points), "gain", problem)
        drift = _finite(problem.drift_table(self.points), "drift", problem)
        feet = self.points[None, None, :, :] + self.h * drift
        self.indices, self.weights = multilinear_stencil(grid, feet)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def table(self, values: np.ndarray, rows: Rows = slice(None)) -> np.ndarray:
        """``h f + (1 - lambda h) v(foot)`` for every control pair, shape ``(nA, nB, P)``."""
        interp = apply_stencil(values, self.indices[:, :, rows], self.weights[:, :, rows])
        return self.h * self.gain[:, :, rows] + self.beta * interp

    def evaluate(
        self, values: np.ndarray, kind: HamiltonianKind, rows: Rows = slice(None)
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Optimize the table over the controls.

        Returns:
            Tuple of ``(value, arg_a, arg_b)``; arg-optima are the first optimum
            in enumeration order, the outer player's choice first
        """
        return optimize_table(self.table(values, rows), kind)


def optimize_table(table: np.ndarray, kind: Union[HamiltonianKind, str]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Max-min (lower) or min-max (upper) of a ``(nA, nB, P)`` table.

    Player-xi picks the first axis and maximizes; player-eta picks the second
    axis and minimizes.
    """
    cols = np.arange(table.shape[2])
    if HamiltonianKind(kind) is HamiltonianKind.LOWER:
        inner = table.min(axis=1)
        arg_a = inner.argmax(axis=0)
        value = inner[arg_a, cols]
        arg_b = table[arg_a, :, cols].argmin(axis=1)
    else:
        inner = table.max(axis=0)
        arg_b = inner.argmin(axis=0)
        value = inner[arg_b, cols]
        arg_a = table[:, arg_b, cols].argmax(axis=0)
    return value, arg_a, arg_b


class InterventionOperator:
    """
    The impulse branches ``M`` (player-xi) and ``N`` (player-eta) for a fixed set of points.

    Jump destinations are clamped into the box by the interpolation stencil.
    """

    def __init__(self, problem: ProblemSpec, grid: Grid, points: Optional[np.ndarray] = None):
        self.problem = problem
        self.grid = grid
        self.points = _as_points(points, grid)

        self._stencils: Dict[str, Tuple[np.ndarray, np.ndarray]] = {}
        self._costs: Dict[str, np.ndarray] = {}
        for player, count in (("xi", problem.n_xi), ("eta", problem.n_eta)):
            jumps = np.stack([problem.jump_at(self.points, player, k) for k in range(count)])
            costs = np.stack([problem.cost_at(self.points, player, k) for k in range(count)])
            _finite(jumps, f"jump_{player}", problem)
            self._costs[player] = _finite(costs, f"cost_{player}", problem)
            self._stencils[player] = multilinear_stencil(grid, self.points[None, :, :] + jumps)

    def destinations(self, values: np.ndarray, player: str, rows: Rows = slice(None)) -> np.ndarray:
        """Interpolated value after each candidate impulse, shape ``(count, P)``."""
        indices, weights = self._stencils[player]
        return apply_stencil(values, indices[:, rows], weights[:, rows])

    def maximizer(self, values: np.ndarray, rows: Rows = slice(None)) -> Tuple[np.ndarray, np.ndarray]:
        """``M v = max_xi v(x + g_xi) - c`` and the first maximizing action."""
        candidates = self.destinations(values, "xi", rows) - self._costs["xi"][:, rows]
        arg = candidates.argmax(axis=0)
        return candidates[arg, np.arange(candidates.shape[1])], arg

    def minimizer(self, values: np.ndarray, rows: Rows = slice(None)) -> Tuple[np.ndarray, np.ndarray]:
        """``N v = min_eta v(x + g_eta) + chi`` and the first minimizing action."""
        candidates = self.destinations(values, "eta", rows) + self._costs["eta"][:, rows]
        arg = candidates.argmin(axis=0)
        return candidates[arg, np.arange(candidates.shape[1])], arg


def combine(form: QviForm, s: np.ndarray, m: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Nest the three branches according to ``form``."""
    if form.nesting is Nesting.MIN_OUTER:
        return np.maximum(np.minimum(s, n), m)
    return np.minimum(np.maximum(s, m), n)


class Branches(BaseModel):
    """All three branch values and their arg-optima at a set of points."""

    s: np.ndarray
    arg_a: np.ndarray
    arg_b: np.ndarray
    m: np.ndarray
    arg_xi: np.ndarray
    n: np.ndarray
    arg_eta: np.ndarray
    value: np.ndarray

    class Config:
        arbitrary_types_allowed = True


class QviOperator:
    """
    The full QVI update ``T v`` for one form at a fixed set of points.

    Args:
        problem: The game instance
        grid: Grid carrying the fields the operator is applied to
        form: Which QVI to discretize
        h: Time step, ``lambda h < 1``
        points: Query points; the grid nodes when omitted
    """

    def __init__(
        self,
        problem: ProblemSpec,
        grid: Grid,
        form: Union[QviForm, str],
        h: float,
        points: Optional[np.ndarray] = None,
    ):
        StepParams(h=h, grid=grid).check(problem)
        self.problem = problem
        self.grid = grid
        self.form = QviForm(form)
        self.h = float(h)
        self.points = _as_points(points, grid)
        self.continuous = SemiLagrangianOperator(problem, grid, h, self.points)
        self.intervention = InterventionOperator(problem, grid, self.points)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def branches(self, values: np.ndarray, rows: Rows = slice(None)) -> Branches:
        s, arg_a, arg_b = self.continuous.evaluate(values, self.form.hamiltonian, rows)
        m, arg_xi = self.intervention.maximizer(values, rows)
        n, arg_eta = self.intervention.minimizer(values, rows)
        return Branches(
            s=s,
            arg_a=arg_a,
            arg_b=arg_b,
            m=m,
            arg_xi=arg_xi,
            n=n,
            arg_eta=arg_eta,
            value=combine(self.form, s, m, n),
        )

    def apply(self, values: np.ndarray, rows: Rows = slice(None)) -> np.ndarray:
        """Updated values at ``points[rows]``."""
        s, _, _ = self.continuous.evaluate(values, self.form.hamiltonian, rows)
        m, _ = self.intervention.maximizer(values, rows)
        n, _ = self.intervention.minimizer(values, rows)
        return combine(self.form, s, m, n)


# -- Per-point operations --

def _single_point(x: np.ndarray, problem: ProblemSpec) -> np.ndarray:
    point = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
    if point.shape[1] != problem.dim:
        raise ProblemError(f"state has dimension {point.shape[1]}, expected {problem.dim}")
    if not np.all(np.isfinite(point)):
        raise GridError(f"state must be finite, got {point[0].tolist()}")
    return point


def sl_value(
    field: ValueField,
    problem: ProblemSpec,
    x: np.ndarray,
    params: StepParams,
    kind: Union[HamiltonianKind, str],
) -> Tuple[float, ControlPair]:
    """
    Semi-Lagrangian branch at one state.

    Returns:
        Tuple of the optimized value and the first optimal ``ControlPair``
    """
    params.check(problem)
    op = SemiLagrangianOperator(problem, field.grid, params.h, _single_point(x, problem))
    value, arg_a, arg_b = op.evaluate(field.values, HamiltonianKind(kind))
    return float(value[0]), ControlPair(a=int(arg_a[0]), b=int(arg_b[0]))


def intervene(field: ValueField, problem: ProblemSpec, x: np.ndarray, player: str) -> Tuple[float, int]:
    """
    Intervention operator at one state: ``M`` for ``player='xi'``, ``N`` for ``player='eta'``.

    Returns:
        Tuple of the optimized value and the first optimal action index
    """
    if player not in ("xi", "eta"):
        raise ProblemError(f"player must be 'xi' or 'eta', got {player!r}")
    op = InterventionOperator(problem, field.grid, _single_point(x, problem))
    value, arg = op.maximizer(field.values) if player == "xi" else op.minimizer(field.values)
    return float(value[0]), int(arg[0])


def qvi_update(
    field: ValueField, problem: ProblemSpec, x: np.ndarray, form: Union[QviForm, str], params: StepParams
) -> float:
    """The QVI update of ``form`` at one state."""
    op = QviOperator(problem, field.grid, form, params.h, _single_point(x, problem))
    return float(op.apply(field.values)[0])


def apply_update(field: ValueField, problem: ProblemSpec, form: Union[QviForm, str], params: StepParams) -> ValueField:
    """One full Jacobi sweep: the QVI update at every node."""
    op = QviOperator(problem, field.grid, form, params.h)
    return make_field(field.grid, op.apply(field.values), QviForm(form).value)


# -- Hamiltonians and residuals --

def hamiltonian(
    problem: ProblemSpec, points: np.ndarray, grads: np.ndarray, kind: Union[HamiltonianKind, str]
) -> np.ndarray:
    """
    Discrete Hamiltonian by enumeration of the control table.

    ``H^-(x, p) = -max_a min_b (p . b + f)`` and ``H^+(x, p) = -min_b max_a (p . b + f)``.

    Args:
        problem: The game instance
        points: States, shape ``(P, n)``
        grads: Gradient vectors, shape ``(P, n)``
        kind: ``lower`` or ``upper``

    Returns:
        np.ndarray: ``H`` at every point, shape ``(P,)``
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    p = np.atleast_2d(np.asarray(grads, dtype=float))
    table = np.einsum("abpn,pn->abp", problem.drift_table(pts), p) + problem.gain_table(pts)
    value, _, _ = optimize_table(table, kind)
    return -value


def hjbi_residual(field: ValueField, problem: ProblemSpec, form: Union[QviForm, str]) -> ValueField:
    """
    Residual of the QVI at every node, gradient by finite differences.

    Interior nodes use central differences, boundary nodes one-sided ones.

    Raises:
        GridError: If an axis has fewer than 3 nodes
    """
    form = QviForm(form)
    grid = field.grid
    if min(grid.shape) < 3:
        raise GridError(f"residual needs at least 3 nodes per axis, got {list(grid.shape)}")

    arr = field.as_array()
    grads = np.gradient(arr, *grid.spacing) if grid.dim > 1 else [np.gradient(arr, grid.spacing[0])]
    p = np.stack([g.ravel() for g in grads], axis=-1)

    nodes = grid.nodes()
    v = field.values
    pde = problem.discount * v + hamiltonian(problem, nodes, p, form.hamiltonian)
    op = InterventionOperator(problem, grid, nodes)
    m, _ = op.maximizer(v)
    n, _ = op.minimizer(v)

    if form.nesting is Nesting.MIN_OUTER:
        residual = np.minimum(np.maximum(pde, v - n), v - m)
    else:
        residual = np.maximum(np.minimum(pde, v - m), v - n)
    return make_field(grid, residual, form.value)


def intervention_continuity(field: ValueField, problem: ProblemSpec) -> Dict[str, Dict[str, Any]]:
    """
    Discrete Lipschitz seminorms of ``M v`` and ``N v`` against ``L (1 + C_g) + C_cost``.

    The bound is reported only when the problem carries both hint constants.
    """
    grid = field.grid
    op = InterventionOperator(problem, grid)
    lip = discrete_lipschitz(field)
    hints = problem.lipschitz_hints
    out: Dict[str, Dict[str, Any]] = {}
    for player, (values, _) in (("xi", op.maximizer(field.values)), ("eta", op.minimizer(field.values))):
        c_g, c_cost = getattr(hints, f"jump_{player}"), getattr(hints, f"cost_{player}")
        bound = None if c_g is None or c_cost is None else lip * (1 + c_g) + c_cost
        seminorm = discrete_lipschitz(make_field(grid, values))
        out[player] = {
            "seminorm": seminorm,
            "bound": bound,
            "ok": None if bound is None else bool(seminorm <= bound * (1 + 1e-9) + 1e-12),
        }
    return out
