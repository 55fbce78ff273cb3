"""
Independent small-instance solvers used to certify the grid solver.

``tree_value`` unrolls the discrete dynamic programming recursion ``K`` steps
from a single state with exact (uninterpolated) state evolution.
``gauss_seidel_solve`` iterates the same QVI update as the main solver but
in place, node by node, in lexicographic order.
"""

from typing import Dict, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, root_validator

from impulsegame.core.operators import (
    QviForm,
    QviOperator,
    StepParams,
    auto_step,
    combine,
    optimize_table,
)
from impulsegame.core.solver import divergence_threshold, gain_sup, require_valid
from impulsegame.grid.field import ValueField, make_field
from impulsegame.grid.grid import Grid
from impulsegame.model.problem import ProblemSpec
from impulsegame.utils.errors import DivergenceError, OracleBudgetError
from impulsegame.utils.logging import get_logger

logger = get_logger(__name__)

# Default cap on the number of distinct (state, depth) evaluations
DEFAULT_BUDGET = 200000

# Decimals kept when keying states for memoization
KEY_DECIMALS = 12


class ValueInterval(BaseModel):
    """Bracket ``[lo, hi]`` of the discrete game value at one state."""

    lo: float
    hi: float
    value: float
    padding: float
    evaluations: int = 0

    @root_validator(skip_on_failure=True)
    def validate_order(cls, values: dict) -> dict:
        """Lower end must not exceed the upper end."""
        if values["lo"] > values["hi"]:
            raise ValueError(f"interval lower end {values['lo']} exceeds upper end {values['hi']}")
        return values

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float, slack: float = 0.0) -> bool:
        return self.lo - slack <= x <= self.hi + slack


class _GameTree:
    """Memoized backward induction over (state, remaining depth)."""

    def __init__(self, problem: ProblemSpec, h: float, form: QviForm, budget: int):
        self.problem = problem
        self.h = h
        self.beta = 1.0 - problem.discount * h
        self.form = form
        self.budget = budget
        self.gain_sup = 0.0
        self._values: Dict[Tuple[Tuple[float, ...], int], float] = {}
        self._flows: Dict[Tuple[Tuple[float, ...], int], float] = {}

    @property
    def evaluations(self) -> int:
        return len(self._values) + len(self._flows)

    def _key(self, x: np.ndarray, depth: int) -> Tuple[Tuple[float, ...], int]:
        return tuple(np.round(x, KEY_DECIMALS).tolist()), depth

    def _charge(self) -> None:
        if self.evaluations >= self.budget:
            raise OracleBudgetError(f"game tree exceeded its budget of {self.budget} evaluations")

    def flow(self, x: np.ndarray, depth: int) -> float:
        """Best single flow step followed by the game with ``depth - 1`` steps left."""
        key = self._key(x, depth)
        if key in self._flows:
            return self._flows[key]
        self._charge()

        point = x[None, :]
        gains = self.problem.gain_table(point)  # (nA, nB, 1)
        drifts = self.problem.drift_table(point)  # (nA, nB, 1, n)
        self.gain_sup = max(self.gain_sup, float(np.max(np.abs(gains))))

        continuation = np.empty_like(gains)
        for ia in range(self.problem.n_ctrl_a):
            for ib in range(self.problem.n_ctrl_b):
                continuation[ia, ib, 0] = self.value(x + self.h * drifts[ia, ib, 0], depth - 1)
        value, _, _ = optimize_table(self.h * gains + self.beta * continuation, self.form.hamiltonian)

        self._flows[key] = float(value[0])
        return self._flows[key]

    def value(self, x: np.ndarray, depth: int) -> float:
        """Game value with ``depth`` steps left; each step allows one impulse before the flow."""
        if depth == 0:
            return 0.0
        key = self._key(x, depth)
        if key in self._values:
            return self._values[key]
        self._charge()

        point = x[None, :]
        s = self.flow(x, depth)
        m = max(
            self.flow(x + self.problem.jump_at(point, "xi", k)[0], depth) - float(self.problem.cost_at(point, "xi", k)[0])
            for k in range(self.problem.n_xi)
        )
        n = min(
            self.flow(x + self.problem.jump_at(point, "eta", k)[0], depth) + float(self.problem.cost_at(point, "eta", k)[0])
            for k in range(self.problem.n_eta)
        )
        result = float(combine(self.form, np.array([s]), np.array([m]), np.array([n]))[0])

        self._values[key] = result
        return result


def tree_value(
    problem: ProblemSpec,
    x0: Union[float, np.ndarray],
    depth: int,
    params: StepParams,
    form: Union[QviForm, str],
    budget: int = DEFAULT_BUDGET,
) -> ValueInterval:
    """
    Bracket the discrete game value at ``x0`` by exhaustive ``depth``-step backward induction.

    Every level offers each player one optional impulse, nested per ``form``,
    followed by one flow step of length ``h`` under every control pair. Leaves
    are valued at 0 and the result is padded by ``(1 - lambda h)^K |f|_inf / lambda``,
    with ``|f|_inf`` taken over the grid nodes and every visited state.

    Args:
        problem: The game instance
        x0: Initial state
        depth: Number of levels ``K``
        params: Time step (and the grid used to bound ``|f|``)
        form: Which QVI's nesting to follow
        budget: Maximum number of distinct evaluations

    Raises:
        OracleBudgetError: If the enumeration exceeds ``budget``
    """
    form = QviForm(form)
    params.check(problem)
    if depth < 0:
        raise ValueError(f"depth must be non-negative, got {depth}")

    tree = _GameTree(problem, params.h, form, budget)
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    value = tree.value(x, depth)

    f_sup = max(gain_sup(problem, params.grid), tree.gain_sup)
    padding = (1.0 - problem.discount * params.h) ** depth * f_sup / problem.discount
    logger.debug(
        f"tree value of {problem.name} at {x.tolist()} (K={depth}, form {form.value}): "
        f"{value:.6g} +/- {padding:.3g} after {tree.evaluations} evaluations"
    )
    return ValueInterval(
        lo=value - padding, hi=value + padding, value=value, padding=padding, evaluations=tree.evaluations
    )


def gauss_seidel_solve(
    problem: ProblemSpec,
    grid: Grid,
    form: Union[QviForm, str],
    tol: float,
    h: Optional[float] = None,
    max_iters: int = 100000,
) -> ValueField:
    """
    Fixed point of the QVI update by in-place lexicographic sweeps.

    Each node update reads the freshest values of every other node.

    Args:
        problem: The game instance
        grid: Grid of the value field
        form: Which QVI to solve
        tol: Sup-norm change per sweep at which iteration stops
        h: Time step; the automatic step when omitted
        max_iters: Sweep cap

    Raises:
        ValidationFailure: If the problem fails a fatal assumption check
        DivergenceError: If an iterate leaves the a-priori bounded region
    """
    form = QviForm(form)
    h = auto_step(problem, grid) if h is None else h
    threshold = divergence_threshold(require_valid(problem, grid), problem.discount)
    operator = QviOperator(problem, grid, form, h)

    v = np.zeros(grid.size)
    for sweep in range(1, max_iters + 1):
        delta = 0.0
        for i in range(grid.size):
            new = float(operator.apply(v, slice(i, i + 1))[0])
            delta = max(delta, abs(new - v[i]))
            v[i] = new
        sup = float(np.max(np.abs(v)))
        if sup > threshold:
            raise DivergenceError(
                f"Gauss-Seidel iterate sup norm {sup:.6g} exceeds {threshold:.6g} at sweep {sweep}",
                iteration=sweep,
                sup_norm=sup,
                threshold=threshold,
            )
        if delta <= tol:
            logger.info(f"Gauss-Seidel solve of {problem.name} form {form.value} converged in {sweep} sweeps")
            break
    else:
        logger.warning(f"Gauss-Seidel solve of {problem.name} form {form.value} hit {max_iters} sweeps")
    return make_field(grid, v, form.value)

