"""
Fixed-point iteration of the discrete QVI update and solve diagnostics.

``solve`` runs Jacobi sweeps: every node of the new iterate is computed from
the previous iterate only. Sweeps are split into contiguous row chunks that
may run on a thread pool; each node's arithmetic does not depend on the
chunking, so the result is bit-identical for any thread count.
"""

import concurrent.futures
import time
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, validator

from impulsegame.core.operators import InterventionOperator, QviForm, QviOperator, StepParams
from impulsegame.grid.field import ValueField, make_field, sup_norm_diff
from impulsegame.grid.grid import Grid
from impulsegame.model.problem import ProblemSpec
from impulsegame.model.validation import ValidationReport, validate_problem
from impulsegame.utils.errors import (
    DivergenceError,
    FormMismatchError,
    GridError,
    NotConvergedError,
    ValidationFailure,
)
from impulsegame.utils.logging import get_logger

logger = get_logger(__name__)

# Multiple of the a-priori bound |f|/lambda + max cost at which an iterate is declared divergent
DIVERGENCE_FACTOR = 10.0

# Sweeps between progress messages at DEBUG level
PROGRESS_EVERY = 100


class InitKind(str, Enum):
    ZEROS = "zeros"
    CONSTANT = "constant"
    FIELD = "field"


class SolverParams(BaseModel):
    """Parameters of a fixed-point solve."""

    step: StepParams
    tol_fix: float = 1e-10
    max_iters: int = 100000
    init: InitKind = InitKind.ZEROS
    init_value: float = 0.0
    init_field: Optional[ValueField] = None
    threads: int = 1

    class Config:
        arbitrary_types_allowed = True

    @validator("tol_fix")
    def validate_tol(cls, v: float) -> float:
        if not v > 0:
            raise ValueError(f"tol_fix must be > 0, got {v}")
        return v

    @validator("max_iters")
    def validate_max_iters(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"max_iters must be >= 1, got {v}")
        return v

    @validator("threads")
    def validate_threads(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"threads must be >= 1, got {v}")
        return v

    def with_changes(self, **changes: Any) -> "SolverParams":
        """A copy with some fields replaced."""
        data = {
            "step": self.step,
            "tol_fix": self.tol_fix,
            "max_iters": self.max_iters,
            "init": self.init,
            "init_value": self.init_value,
            "init_field": self.init_field,
            "threads": self.threads,
        }
        data.update(changes)
        return SolverParams(**data)


class SolveReport(BaseModel):
    """Outcome of a fixed-point solve."""

    problem: str
    form: QviForm
    field: ValueField
    iterations: int
    residual_history: List[float]
    converged: bool
    wall_time: float
    h: float
    discount: float
    tol_fix: float

    class Config:
        arbitrary_types_allowed = True

    @property
    def final_delta(self) -> float:
        return self.residual_history[-1]

    @property
    def grid(self) -> Grid:
        return self.field.grid

    def to_dict(self, field_csv_path: Optional[str] = None) -> Dict[str, Any]:
        """JSON-ready summary; the field itself is written separately as CSV."""
        return {
            "problem": self.problem,
            "form": self.form.value,
            "iterations": self.iterations,
            "converged": self.converged,
            "final_delta": self.final_delta,
            "fixed_point_error_bound": fixed_point_error_bound(self),
            "residual_history": list(self.residual_history),
            "field_csv_path": field_csv_path,
            "h": self.h,
            "wall_time_s": self.wall_time,
        }

    def __repr__(self) -> str:
        status = "converged" if self.converged else "not converged"
        return f"<SolveReport {self.problem} form={self.form.value} {status} after {self.iterations} sweeps>"


def divergence_threshold(validation: ValidationReport, discount: float) -> float:
    """``10 (|f|_inf / lambda + max impulse cost)``."""
    return DIVERGENCE_FACTOR * (validation.f_sup / discount + validation.max_cost)


def initial_values(problem: ProblemSpec, grid: Grid, params: SolverParams) -> np.ndarray:
    if params.init is InitKind.ZEROS:
        return np.zeros(grid.size)
    if params.init is InitKind.CONSTANT:
        return np.full(grid.size, float(params.init_value))
    if params.init_field is None:
        raise ValueError("init 'field' needs init_field")
    if params.init_field.grid != grid:
        raise GridError(f"initial field lives on {params.init_field.grid!r}, solving on {grid!r}")
    return np.array(params.init_field.values)


def _chunks(size: int, threads: int) -> List[slice]:
    bounds = [int(c[0]) for c in np.array_split(np.arange(size), threads) if len(c)] + [size]
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]


def require_valid(problem: ProblemSpec, grid: Grid) -> ValidationReport:
    """
    Validate ``problem`` on ``grid`` and refuse it on a fatal failure.

    Raises:
        ValidationFailure: If a fatal assumption check failed
    """
    report = validate_problem(problem, grid)
    if report.fatal:
        raise ValidationFailure(f"{problem.name}: {'; '.join(report.messages)}", report)
    return report


def iterate(
    operator: QviOperator,
    values: np.ndarray,
    tol: float,
    max_iters: int,
    threshold: float,
    threads: int = 1,
) -> Tuple[np.ndarray, List[float], bool]:
    """
    Jacobi iteration of ``operator`` from ``values``.

    Returns:
        Tuple of ``(last iterate, sup-norm deltas, converged)``

    Raises:
        DivergenceError: If the iterate's sup norm exceeds ``threshold``
    """
    chunks = _chunks(values.shape[0], threads)
    history: List[float] = []
    current = np.array(values, dtype=float)
    converged = False

    executor = concurrent.futures.ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for k in range(1, max_iters + 1):
            new = np.empty_like(current)
            if executor is None:
                new[:] = operator.apply(current)
            else:
                futures = {executor.submit(operator.apply, current, rows): rows for rows in chunks}
                for future in concurrent.futures.as_completed(futures):
                    new[futures[future]] = future.result()

            delta = float(np.max(np.abs(new - current)))
            history.append(delta)
            current = new

            sup = float(np.max(np.abs(current)))
            if not np.isfinite(sup) or sup > threshold:
                raise DivergenceError(
                    f"iterate sup norm {sup:.6g} exceeds the divergence threshold {threshold:.6g} at sweep {k}",
                    iteration=k,
                    sup_norm=sup,
                    threshold=threshold,
                )
            if k % PROGRESS_EVERY == 0:
                logger.debug(f"sweep {k}: delta={delta:.3e}")
            if delta <= tol:
                converged = True
                break
    finally:
        if executor is not None:
            executor.shutdown(wait=True)
    return current, history, converged


def solve(
    problem: ProblemSpec,
    grid: Grid,
    form: Union[QviForm, str],
    params: SolverParams,
) -> SolveReport:
    """
    Iterate the QVI update of ``form`` to its fixed point.

    Args:
        problem: The game instance
        grid: Grid of the value field
        form: Which QVI to solve
        params: Step, tolerance, iteration cap, initialization and threads

    Returns:
        SolveReport: Last iterate with the full delta history

    Raises:
        ValidationFailure: If the problem fails a fatal assumption check
        DivergenceError: If an iterate leaves the a-priori bounded region
    """
    form = QviForm(form)
    if params.step.grid != grid:
        raise GridError(f"step parameters were built for {params.step.grid!r}, solving on {grid!r}")
    params.step.check(problem)
    validation = require_valid(problem, grid)
    threshold = divergence_threshold(validation, problem.discount)

    logger.info(
        f"Solving {problem.name} form {form.value} on {grid!r}: h={params.step.h:.6g}, "
        f"tol={params.tol_fix:.1e}, threads={params.threads}"
    )
    start = time.perf_counter()
    operator = QviOperator(problem, grid, form, params.step.h)
    values, history, converged = iterate(
        operator,
        initial_values(problem, grid, params),
        params.tol_fix,
        params.max_iters,
        threshold,
        params.threads,
    )
    wall_time = time.perf_counter() - start

    report = SolveReport(
        problem=problem.name,
        form=form,
        field=make_field(grid, values, form.value),
        iterations=len(history),
        residual_history=history,
        converged=converged,
        wall_time=wall_time,
        h=params.step.h,
        discount=problem.discount,
        tol_fix=params.tol_fix,
    )
    if converged:
        logger.info(f"Solved {problem.name} form {form.value} in {report.iterations} sweeps ({wall_time:.3f}s)")
    else:
        logger.warning(
            f"{problem.name} form {form.value} did not converge in {params.max_iters} sweeps "
            f"(last delta {report.final_delta:.3e})"
        )
    return report


# -- Diagnostics --

_PAIRS = {(QviForm.L, QviForm.U), (QviForm.LMAX, QviForm.UMIN)}


def isaacs_gap(report_lower: SolveReport, report_upper: SolveReport) -> float:
    """
    Sup-norm distance between a lower and an upper value field.

    The reports must pair (L, U) or (Lmax, Umin), or share one form.

    Raises:
        GridError: If the fields live on different grids
        FormMismatchError: If the forms do not pair up
    """
    pair = (report_lower.form, report_upper.form)
    if pair not in _PAIRS and report_lower.form != report_upper.form:
        raise FormMismatchError(f"cannot compare forms {pair[0].value} and {pair[1].value}")
    return sup_norm_diff(report_lower.field, report_upper.field)


class Lemma1Violation(BaseModel):
    """A node where the field breaks an obstacle-ordering property."""

    node: int
    x: List[float]
    kind: str
    value: float
    m: float
    n: float


def check_lemma1(report: SolveReport, problem: ProblemSpec, tol: float = 1e-6) -> List[Lemma1Violation]:
    """
    Obstacle ordering of a converged field.

    Flags nodes with ``v > N v + tol`` (``above_n``) and nodes with both
    ``v < N v - tol`` and ``v < M v - tol`` (``below_both``).

    Raises:
        NotConvergedError: If the report did not converge
    """
    if not report.converged:
        raise NotConvergedError(f"obstacle checks need a converged solve, got {report!r}")
    return obstacle_violations(report.field, problem, tol)


def obstacle_violations(field: ValueField, problem: ProblemSpec, tol: float = 1e-6) -> List[Lemma1Violation]:
    """Obstacle-ordering violations of any field (see :func:`check_lemma1`)."""
    grid = field.grid
    operator = InterventionOperator(problem, grid)
    v = field.values
    m, _ = operator.maximizer(v)
    n, _ = operator.minimizer(v)

    nodes = grid.nodes()
    violations = []
    for i in np.flatnonzero(v > n + tol):
        violations.append(
            Lemma1Violation(node=int(i), x=nodes[i].tolist(), kind="above_n", value=v[i], m=m[i], n=n[i])
        )
    for i in np.flatnonzero((v < n - tol) & (v < m - tol)):
        violations.append(
            Lemma1Violation(node=int(i), x=nodes[i].tolist(), kind="below_both", value=v[i], m=m[i], n=n[i])
        )
    violations.sort(key=lambda item: item.node)
    if violations:
        logger.warning(f"{problem.name}: {len(violations)} obstacle-ordering violations")
    return violations


def fixed_point_error_bound(report: SolveReport) -> float:
    """A-posteriori distance to the discrete fixed point, ``delta (1 - lambda h) / (lambda h)``."""
    lam_h = report.discount * report.h
    return report.final_delta * (1.0 - lam_h) / lam_h


def gain_sup(problem: ProblemSpec, grid: Grid) -> float:
    """``|f|_inf`` over grid nodes and control pairs."""
    return float(np.max(np.abs(problem.gain_table(grid.nodes()))))


def boundedness_margin(report: SolveReport, problem: ProblemSpec) -> float:
    """``|f|_inf / lambda + tol_fix - |v|_inf``; non-negative on a bounded field."""
    bound = gain_sup(problem, report.grid) / problem.discount + report.tol_fix
    return bound - report.field.sup_norm()


class ScalingCheck(BaseModel):
    mu: float
    gap: float
    tolerance: float
    ok: bool


def check_mu_scaling(
    problem: ProblemSpec,
    grid: Grid,
    form: Union[QviForm, str],
    params: SolverParams,
    mu: float = 0.5,
    base: Optional[SolveReport] = None,
) -> ScalingCheck:
    """
    Compare the solve of the ``mu``-scaled problem against ``mu`` times the original field.

    The scaled solve runs with ``mu * tol_fix`` so both stop at the same sweep.
    """
    if base is None:
        base = solve(problem, grid, form, params)
    scaled_params = params.with_changes(
        tol_fix=params.tol_fix * mu,
        init_value=params.init_value * mu,
        init_field=None if params.init_field is None else params.init_field.scaled(mu),
    )
    scaled = solve(problem.scaled(mu), grid, form, scaled_params)
    gap = sup_norm_diff(scaled.field, base.field.scaled(mu))
    tolerance = 2 * params.tol_fix
    logger.info(f"mu-scaling ({mu}) gap for {problem.name} form {QviForm(form).value}: {gap:.3e}")
    return ScalingCheck(mu=mu, gap=gap, tolerance=tolerance, ok=bool(gap <= tolerance))


class UniquenessCheck(BaseModel):
    gap: float
    tolerance: float
    ok: bool


def uniqueness_gap(
    problem: ProblemSpec, grid: Grid, form: Union[QviForm, str], params: SolverParams
) -> UniquenessCheck:
    """
    Solve from 0 and from ``|f|_inf / lambda`` and compare the two fixed points.

    Both solves stop at ``tol_fix * lambda h / (1 - lambda h)`` so each lies
    within ``tol_fix`` of the discrete fixed point; the gap passes at
    ``2 tol_fix``.
    """
    lam_h = problem.discount * params.step.h
    inner = params.with_changes(tol_fix=min(params.tol_fix, params.tol_fix * lam_h / (1.0 - lam_h)))
    low = solve(problem, grid, form, inner.with_changes(init=InitKind.ZEROS))
    high = solve(
        problem,
        grid,
        form,
        inner.with_changes(init=InitKind.CONSTANT, init_value=gain_sup(problem, grid) / problem.discount),
    )
    gap = sup_norm_diff(low.field, high.field)
    tolerance = 2 * params.tol_fix
    ok = bool(low.converged and high.converged and gap <= tolerance)
    if not ok:
        logger.warning(f"uniqueness check for {problem.name}: gap {gap:.3e} exceeds {tolerance:.3e}")
    return UniquenessCheck(gap=gap, tolerance=tolerance, ok=ok)


def order_preserved(
    problem: ProblemSpec, grid: Grid, form: Union[QviForm, str], h: float, lower: ValueField, upper: ValueField, sweeps: int
) -> bool:
    """Whether ``lower <= upper`` nodewise is kept by ``sweeps`` Jacobi sweeps."""
    operator = QviOperator(problem, grid, form, h)
    u, v = np.array(lower.values), np.array(upper.values)
    if np.any(u > v):
        raise ValueError("initial fields are not ordered")
    for _ in range(sweeps):
        u, v = operator.apply(u), operator.apply(v)
        if np.any(u > v):
            return False
    return True


def solve_all(
    problem: ProblemSpec, grid: Grid, forms: List[Union[QviForm, str]], params: SolverParams
) -> Dict[QviForm, SolveReport]:
    """Solve several forms with the same parameters."""
    return {QviForm(form): solve(problem, grid, form, params) for form in forms}

