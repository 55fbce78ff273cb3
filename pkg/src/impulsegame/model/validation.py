"""
Assumption checks for a game instance on a grid.

``validate_problem`` never raises on a bad problem: it returns a report whose
``fatal`` flag downstream solving consults. Strict cost positivity and finite
evaluations are fatal; Lipschitz hints, clamped jump destinations and
subadditivity are reported as warnings.
"""

from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from impulsegame.grid.grid import Grid
from impulsegame.model.problem import ProblemSpec
from impulsegame.utils.logging import get_logger

logger = get_logger(__name__)

# Upper bound on the number of sampled action pairs per player
SUBADDITIVITY_SAMPLES = 2000

# Relative slack allowed when comparing an empirical Lipschitz estimate to a hint
LIPSCHITZ_SLACK = 1e-9


class LipschitzCheck(BaseModel):
    """Empirical Lipschitz estimate of one component against its hint."""

    component: str
    estimate: float
    hint: Optional[float] = None
    ok: bool = True


class SubadditivityViolation(BaseModel):
    player: str
    node: int
    first: int
    second: int
    combined: int
    excess: float


class ValidationReport(BaseModel):
    """Diagnostics produced by :func:`validate_problem`."""

    problem: str
    min_cost_xi: float
    min_cost_eta: float
    positivity_ok: bool
    lipschitz: List[LipschitzCheck] = Field(default_factory=list)
    clamped_fraction_xi: float = 0.0
    clamped_fraction_eta: float = 0.0
    subadditivity_violations: List[SubadditivityViolation] = Field(default_factory=list)
    non_finite: List[str] = Field(default_factory=list)
    f_sup: float = 0.0
    max_cost: float = 0.0
    warnings: List[str] = Field(default_factory=list)
    fatal: bool = False
    messages: List[str] = Field(default_factory=list)

    @property
    def min_cost(self) -> float:
        return min(self.min_cost_xi, self.min_cost_eta)

    def to_dict(self) -> Dict:
        return {**self.dict(), "min_cost": self.min_cost}


def _pair_lipschitz(values: np.ndarray, grid: Grid) -> float:
    """Largest difference quotient over pairs of adjacent nodes."""
    vals = values.reshape(grid.shape + values.shape[1:])
    best = 0.0
    for axis, dx in enumerate(grid.spacing):
        diff = np.abs(np.diff(vals, axis=axis))
        if diff.ndim > grid.dim:
            diff = np.max(diff, axis=tuple(range(grid.dim, diff.ndim)))
        best = max(best, float(np.max(diff)) / dx)
    return best


def _component_tables(problem: ProblemSpec, nodes: np.ndarray) -> Dict[str, np.ndarray]:
    """Every component evaluated at every node, node axis first."""
    drift = problem.drift_table(nodes)  # (nA, nB, P, n)
    gain = problem.gain_table(nodes)  # (nA, nB, P)
    return {
        "drift": np.moveaxis(drift, 2, 0),
        "gain": np.moveaxis(gain, 2, 0),
        "jump_xi": np.stack([problem.jump_at(nodes, "xi", k) for k in range(problem.n_xi)], axis=1),
        "jump_eta": np.stack([problem.jump_at(nodes, "eta", k) for k in range(problem.n_eta)], axis=1),
        "cost_xi": np.stack([problem.cost_at(nodes, "xi", k) for k in range(problem.n_xi)], axis=1),
        "cost_eta": np.stack([problem.cost_at(nodes, "eta", k) for k in range(problem.n_eta)], axis=1),
    }


def _subadditivity(
    problem: ProblemSpec, player: str, costs: np.ndarray, rng: np.random.Generator
) -> List[SubadditivityViolation]:
    """Sampled pairs whose summed action is itself a candidate and costs more than the two parts."""
    actions = problem.impulse_set_xi if player == "xi" else problem.impulse_set_eta
    count = actions.shape[0]
    lookup = {tuple(np.round(a, 12)): k for k, a in enumerate(actions)}

    pairs = [(i, j) for i in range(count) for j in range(count)]
    if len(pairs) > SUBADDITIVITY_SAMPLES:
        chosen = rng.choice(len(pairs), size=SUBADDITIVITY_SAMPLES, replace=False)
        pairs = [pairs[c] for c in sorted(chosen)]

    violations = []
    for i, j in pairs:
        k = lookup.get(tuple(np.round(actions[i] + actions[j], 12)))
        if k is None:
            continue
        excess = costs[:, k] - costs[:, i] - costs[:, j]
        worst = int(np.argmax(excess))
        if excess[worst] > 1e-12:
            violations.append(
                SubadditivityViolation(
                    player=player, node=worst, first=i, second=j, combined=k, excess=float(excess[worst])
                )
            )
    return violations


def validate_problem(problem: ProblemSpec, grid: Grid) -> ValidationReport:
    """
    Check a game instance against the solver's standing assumptions on ``grid``.

    Args:
        problem: The game instance
        grid: Grid over the truncated box

    Returns:
        ValidationReport: Positivity, Lipschitz, clamping and subadditivity
        diagnostics; ``fatal`` is set when solving must be refused
    """
    nodes = grid.nodes()
    if problem.dim != grid.dim:
        msg = f"problem dimension {problem.dim} does not match grid dimension {grid.dim}"
        return ValidationReport(
            problem=problem.name,
            min_cost_xi=float("nan"),
            min_cost_eta=float("nan"),
            positivity_ok=False,
            fatal=True,
            messages=[msg],
        )

    tables = _component_tables(problem, nodes)
    non_finite = [name for name, table in tables.items() if not np.all(np.isfinite(table))]

    min_xi = float(np.min(tables["cost_xi"]))
    min_eta = float(np.min(tables["cost_eta"]))
    positivity_ok = bool(min_xi > 0 and min_eta > 0)

    messages: List[str] = []
    warnings: List[str] = []
    if not positivity_ok:
        messages.append(
            f"impulse costs must be strictly positive: min cost_xi={min_xi:.6g}, min cost_eta={min_eta:.6g}"
        )
    if non_finite:
        messages.append(f"non-finite evaluations in {', '.join(non_finite)}")

    lipschitz: List[LipschitzCheck] = []
    hints = problem.lipschitz_hints
    for name, table in tables.items():
        if name in non_finite:
            continue
        estimate = _pair_lipschitz(table, grid)
        hint = getattr(hints, name)
        ok = hint is None or estimate <= hint * (1 + LIPSCHITZ_SLACK) + LIPSCHITZ_SLACK
        lipschitz.append(LipschitzCheck(component=name, estimate=estimate, hint=hint, ok=ok))
        if not ok:
            warnings.append(f"{name}: empirical Lipschitz {estimate:.6g} exceeds hint {hint:.6g}")

    clamped = {}
    for player in ("xi", "eta"):
        jumps = tables[f"jump_{player}"]
        if f"jump_{player}" in non_finite:
            clamped[player] = 1.0
            continue
        destinations = nodes[:, None, :] + jumps
        clamped[player] = float(np.mean(~grid.contains(destinations.reshape(-1, grid.dim))))
        if clamped[player] > 0:
            warnings.append(
                f"{clamped[player]:.1%} of jump_{player} destinations fall outside the box and will be clamped"
            )

    rng = np.random.default_rng(0)
    violations: List[SubadditivityViolation] = []
    if not non_finite:
        for player in ("xi", "eta"):
            violations.extend(_subadditivity(problem, player, tables[f"cost_{player}"], rng))
    if violations:
        warnings.append(f"{len(violations)} sampled impulse pairs violate cost subadditivity")

    f_sup = float(np.max(np.abs(tables["gain"]))) if "gain" not in non_finite else float("inf")
    max_cost = float(max(np.max(tables["cost_xi"]), np.max(tables["cost_eta"])))

    report = ValidationReport(
        problem=problem.name,
        min_cost_xi=min_xi,
        min_cost_eta=min_eta,
        positivity_ok=positivity_ok,
        lipschitz=lipschitz,
        clamped_fraction_xi=clamped["xi"],
        clamped_fraction_eta=clamped["eta"],
        subadditivity_violations=violations,
        non_finite=non_finite,
        f_sup=f_sup,
        max_cost=max_cost,
        warnings=warnings,
        fatal=bool(not positivity_ok or non_finite),
        messages=messages,
    )

    for warning in warnings:
        logger.warning(f"{problem.name}: {warning}")
    if report.fatal:
        logger.error(f"{problem.name}: fatal validation failure: {'; '.join(messages)}")
    else:
        logger.info(f"Validated {problem.name} on {grid!r}: min cost {report.min_cost:.6g}, |f|<={f_sup:.6g}")
    return report
