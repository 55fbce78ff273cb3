"""
Feedback policies read off a converged value field.

At every node the QVI update selects one branch: the continuous step, the
minimizer's impulse or the maximizer's impulse. The policy records that
branch, the arg-optimum of every branch, and whether each player's obstacle
is active at the node.
"""

from enum import Enum
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from impulsegame.core.operators import QviForm, QviOperator, StepParams
from impulsegame.core.solver import SolveReport
from impulsegame.grid.field import CSV_FLOAT_FORMAT
from impulsegame.grid.grid import Grid
from impulsegame.model.problem import ControlPair, ProblemSpec
from impulsegame.utils.errors import GridError, NotConvergedError
from impulsegame.utils.logging import get_logger

logger = get_logger(__name__)

# Slack used for the obstacle-activity flags
ACTIVE_TOL = 1e-9


class Decision(str, Enum):
    CONTINUOUS = "continuous"
    IMPULSE_ETA = "impulse_eta"
    IMPULSE_XI = "impulse_xi"


# Integer codes stored per node, in tie-breaking priority order
DECISION_CODES = (Decision.CONTINUOUS, Decision.IMPULSE_ETA, Decision.IMPULSE_XI)


class NodeDecision(BaseModel):
    """Everything the policy knows about one node."""

    node: int
    decision: Decision
    controls: ControlPair
    xi_action: int
    eta_action: int
    xi_active: bool
    eta_active: bool


class PolicyField(BaseModel):
    """Per-node feedback decisions for one QVI form."""

    grid: Grid
    form: QviForm
    decision: np.ndarray
    ctrl_a: np.ndarray
    ctrl_b: np.ndarray
    xi_action: np.ndarray
    eta_action: np.ndarray
    xi_active: np.ndarray
    eta_active: np.ndarray

    class Config:
        arbitrary_types_allowed = True

    def at_node(self, node: int) -> NodeDecision:
        if not 0 <= node < self.grid.size:
            raise GridError(f"node {node} out of range [0, {self.grid.size})")
        return NodeDecision(
            node=node,
            decision=DECISION_CODES[int(self.decision[node])],
            controls=ControlPair(a=int(self.ctrl_a[node]), b=int(self.ctrl_b[node])),
            xi_action=int(self.xi_action[node]),
            eta_action=int(self.eta_action[node]),
            xi_active=bool(self.xi_active[node]),
            eta_active=bool(self.eta_active[node]),
        )

    def lookup(self, x: Sequence[float]) -> NodeDecision:
        """Decision at the node nearest to ``x``."""
        return self.at_node(self.grid.nearest_index(x))

    def counts(self) -> dict:
        """Number of nodes per decision."""
        return {d.value: int(np.sum(self.decision == code)) for code, d in enumerate(DECISION_CODES)}

    def __repr__(self) -> str:
        return f"<PolicyField form={self.form.value} {self.grid!r} {self.counts()}>"


def extract_policy(
    report: SolveReport, problem: ProblemSpec, params: StepParams, tol: float = ACTIVE_TOL
) -> PolicyField:
    """
    Read the feedback policy off a converged solve.

    The decision at a node is the branch whose value the QVI update returns;
    ties go to the continuous step, then the minimizer's impulse, then the
    maximizer's impulse.

    Args:
        report: A converged solve
        problem: The game instance that was solved
        params: The step used for the continuous branch
        tol: Slack of the obstacle-activity flags

    Raises:
        NotConvergedError: If the report did not converge
    """
    if not report.converged:
        raise NotConvergedError(f"refusing to extract a policy from a non-converged solve: {report!r}")
    grid = report.grid
    operator = QviOperator(problem, grid, report.form, params.h)
    v = report.field.values
    branches = operator.branches(v)

    decision = np.where(
        branches.s == branches.value,
        0,
        np.where(branches.n == branches.value, 1, 2),
    ).astype(np.int8)

    policy = PolicyField(
        grid=grid,
        form=report.form,
        decision=decision,
        ctrl_a=branches.arg_a,
        ctrl_b=branches.arg_b,
        xi_action=branches.arg_xi,
        eta_action=branches.arg_eta,
        xi_active=branches.m >= v - tol,
        eta_active=branches.n <= v + tol,
    )
    logger.info(f"Extracted policy for {problem.name}: {policy.counts()}")
    return policy


def write_policy_csv(policy: PolicyField, problem: ProblemSpec, path: Union[str, Path]) -> Path:
    """Write one row per node: coordinates, decision, arg-optima and activity flags."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    nodes = policy.grid.nodes()
    frame = pd.DataFrame({f"x{i}": nodes[:, i] for i in range(policy.grid.dim)})
    frame["decision"] = [DECISION_CODES[int(c)].value for c in policy.decision]
    frame["ctrl_a"] = policy.ctrl_a
    frame["ctrl_b"] = policy.ctrl_b
    frame["xi_action"] = policy.xi_action
    frame["eta_action"] = policy.eta_action
    frame["xi_active"] = policy.xi_active.astype(int)
    frame["eta_active"] = policy.eta_active.astype(int)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    logger.debug(f"Wrote policy for {problem.name} to {path}")
    return path
