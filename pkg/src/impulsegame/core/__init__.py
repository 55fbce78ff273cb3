"""QVI operators, the fixed-point solver and the certification oracles."""

from impulsegame.core.operators import (
    HamiltonianKind,
    InterventionOperator,
    Nesting,
    QviForm,
    QviOperator,
    SemiLagrangianOperator,
    StepParams,
    auto_step,
    hamiltonian,
    hjbi_residual,
    intervene,
    qvi_update,
    sl_value,
)
from impulsegame.core.oracle import ValueInterval, gauss_seidel_solve, tree_value
from impulsegame.core.solver import (
    InitKind,
    SolveReport,
    SolverParams,
    UniquenessCheck,
    check_lemma1,
    check_mu_scaling,
    isaacs_gap,
    solve,
    uniqueness_gap,
)

__all__ = [
    "HamiltonianKind",
    "InitKind",
    "InterventionOperator",
    "Nesting",
    "QviForm",
    "QviOperator",
    "SemiLagrangianOperator",
    "SolveReport",
    "SolverParams",
    "StepParams",
    "UniquenessCheck",
    "ValueInterval",
    "auto_step",
    "check_lemma1",
    "check_mu_scaling",
    "gauss_seidel_solve",
    "hamiltonian",
    "hjbi_residual",
    "intervene",
    "isaacs_gap",
    "qvi_update",
    "sl_value",
    "solve",
    "tree_value",
    "uniqueness_gap",
]
