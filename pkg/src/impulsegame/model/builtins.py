"""
Built-in game instances and the problem registry.

Every problem is produced by a factory taking a dictionary of scalar
parameters. The built-ins are:

- ``constant``: no drift, constant gain ``f0``, translation jumps, constant costs
- ``linear1d``: drift ``theta_1 + theta_2``, gain ``x^2``; the Hamiltonian separates
- ``impulse1d``: no drift, gain ``x^2``, only player-eta can (profitably) jump
- ``portfolio``: two-state market/investor game with proportional-plus-fixed costs

Custom problems join the same path through :func:`register_problem`.
"""

from typing import Callable, Dict, Mapping, Optional, Tuple

import numpy as np

from impulsegame.model.problem import LipschitzHints, ProblemSpec
from impulsegame.utils.errors import PositivityError, ProblemError
from impulsegame.utils.logging import get_logger

logger = get_logger(__name__)

ProblemFactory = Callable[[Dict[str, float]], ProblemSpec]

PARAM_ALIASES = {
    "λ": "lam",
    "lambda": "lam",
    "discount": "lam",
    "κ": "kappa",
}

# Parameters that must be strictly positive wherever a problem declares them
POSITIVE_PARAMS = ("lam", "W", "scale")

# Impulse-cost parameters; a non-positive value breaks the cost positivity assumption
POSITIVE_COST_PARAMS = ("kappa", "xi_cost", "c_fixed", "chi_fixed")

_REGISTRY: Dict[str, Tuple[ProblemFactory, Dict[str, float]]] = {}


def register_problem(name: str, factory: ProblemFactory, defaults: Mapping[str, float]) -> None:
    """
    Register a problem factory under ``name``.

    Args:
        name: Name used by :func:`make_builtin` and run configurations
        factory: Callable building a ``ProblemSpec`` from resolved parameters
        defaults: Every accepted parameter with its default value
    """
    if name in _REGISTRY:
        logger.warning(f"Problem '{name}' already registered, replacing")
    _REGISTRY[name] = (factory, dict(defaults))
    logger.debug(f"Registered problem '{name}' with parameters {sorted(defaults)}")


def available_problems() -> Tuple[str, ...]:
    """Names of every registered problem."""
    return tuple(sorted(_REGISTRY))


def resolve_params(name: str, params: Optional[Mapping[str, float]] = None) -> Dict[str, float]:
    """
    Merge user parameters over a problem's defaults and check them.

    Raises:
        ProblemError: For an unknown problem or parameter, a non-numeric value,
            or a non-positive discount / cost / width
    """
    if name not in _REGISTRY:
        raise ProblemError(f"Unknown problem '{name}'. Available: {', '.join(available_problems())}")
    _, defaults = _REGISTRY[name]

    resolved = dict(defaults)
    for key, value in (params or {}).items():
        key = PARAM_ALIASES.get(key, key)
        if key not in defaults:
            raise ProblemError(f"Unknown parameter '{key}' for problem '{name}'. Expected one of {sorted(defaults)}")
        try:
            resolved[key] = float(value)
        except (TypeError, ValueError):
            raise ProblemError(f"Parameter '{key}' of problem '{name}' must be a number, got {value!r}")
        if not np.isfinite(resolved[key]):
            raise ProblemError(f"Parameter '{key}' of problem '{name}' must be finite")

    for key in POSITIVE_PARAMS:
        if key in resolved and resolved[key] <= 0:
            raise ProblemError(f"Parameter '{key}' of problem '{name}' must be > 0, got {resolved[key]}")
    for key in POSITIVE_COST_PARAMS:
        if key in resolved and resolved[key] <= 0:
            raise PositivityError(
                f"Parameter '{key}' of problem '{name}' must be > 0, got {resolved[key]}: "
                "impulse costs must be strictly positive"
            )
    return resolved


def make_builtin(name: str, params: Optional[Mapping[str, float]] = None) -> ProblemSpec:
    """
    Build a registered problem.

    Args:
        name: Problem name (``constant``, ``linear1d``, ``impulse1d``, ``portfolio`` or a
            registered custom name)
        params: Scalar parameters overriding the defaults

    Returns:
        ProblemSpec: The fully populated game instance
    """
    resolved = resolve_params(name, params)
    factory, _ = _REGISTRY[name]
    problem = factory(resolved)
    logger.debug(f"Built problem {problem!r}")
    return problem


def _symmetric_candidates(width: float, count: float) -> np.ndarray:
    """Uniform candidates on ``[-width, width]`` without the null action."""
    n = int(count)
    if n < 2:
        raise ProblemError(f"need at least 2 impulse candidates, got {n}")
    values = np.linspace(-width, width, n)
    return values[values != 0.0][:, None]


def _translation(x: np.ndarray, action: np.ndarray) -> np.ndarray:
    return np.broadcast_to(action, x.shape)


# -- constant --

def _constant(p: Dict[str, float]) -> ProblemSpec:
    dim = int(p["dim"])
    if dim < 1:
        raise ProblemError(f"dim must be >= 1, got {dim}")
    f0, kappa, step = p["f0"], p["kappa"], p["jump"]
    jumps = np.concatenate([np.eye(dim) * step, -np.eye(dim) * step])

    return ProblemSpec(
        name="constant",
        dim=dim,
        drift=lambda x, a, b: np.zeros_like(x),
        gain=lambda x, a, b: np.full(x.shape[0], f0),
        jump_xi=_translation,
        jump_eta=_translation,
        cost_xi=lambda x, k: np.full(x.shape[0], kappa),
        cost_eta=lambda x, k: np.full(x.shape[0], kappa),
        ctrl_set_a=np.zeros((1, 1)),
        ctrl_set_b=np.zeros((1, 1)),
        impulse_set_xi=jumps,
        impulse_set_eta=jumps,
        discount=p["lam"],
        lipschitz_hints=LipschitzHints(drift=0.0, gain=0.0, jump_xi=0.0, jump_eta=0.0, cost_xi=0.0, cost_eta=0.0),
        params=p,
    )


# -- linear1d --

def _linear1d(p: Dict[str, float]) -> ProblemSpec:
    kappa = p["kappa"]
    controls = np.array([[-1.0], [0.0], [1.0]]) * p["scale"]
    jumps = _symmetric_candidates(p["W"], p["n_jump"])

    return ProblemSpec(
        name="linear1d",
        dim=1,
        drift=lambda x, a, b: np.broadcast_to(a + b, x.shape),
        gain=lambda x, a, b: x[:, 0] ** 2,
        jump_xi=_translation,
        jump_eta=_translation,
        cost_xi=lambda x, k: np.full(x.shape[0], kappa),
        cost_eta=lambda x, k: np.full(x.shape[0], kappa),
        ctrl_set_a=controls,
        ctrl_set_b=controls,
        impulse_set_xi=jumps,
        impulse_set_eta=jumps,
        discount=p["lam"],
        lipschitz_hints=LipschitzHints(drift=0.0, jump_xi=0.0, jump_eta=0.0, cost_xi=0.0, cost_eta=0.0),
        params=p,
    )


# -- impulse1d --

def _impulse1d(p: Dict[str, float]) -> ProblemSpec:
    kappa, xi_cost = p["kappa"], p["xi_cost"]

    return ProblemSpec(
        name="impulse1d",
        dim=1,
        drift=lambda x, a, b: np.zeros_like(x),
        gain=lambda x, a, b: x[:, 0] ** 2,
        jump_xi=_translation,
        jump_eta=_translation,
        # player-xi is priced out of the game
        cost_xi=lambda x, k: np.full(x.shape[0], xi_cost),
        cost_eta=lambda x, k: np.full(x.shape[0], kappa),
        ctrl_set_a=np.zeros((1, 1)),
        ctrl_set_b=np.zeros((1, 1)),
        impulse_set_xi=np.ones((1, 1)),
        impulse_set_eta=_symmetric_candidates(p["W"], p["n_eta"]),
        discount=p["lam"],
        lipschitz_hints=LipschitzHints(drift=0.0, jump_xi=0.0, jump_eta=0.0, cost_xi=0.0, cost_eta=0.0),
        params=p,
    )


# -- portfolio --

def _portfolio(p: Dict[str, float]) -> ProblemSpec:
    """
    Market (player-xi) against investor (player-eta).

    State ``x = (position, reference)``: the investor's position and the
    market's reference level. The investor trades continuously at rate
    ``theta_2`` and rebalances its position by impulses; the market drifts the
    reference at rate ``theta_1`` and shocks it by impulses. Both revert to 0
    at rate ``r``. The investor pays a quadratic holding and tracking cost.
    """
    r, q_hold, q_track = p["r"], p["q_hold"], p["q_track"]
    c_fixed, c_prop = p["c_fixed"], p["c_prop"]
    chi_fixed, chi_prop = p["chi_fixed"], p["chi_prop"]
    market_rates = np.array([[-1.0], [0.0], [1.0]]) * p["sigma"]
    trading_rates = np.array([[-1.0], [0.0], [1.0]]) * p["u"]
    jumps = _symmetric_candidates(p["W"], p["n_jump"])

    def drift(x: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.column_stack([b[0] - r * x[:, 0], a[0] - r * x[:, 1]])

    def gain(x: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return q_hold * x[:, 0] ** 2 + q_track * (x[:, 0] - x[:, 1]) ** 2

    def shock_reference(x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.array([0.0, xi[0]]), x.shape)

    def rebalance(x: np.ndarray, eta: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.array([eta[0], 0.0]), x.shape)

    return ProblemSpec(
        name="portfolio",
        dim=2,
        drift=drift,
        gain=gain,
        jump_xi=shock_reference,
        jump_eta=rebalance,
        cost_xi=lambda x, xi: np.full(x.shape[0], c_fixed + c_prop * abs(xi[0])),
        cost_eta=lambda x, eta: np.full(x.shape[0], chi_fixed + chi_prop * abs(eta[0])),
        ctrl_set_a=market_rates,
        ctrl_set_b=trading_rates,
        impulse_set_xi=jumps,
        impulse_set_eta=jumps,
        discount=p["lam"],
        lipschitz_hints=LipschitzHints(drift=r, jump_xi=0.0, jump_eta=0.0, cost_xi=0.0, cost_eta=0.0),
        params=p,
    )


register_problem("constant", _constant, {"f0": 2.0, "lam": 1.0, "kappa": 1.0, "jump": 0.5, "dim": 1})
register_problem("linear1d", _linear1d, {"lam": 1.0, "scale": 1.0, "kappa": 10.0, "W": 1.0, "n_jump": 5})
register_problem("impulse1d", _impulse1d, {"lam": 1.0, "kappa": 4.0, "W": 4.0, "n_eta": 161, "xi_cost": 1.0e6})
register_problem(
    "portfolio",
    _portfolio,
    {
        "lam": 1.0,
        "r": 0.5,
        "sigma": 0.5,
        "u": 1.0,
        "q_hold": 1.0,
        "q_track": 1.0,
        "c_fixed": 0.5,
        "c_prop": 0.1,
        "chi_fixed": 0.5,
        "chi_prop": 0.1,
        "W": 1.0,
        "n_jump": 5,
    },
)
