"""
Run configuration for the command-line tool.

A run is described by one JSON (or YAML) file::

    {
      "problem": {"name": "impulse1d", "params": {"lam": 1, "kappa": 4}},
      "grid": {"lo": [-3], "hi": [3], "nodes": [241]},
      "solver": {"h": "auto", "tol_fix": 1e-10, "max_iters": 100000, "init": "zeros"},
      "forms": ["L", "U"],
      "outputs": "out/impulse1d"
    }

Validation errors are reported as ``ConfigError`` carrying the dotted path of
the offending entry.
"""

import json
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, Field, ValidationError, root_validator, validator

from impulsegame.core.operators import QviForm, StepParams, auto_step
from impulsegame.core.solver import InitKind, SolverParams
from impulsegame.grid.field import read_field_csv
from impulsegame.grid.grid import Grid, build_grid
from impulsegame.model.builtins import available_problems, make_builtin
from impulsegame.model.problem import ProblemSpec
from impulsegame.utils.errors import ConfigError
from impulsegame.utils.logging import get_logger

logger = get_logger(__name__)

THREADS_ENV = "QVI_THREADS"


class ProblemBlock(BaseModel):
    name: str
    params: Dict[str, float] = Field(default_factory=dict)

    @validator("name")
    def validate_name(cls, v: str) -> str:
        """The problem must be registered."""
        if v not in available_problems():
            raise ValueError(f"unknown problem '{v}', expected one of {list(available_problems())}")
        return v


class GridBlock(BaseModel):
    lo: List[float]
    hi: List[float]
    nodes: List[int]

    @root_validator(skip_on_failure=True)
    def validate_box(cls, values: dict) -> dict:
        """Same dimension everywhere, non-degenerate box, at least 2 nodes per axis."""
        try:
            Grid(lo=values["lo"], hi=values["hi"], nodes_per_axis=values["nodes"])
        except ValueError as e:
            raise ValueError(str(e).splitlines()[-1].strip()) from e
        return values


class SolverBlock(BaseModel):
    h: Union[float, Literal["auto"]] = "auto"
    tol_fix: float = 1e-10
    max_iters: int = 100000
    init: Union[float, str] = "zeros"
    threads: Optional[int] = None

    @validator("h")
    def validate_h(cls, v: Union[float, str]) -> Union[float, str]:
        if v != "auto" and not v > 0:
            raise ValueError(f"h must be > 0 or 'auto', got {v}")
        return v

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
    def validate_threads(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and v < 1:
            raise ValueError(f"threads must be >= 1, got {v}")
        return v


class SimulateBlock(BaseModel):
    x0: List[float]
    horizon: float = 20.0
    h: float = 0.01
    form: Optional[QviForm] = None
    max_consecutive_impulses: int = 10


class VerifyBlock(BaseModel):
    tol_lemma1: float = 1e-6
    mu: float = 0.5
    uniqueness: bool = True
    residual: bool = True

    @validator("mu")
    def validate_mu(cls, v: float) -> float:
        if not 0 < v:
            raise ValueError(f"mu must be > 0, got {v}")
        return v


class CompareBlock(BaseModel):
    tolerance: Optional[float] = None


class RunConfig(BaseModel):
    """A complete run description."""

    problem: ProblemBlock
    grid: GridBlock
    solver: SolverBlock = Field(default_factory=SolverBlock)
    forms: List[QviForm] = Field(default_factory=lambda: [QviForm.L, QviForm.U])
    outputs: str = "out"
    simulate: Optional[SimulateBlock] = None
    verify: VerifyBlock = Field(default_factory=VerifyBlock)
    compare: CompareBlock = Field(default_factory=CompareBlock)

    @validator("forms")
    def validate_forms(cls, v: List[QviForm]) -> List[QviForm]:
        """At least one form, no repeats."""
        if not v:
            raise ValueError("forms must not be empty")
        if len(set(v)) != len(v):
            raise ValueError(f"forms must not repeat, got {[f.value for f in v]}")
        return v

    # -- Builders --

    def build_problem(self) -> ProblemSpec:
        return make_builtin(self.problem.name, self.problem.params)

    def build_grid(self) -> Grid:
        return build_grid(self.grid.lo, self.grid.hi, self.grid.nodes)

    def step(self, problem: ProblemSpec, grid: Grid) -> StepParams:
        h = auto_step(problem, grid) if self.solver.h == "auto" else float(self.solver.h)
        return StepParams(h=h, grid=grid).check(problem)

    def solver_params(self, problem: ProblemSpec, grid: Grid, threads: int = 1, base_dir: Optional[Path] = None) -> SolverParams:
        init = self.solver.init
        kwargs: Dict[str, Any] = {}
        if isinstance(init, str) and init == "zeros":
            kwargs["init"] = InitKind.ZEROS
        elif isinstance(init, (int, float)):
            kwargs.update(init=InitKind.CONSTANT, init_value=float(init))
        else:
            path = Path(init)
            if not path.is_absolute() and base_dir is not None:
                path = base_dir / path
            if not path.exists():
                raise ConfigError(f"initial field file {path} not found", path="solver.init")
            kwargs.update(init=InitKind.FIELD, init_field=read_field_csv(path, grid))
        return SolverParams(
            step=self.step(problem, grid),
            tol_fix=self.solver.tol_fix,
            max_iters=self.solver.max_iters,
            threads=threads,
            **kwargs,
        )

    def resolved(self, step: StepParams) -> Dict[str, Any]:
        """The configuration as a plain dict with ``"auto"`` replaced by the step in use."""
        data = json.loads(self.json())
        data["solver"]["h"] = step.h
        return data


def _error_path(error: ValidationError) -> str:
    first = error.errors()[0]
    parts = [str(p) for p in first["loc"] if p != "__root__"]
    return ".".join(parts)


def parse_config(data: Any) -> RunConfig:
    """
    Validate a configuration mapping.

    Raises:
        ConfigError: Naming the dotted path of the first invalid entry
    """
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    try:
        return RunConfig(**data)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(first["msg"], path=_error_path(e) or None) from e


def load_config(path: Union[str, Path]) -> RunConfig:
    """
    Read and validate a run configuration from a JSON or YAML file.

    Raises:
        ConfigError: If the file is missing, unparseable or invalid
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"configuration file {path} not found")
    text = path.read_text()
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    config = parse_config(data)
    logger.debug(f"Loaded configuration {path}: problem {config.problem.name}, forms {[f.value for f in config.forms]}")
    return config


def resolve_threads(cli_threads: Optional[int], config: RunConfig) -> int:
    """Thread count: ``--threads``, then ``QVI_THREADS``, then ``solver.threads``, then 1."""
    if cli_threads is not None:
        threads = cli_threads
    elif os.environ.get(THREADS_ENV):
        try:
            threads = int(os.environ[THREADS_ENV])
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {os.environ[THREADS_ENV]!r}")
    elif config.solver.threads is not None:
        threads = config.solver.threads
    else:
        threads = 1
    if threads < 1:
        raise ConfigError(f"thread count must be >= 1, got {threads}", path="solver.threads")
    return threads
