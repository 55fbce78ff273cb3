"""
Scalar fields on a grid: interpolation, norms and CSV persistence.
"""

from pathlib import Path
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, root_validator

from impulsegame.grid.grid import Grid, build_grid
from impulsegame.grid.stencil import apply_stencil, multilinear_stencil
from impulsegame.utils.errors import GridError
from impulsegame.utils.logging import get_logger

logger = get_logger(__name__)

# 17 significant digits reproduce any float64 exactly
CSV_FLOAT_FORMAT = "%.17g"


class ValueField(BaseModel):
    """
    One finite value per grid node, in row-major node order.

    The values array is copied on construction and made read-only, so a
    field can be shared between concurrent readers.
    """

    grid: Grid
    values: np.ndarray
    form_tag: Optional[str] = None

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @root_validator(pre=True)
    def validate_values(cls, data: Any) -> Any:
        """Copy the values into a finite, read-only vector of the grid's size."""
        grid, values = data.get("grid"), data.get("values")
        if grid is None or values is None:
            return data
        arr = np.array(values, dtype=float).reshape(-1)
        size = grid.size if isinstance(grid, Grid) else Grid(**dict(grid)).size
        if arr.shape[0] != size:
            raise ValueError(f"field has {arr.shape[0]} values, grid has {size} nodes")
        if not np.all(np.isfinite(arr)):
            raise ValueError("field values must be finite")
        arr.flags.writeable = False
        return {**data, "values": arr}

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def as_array(self) -> np.ndarray:
        """Values reshaped onto the grid's axes."""
        return self.values.reshape(self.grid.shape)

    def shifted(self, k: float) -> "ValueField":
        return ValueField(grid=self.grid, values=self.values + k, form_tag=self.form_tag)

    def scaled(self, mu: float) -> "ValueField":
        return ValueField(grid=self.grid, values=self.values * mu, form_tag=self.form_tag)

    def __repr__(self) -> str:
        tag = f" form={self.form_tag}" if self.form_tag else ""
        return f"<ValueField {self.grid!r}{tag} sup={self.sup_norm():.6g}>"


def make_field(grid: Grid, values: Any, form_tag: Optional[str] = None) -> ValueField:
    """Build a field, mapping construction errors to ``GridError``."""
    try:
        return ValueField(grid=grid, values=values, form_tag=form_tag)
    except ValueError as e:
        raise GridError(str(e)) from e


def constant_field(grid: Grid, value: float, form_tag: Optional[str] = None) -> ValueField:
    return make_field(grid, np.full(grid.size, float(value)), form_tag)


def field_from_function(grid: Grid, fn: Callable[[np.ndarray], np.ndarray], form_tag: Optional[str] = None) -> ValueField:
    """
    Sample a vectorized function at every node.

    Args:
        grid: The grid
        fn: Maps node coordinates ``(size, dim)`` to values ``(size,)``
        form_tag: Optional provenance tag
    """
    return make_field(grid, fn(grid.nodes()), form_tag)


def interpolate_many(field: ValueField, points: np.ndarray) -> np.ndarray:
    """Interpolated values at a batch of points, shape ``points.shape[:-1]``."""
    indices, weights = multilinear_stencil(field.grid, points)
    return apply_stencil(field.values, indices, weights)


def interpolate(field: ValueField, x: Union[float, Sequence[float], np.ndarray]) -> float:
    """
    Value of the multilinear interpolant at ``x``.

    ``x`` is clamped componentwise into the box first; the result at a node
    is that node's value exactly.

    Raises:
        GridError: If ``x`` is not finite
    """
    point = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
    return float(interpolate_many(field, point)[0])


def check_same_grid(f1: ValueField, f2: ValueField) -> None:
    if f1.grid != f2.grid:
        raise GridError(f"grid mismatch: {f1.grid!r} vs {f2.grid!r}")


def sup_norm_diff(f1: ValueField, f2: ValueField) -> float:
    """
    Maximum absolute nodewise difference of two fields on the same grid.

    Raises:
        GridError: If the fields live on different grids
    """
    check_same_grid(f1, f2)
    return float(np.max(np.abs(f1.values - f2.values)))


def discrete_lipschitz(field: ValueField) -> float:
    """Largest slope between adjacent nodes over all axes."""
    arr = field.as_array()
    slopes = [
        np.max(np.abs(np.diff(arr, axis=axis))) / dx
        for axis, dx in enumerate(field.grid.spacing)
    ]
    return float(max(slopes))


def write_field_csv(field: ValueField, path: Union[str, Path]) -> Path:
    """
    Write a field as CSV with header ``x0,...,x{n-1},value``, one node per row.

    Returns:
        Path: The written file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    nodes = field.grid.nodes()
    frame = pd.DataFrame({f"x{i}": nodes[:, i] for i in range(field.grid.dim)})
    frame["value"] = field.values
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    logger.debug(f"Wrote {field!r} to {path}")
    return path


def read_field_csv(path: Union[str, Path], grid: Optional[Grid] = None) -> ValueField:
    """
    Read a field written by :func:`write_field_csv`.

    Without ``grid`` the grid is reconstructed from the node coordinates.
    With ``grid`` the file's nodes must match it.

    Raises:
        GridError: If the file does not describe a field on a uniform grid
    """
    frame = pd.read_csv(path, float_precision="round_trip")
    coords = [c for c in frame.columns if c != "value"]
    if "value" not in frame.columns or not coords:
        raise GridError(f"{path}: expected columns x0..x{{n-1}},value")
    nodes = frame[coords].to_numpy(dtype=float)

    if grid is None:
        axes = [np.unique(nodes[:, i]) for i in range(nodes.shape[1])]
        grid = build_grid([a[0] for a in axes], [a[-1] for a in axes], [len(a) for a in axes])
    if nodes.shape != (grid.size, grid.dim) or not np.allclose(nodes, grid.nodes(), rtol=0.0, atol=1e-9):
        raise GridError(f"{path}: node coordinates do not match {grid!r}")
    return make_field(grid, frame["value"].to_numpy(dtype=float))
