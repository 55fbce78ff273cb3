"""
Rectilinear grids over a truncated box of R^n.

Nodes are ordered row-major with axis 0 slowest, so the flat index of node
``(i_0, ..., i_{n-1})`` is ``np.ravel_multi_index(i, shape)``.
"""

from typing import Any, List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, root_validator, validator

from impulsegame.utils.errors import GridError
from impulsegame.utils.logging import get_logger

logger = get_logger(__name__)

# Flat node indices must fit a signed 32-bit index
MAX_NODES = 2**31 - 1


class Grid(BaseModel):
    """Uniform axis-aligned grid on the box ``[lo, hi]``."""

    lo: Tuple[float, ...]
    hi: Tuple[float, ...]
    nodes_per_axis: Tuple[int, ...]

    class Config:
        frozen = True

    @validator("lo", "hi", pre=True)
    def validate_corner(cls, v: Any) -> Tuple[float, ...]:
        """Accept scalars and sequences; every coordinate must be finite."""
        arr = np.atleast_1d(np.asarray(v, dtype=float))
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("box corners must be non-empty vectors")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"box corners must be finite, got {arr.tolist()}")
        return tuple(float(c) for c in arr)

    @validator("nodes_per_axis", pre=True)
    def validate_nodes(cls, v: Any) -> Tuple[int, ...]:
        """At least two nodes per axis."""
        counts = tuple(int(n) for n in np.atleast_1d(np.asarray(v)))
        if any(n < 2 for n in counts):
            raise ValueError(f"every axis needs at least 2 nodes, got {list(counts)}")
        return counts

    @root_validator(skip_on_failure=True)
    def validate_box(cls, values: dict) -> dict:
        """Corners and node counts agree in dimension and the box is not degenerate."""
        lo, hi, nodes = values["lo"], values["hi"], values["nodes_per_axis"]
        if not len(lo) == len(hi) == len(nodes):
            raise ValueError(f"lo, hi and nodes_per_axis disagree in dimension: {len(lo)}, {len(hi)}, {len(nodes)}")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"degenerate box: lo {list(lo)} must be < hi {list(hi)} componentwise")
        total = 1
        for n in nodes:
            total *= n
        if total > MAX_NODES:
            raise ValueError(f"node count {total} overflows the index space (max {MAX_NODES})")
        return values

    # -- Derived geometry --

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.nodes_per_axis

    @property
    def size(self) -> int:
        return int(np.prod(self.nodes_per_axis, dtype=np.int64))

    @property
    def lo_array(self) -> np.ndarray:
        return np.array(self.lo)

    @property
    def hi_array(self) -> np.ndarray:
        return np.array(self.hi)

    @property
    def spacing(self) -> np.ndarray:
        """Per-axis node spacing ``(hi - lo) / (n - 1)``."""
        return (self.hi_array - self.lo_array) / (np.array(self.nodes_per_axis) - 1)

    @property
    def min_spacing(self) -> float:
        return float(self.spacing.min())

    def axes(self) -> List[np.ndarray]:
        """Node coordinates along each axis, ``lo + i * dx``."""
        return [
            lo + np.arange(n) * dx for lo, n, dx in zip(self.lo, self.nodes_per_axis, self.spacing)
        ]

    def nodes(self) -> np.ndarray:
        """All node coordinates as a ``(size, dim)`` array in row-major order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def node(self, index: int) -> np.ndarray:
        """Coordinates of the node with flat index ``index``."""
        multi = np.unravel_index(index, self.shape)
        return self.lo_array + np.array(multi) * self.spacing

    def clamp(self, points: np.ndarray) -> np.ndarray:
        """Project points componentwise onto the box."""
        return np.clip(points, self.lo_array, self.hi_array)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of points lying inside the closed box."""
        pts = np.atleast_2d(points)
        return np.all((pts >= self.lo_array) & (pts <= self.hi_array), axis=-1)

    def nearest_index(self, point: Sequence[float]) -> int:
        """Flat index of the node closest to ``point`` (after clamping)."""
        x = self.clamp(np.asarray(point, dtype=float))
        multi = np.rint((x - self.lo_array) / self.spacing).astype(np.int64)
        multi = np.clip(multi, 0, np.array(self.shape) - 1)
        return int(np.ravel_multi_index(tuple(multi), self.shape))

    def refined(self) -> "Grid":
        """The grid with every cell halved (``2n - 1`` nodes per axis)."""
        return Grid(lo=self.lo, hi=self.hi, nodes_per_axis=tuple(2 * n - 1 for n in self.nodes_per_axis))

    def __repr__(self) -> str:
        return f"<Grid lo={list(self.lo)} hi={list(self.hi)} nodes={list(self.nodes_per_axis)}>"


def build_grid(lo: Sequence[float], hi: Sequence[float], nodes_per_axis: Sequence[int]) -> Grid:
    """
    Build a uniform grid on the box ``[lo, hi]``.

    Args:
        lo: Lower box corner
        hi: Upper box corner
        nodes_per_axis: Node count per axis (each at least 2)

    Returns:
        Grid: The validated grid

    Raises:
        GridError: For a degenerate box, too few nodes or an index overflow
    """
    try:
        grid = Grid(lo=lo, hi=hi, nodes_per_axis=nodes_per_axis)
    except ValueError as e:
        raise GridError(str(e)) from e
    logger.debug(f"Built {grid!r} with {grid.size} nodes")
    return grid
