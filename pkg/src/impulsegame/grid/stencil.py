"""
Multilinear interpolation stencils.

A stencil holds, for every query point, the flat indices of the ``2^n``
corners of its grid cell and the matching barycentric weights. Applying a
stencil to node values is a gather followed by a weighted sum, so the solver
builds the stencils of its foot points once and reuses them on every sweep.
"""

import itertools
from typing import Tuple

import numpy as np

from impulsegame.grid.grid import Grid
from impulsegame.utils.errors import GridError

# Local coordinates within this distance of a node are snapped onto it
SNAP_TOL = 1e-9


def multilinear_stencil(grid: Grid, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Corner indices and weights of the multilinear interpolant at ``points``.

    Points are first clamped componentwise into the box. Weights are
    non-negative and sum to one, and a point lying on a node puts weight
    exactly one on that node.

    Args:
        grid: The grid
        points: Query points, shape ``(..., dim)``

    Returns:
        Tuple of ``(indices, weights)``, both shaped ``(..., 2**dim)``

    Raises:
        GridError: If a query point is not finite or has the wrong dimension
    """
    pts = np.asarray(points, dtype=float)
    if pts.shape[-1] != grid.dim:
        raise GridError(f"query points have dimension {pts.shape[-1]}, grid has {grid.dim}")
    if not np.all(np.isfinite(pts)):
        raise GridError("interpolation query contains non-finite coordinates")

    lead = pts.shape[:-1]
    flat = grid.clamp(pts.reshape(-1, grid.dim))
    shape = np.array(grid.shape)

    t = (flat - grid.lo_array) / grid.spacing
    nearest = np.rint(t)
    t = np.where(np.abs(t - nearest) <= SNAP_TOL, nearest, t)
    base = np.minimum(np.floor(t), shape - 2).astype(np.int64)
    frac = t - base

    corners = np.array(list(itertools.product((0, 1), repeat=grid.dim)), dtype=np.int64)
    # (P, 2^n, n): per-corner multi-index and per-axis factor
    multi = base[:, None, :] + corners[None, :, :]
    factors = np.where(corners[None, :, :] == 1, frac[:, None, :], 1.0 - frac[:, None, :])
    weights = np.prod(factors, axis=-1)
    indices = np.ravel_multi_index(tuple(np.moveaxis(multi, -1, 0)), grid.shape)

    n_corners = corners.shape[0]
    return indices.reshape(lead + (n_corners,)), weights.reshape(lead + (n_corners,))


def apply_stencil(values: np.ndarray, indices: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Interpolated values ``sum_k w_k * v[i_k]`` for a precomputed stencil."""
    return np.sum(weights * values[indices], axis=-1)
