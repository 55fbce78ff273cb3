"""Rectilinear grids, multilinear interpolation and value fields."""

from impulsegame.grid.field import (
    ValueField,
    constant_field,
    discrete_lipschitz,
    field_from_function,
    interpolate,
    interpolate_many,
    make_field,
    read_field_csv,
    sup_norm_diff,
    write_field_csv,
)
from impulsegame.grid.grid import Grid, build_grid
from impulsegame.grid.stencil import apply_stencil, multilinear_stencil

__all__ = [
    "Grid",
    "ValueField",
    "apply_stencil",
    "build_grid",
    "constant_field",
    "discrete_lipschitz",
    "field_from_function",
    "interpolate",
    "interpolate_many",
    "make_field",
    "multilinear_stencil",
    "read_field_csv",
    "sup_norm_diff",
    "write_field_csv",
]
