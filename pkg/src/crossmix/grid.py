"""Discrete calculus on a uniform periodic grid of the unit torus.

Fields hold cell averages on n uniform cells of [0, 1); every operator
wraps periodically.  Derivatives are centred differences, quadrature is
the midpoint rule (exact for cell averages on a uniform grid), and
Sobolev-type norms are assembled from repeated differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError

MIN_CELLS = 8
MAX_DIFF_ORDER = 3


@dataclass(frozen=True)
class Grid:
    """Uniform partition of the unit torus into ``n_cells`` cells."""

    n_cells: int
    dx: float = field(init=False)
    cell_centers: np.ndarray = field(init=False, repr=False, compare=False)
    face_positions: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.n_cells
        if not isinstance(n, (int, np.integer)) or n < MIN_CELLS:
            raise ValueError(f"n_cells must be an integer >= {MIN_CELLS}, got {n!r}")
        dx = 1.0 / n
        if abs(dx * n - 1.0) > np.finfo(float).eps:
            raise ValueError("dx * n_cells deviates from 1 by more than one ulp")
        centers = (np.arange(n) + 0.5) * dx
        # face j sits at x=(j+1)*dx between cells j and j+1 (mod n); the
        # last face is mapped back to 0 so periodic samples stay exact
        faces = ((np.arange(n) + 1) % n) * dx
        centers.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, "dx", dx)
        object.__setattr__(self, "cell_centers", centers)
        object.__setattr__(self, "face_positions", faces)

    def refined(self, factor: int) -> "Grid":
        return Grid(self.n_cells * int(factor))


@dataclass(frozen=True)
class GridField:
    """Cell-average values attached to a grid; immutable once built."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n_cells,):
            raise DimensionError(
                f"expected {self.grid.n_cells} values, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "GridField":
        """Sample ``fn`` at cell centers (adequate for smooth functions)."""
        return cls(grid, fn(grid.cell_centers))

    @classmethod
    def _wrap(cls, grid: Grid, values: np.ndarray) -> "GridField":
        # fast path for solver-internal arrays: caller owns the buffer and
        # guarantees shape and finiteness
        obj = object.__new__(cls)
        values.setflags(write=False)
        object.__setattr__(obj, "grid", grid)
        object.__setattr__(obj, "values", values)
        return obj

    @classmethod
    def zeros(cls, grid: Grid) -> "GridField":
        return cls(grid, np.zeros(grid.n_cells))

    @classmethod
    def full(cls, grid: Grid, value: float) -> "GridField":
        return cls(grid, np.full(grid.n_cells, float(value)))


def periodic_diff(field: GridField) -> GridField:
    """Centred difference (u[i+1] - u[i-1]) / (2 dx) with periodic wrap."""
    u = field.values
    du = (np.roll(u, -1) - np.roll(u, 1)) / (2.0 * field.grid.dx)
    return GridField(field.grid, du)


def quadrature(field: GridField) -> float:
    """Midpoint-rule integral over the torus: dx * sum of cell values."""
    return float(field.grid.dx * field.values.sum())


def total_variation(field: GridField) -> float:
    """Sum of absolute jumps between neighbouring cells, wrapping around."""
    u = field.values
    return float(np.abs(np.roll(u, -1) - u).sum())


def lp_norm(field: GridField, exponent: float) -> float:
    """Discrete L^p norm; ``exponent=inf`` gives the max of |values|."""
    if math.isinf(exponent):
        return float(np.abs(field.values).max())
    if exponent < 1:
        raise ValueError(f"exponent must be >= 1 or inf, got {exponent}")
    a = np.abs(field.values)
    return float((field.grid.dx * (a**exponent).sum()) ** (1.0 / exponent))


def sobolev_norm(field: GridField, order: int, exponent: float) -> float:
    """Discrete W^{k,p} norm: sum over j <= k of the L^p norm of the
    j-th centred difference.

    ``order`` is capped at 3; higher derivatives have no consumer here.
    """
    if not isinstance(order, (int, np.integer)) or not 0 <= order <= MAX_DIFF_ORDER:
        raise ValueError(f"order must be an integer in 0..{MAX_DIFF_ORDER}, got {order!r}")
    if not math.isinf(exponent) and exponent < 1:
        raise ValueError(f"exponent must be >= 1 or inf, got {exponent}")
    total = 0.0
    current = field
    for j in range(order + 1):
        total += lp_norm(current, exponent)
        if j < order:
            current = periodic_diff(current)
    return total
