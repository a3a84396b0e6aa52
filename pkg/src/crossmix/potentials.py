"""Drift-inducing potentials on the torus and the constants derived
from them.

``build_pair`` samples two potentials, forms the drift fields
``V = d/dx (V1 - V2)`` and ``W = d/dx V2``, and keeps face-sampled
derivatives for the flux assembly.  ``gronwall_constants`` evaluates the
explicit envelope constants

    alpha = |V|_{W^{2,1}} + |V W|_{W^{1,1}} + |V^2|_{W^{1,1}}
            + |V^2|_{Linf} |V|_{L1},
    beta  = |V^2|_{Linf},

with every norm taken discretely; products are sampled cell-wise before
differencing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .grid import Grid, GridField, lp_norm, periodic_diff, quadrature, sobolev_norm

KINDS = ("zero", "cosine_sum", "tabulated")
MEAN_FREE_TOL = 1e-10
H3H4_DEFAULT_CEILING = 1e6

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PotentialSpec:
    """Description of one potential: an analytic cosine sum, a table of
    cell samples, or identically zero."""

    kind: str
    terms: tuple = ()  # (amplitude, wavenumber, phase) triples
    table: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "cosine_sum":
            clean = []
            for term in self.terms:
                amp, wavenumber, phase = term
                if int(wavenumber) != wavenumber or wavenumber < 1:
                    raise ValueError(
                        f"wavenumber must be a positive integer, got {wavenumber!r}"
                    )
                clean.append((float(amp), int(wavenumber), float(phase)))
            object.__setattr__(self, "terms", tuple(clean))
        if self.kind == "tabulated":
            if self.table is None:
                raise ValueError("tabulated spec needs a table of samples")
            tab = np.asarray(self.table, dtype=float)
            if not np.all(np.isfinite(tab)):
                raise ValueError("tabulated potential values must be finite")
            tab = tab.copy()
            tab.setflags(write=False)
            object.__setattr__(self, "table", tab)

    @property
    def analytic(self) -> bool:
        return self.kind in ("zero", "cosine_sum")

    def sample(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "cosine_sum":
            out = np.zeros_like(x)
            for amp, k, phase in self.terms:
                out += amp * np.cos(TWO_PI * k * x + phase)
            return out
        raise ValueError("tabulated potentials are sampled via their table")

    def sample_derivative(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros_like(x)
        out = np.zeros_like(x)
        for amp, k, phase in self.terms:
            out -= amp * TWO_PI * k * np.sin(TWO_PI * k * x + phase)
        return out

    def sample_second_derivative(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros_like(x)
        out = np.zeros_like(x)
        for amp, k, phase in self.terms:
            out -= amp * (TWO_PI * k) ** 2 * np.cos(TWO_PI * k * x + phase)
        return out

    def on_grid(self, grid: Grid) -> GridField:
        if self.kind == "tabulated":
            if self.table.shape != (grid.n_cells,):
                raise DimensionError(
                    f"tabulated potential has {self.table.shape[0]} samples, "
                    f"grid has {grid.n_cells} cells"
                )
            return GridField(grid, self.table)
        return GridField(grid, self.sample(grid.cell_centers))


def zero_potential() -> PotentialSpec:
    return PotentialSpec("zero")


def cosine_potential(*terms) -> PotentialSpec:
    return PotentialSpec("cosine_sum", terms=tuple(terms))


def tabulated_potential(values) -> PotentialSpec:
    return PotentialSpec("tabulated", table=np.asarray(values, dtype=float))


@dataclass(frozen=True)
class PotentialPair:
    """Sampled potentials plus the derived drift fields.

    Face arrays index faces by their left cell: entry j belongs to the
    face between cells j and j+1 (mod n).
    """

    grid: Grid
    v1: GridField
    v2: GridField
    v1_x: GridField
    v2_x: GridField
    V: GridField
    W: GridField
    V_x: GridField
    v1_x_face: np.ndarray
    v2_x_face: np.ndarray
    drift_face_stack: np.ndarray  # shape (2, n), rows v1_x_face / v2_x_face
    drift_face_sup: float

    @property
    def V_face(self) -> np.ndarray:
        return self.v1_x_face - self.v2_x_face

    @property
    def W_face(self) -> np.ndarray:
        return self.v2_x_face


@dataclass(frozen=True)
class GronwallConstants:
    alpha: float
    beta: float


@dataclass(frozen=True)
class H3H4Report:
    h3_norms: tuple
    h4_norm: float
    ceiling: float
    passed: bool


def _center_derivative(spec: PotentialSpec, grid: Grid, sampled: GridField) -> GridField:
    if spec.analytic:
        return GridField(grid, spec.sample_derivative(grid.cell_centers))
    return periodic_diff(sampled)


def _face_derivative(spec: PotentialSpec, grid: Grid, center_deriv: GridField) -> np.ndarray:
    if spec.analytic:
        return spec.sample_derivative(grid.face_positions)
    # interpolate the centred derivative to faces
    d = center_deriv.values
    return 0.5 * (d + np.roll(d, -1))


def build_pair(spec1: PotentialSpec, spec2: PotentialSpec, grid: Grid) -> PotentialPair:
    """Sample both potentials and derive V, W and their face values."""
    v1 = spec1.on_grid(grid)
    v2 = spec2.on_grid(grid)
    v1_x = _center_derivative(spec1, grid, v1)
    v2_x = _center_derivative(spec2, grid, v2)
    V = GridField(grid, v1_x.values - v2_x.values)
    W = v2_x
    if spec1.analytic and spec2.analytic:
        V_x = GridField(
            grid,
            spec1.sample_second_derivative(grid.cell_centers)
            - spec2.sample_second_derivative(grid.cell_centers),
        )
    else:
        V_x = periodic_diff(V)
    v1_x_face = _face_derivative(spec1, grid, v1_x)
    v2_x_face = _face_derivative(spec2, grid, v2_x)
    v1_x_face.setflags(write=False)
    v2_x_face.setflags(write=False)
    drift_stack = np.stack([v1_x_face, v2_x_face])
    drift_stack.setflags(write=False)
    pair = PotentialPair(
        grid=grid,
        v1=v1,
        v2=v2,
        v1_x=v1_x,
        v2_x=v2_x,
        V=V,
        W=W,
        V_x=V_x,
        v1_x_face=v1_x_face,
        v2_x_face=v2_x_face,
        drift_face_stack=drift_stack,
        drift_face_sup=float(np.abs(drift_stack).max()),
    )
    for name, drift in (("V", V), ("W", W)):
        drift_mean = quadrature(drift)
        if abs(drift_mean) > MEAN_FREE_TOL:
            raise ValueError(
                f"{name} has nonzero mean {drift_mean:.3e}; derivative of a "
                "periodic potential must integrate to zero"
            )
    return pair


def check_h3_h4(pair: PotentialPair, ceiling: float = H3H4_DEFAULT_CEILING) -> H3H4Report:
    """Discrete smoothness check on the potentials.

    Every grid function has finite discrete norms, so membership in the
    continuum spaces is operationalised as staying below a ceiling;
    refinement stability is checked separately by the verify command.
    """
    w21_v1 = sobolev_norm(pair.v1, 2, 1)
    w21_v2 = sobolev_norm(pair.v2, 2, 1)
    diff = GridField(pair.grid, pair.v1.values - pair.v2.values)
    w31 = sobolev_norm(diff, 3, 1)
    passed = max(w21_v1, w21_v2, w31) <= ceiling
    return H3H4Report(h3_norms=(w21_v1, w21_v2), h4_norm=w31, ceiling=ceiling, passed=passed)


def gronwall_constants(pair: PotentialPair) -> GronwallConstants:
    """Envelope constants from the drift fields, all norms discrete."""
    grid = pair.grid
    V = pair.V
    VW = GridField(grid, V.values * pair.W.values)
    V2 = GridField(grid, V.values * V.values)
    v2_sup = float(V2.values.max()) if grid.n_cells else 0.0
    alpha = (
        sobolev_norm(V, 2, 1)
        + sobolev_norm(VW, 1, 1)
        + sobolev_norm(V2, 1, 1)
        + v2_sup * lp_norm(V, 1)
    )
    beta = v2_sup
    return GronwallConstants(alpha=alpha, beta=beta)
