"""State containers, the density/ratio change of variables, and
initial-data generators.

The mixed representation carries ``sigma = rho1 + rho2``, the ratio
``r = rho1 / sigma`` and its log-odds ``f(r) = log(r) - log(1 - r)
= log(rho1 / rho2)``.  Vacuum cells (sigma below a floor) borrow the
ratio of the nearest non-vacuum cell; the ratio is then clamped to
[delta, 1 - delta] before taking logs.  Clamping is a detector of
leaving the well-mixed regime, not a modelling device, so clamp counts
are reported everywhere.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InitialDataError, SegregationWarning
from .grid import Grid, GridField, quadrature, total_variation
from .potentials import PotentialPair

RATIO_CLAMP = 1e-12
SIGMA_FLOOR = 1e-300
SEGREGATION_FRACTION = 0.05

FAMILIES = ("uniform", "figure1", "cosine_mix", "tabulated")

# default mixing-report ceilings: the clamp bound log((1-d)/d) ~ 27.6
# exceeds the mixing ceiling, so clamp-saturated states always fail
H1_CEILING = 1e6
TV_LOGRATIO_CEILING = 100.0
MIXING_CEILING = 25.0


@dataclass(frozen=True)
class SpeciesState:
    """Densities of the two species at one instant."""

    rho1: GridField
    rho2: GridField
    time: float = 0.0

    def __post_init__(self):
        if self.rho1.grid is not self.rho2.grid and self.rho1.grid != self.rho2.grid:
            raise ValueError("species live on different grids")
        if self.time < 0:
            raise ValueError("time must be nonnegative")
        if self.rho1.values.min() < 0 or self.rho2.values.min() < 0:
            raise ValueError("densities must be nonnegative")

    @property
    def grid(self) -> Grid:
        return self.rho1.grid

    def masses(self) -> tuple:
        return (quadrature(self.rho1), quadrature(self.rho2))

    def assert_probability(self, tol: float = 1e-10) -> None:
        m1, m2 = self.masses()
        if abs(m1 - 1.0) > tol or abs(m2 - 1.0) > tol:
            raise InitialDataError(
                f"species masses ({m1!r}, {m2!r}) deviate from 1 beyond {tol}"
            )


@dataclass(frozen=True)
class MixedState:
    """Transformed variables with clamp bookkeeping."""

    sigma: GridField
    ratio: GridField
    f_ratio: GridField
    u_field: GridField
    clamp_count: int
    clamp_mask: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def grid(self) -> Grid:
        return self.sigma.grid


def f_prime(r: float) -> float:
    """Derivative 1/(r(1-r)) of the log-odds; at least 4 on (0, 1)."""
    if not 0.0 < r < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {r!r}")
    return 1.0 / (r * (1.0 - r))


def log_odds(r: np.ndarray) -> np.ndarray:
    return np.log(r) - np.log1p(-r)


def _nearest_fill(values: np.ndarray, ok: np.ndarray) -> np.ndarray:
    """Replace entries where ``ok`` is False by the value of the nearest
    True entry in periodic distance (ties resolved to the first)."""
    n = len(values)
    ok_idx = np.flatnonzero(ok)
    bad_idx = np.flatnonzero(~ok)
    out = values.copy()
    if len(bad_idx) == 0:
        return out
    if len(ok_idx) == 0:
        out[:] = 0.5
        return out
    d = np.abs(bad_idx[:, None] - ok_idx[None, :])
    d = np.minimum(d, n - d)
    out[bad_idx] = values[ok_idx[np.argmin(d, axis=1)]]
    return out


def to_mixed(
    state: SpeciesState,
    pair: PotentialPair | None = None,
    ratio_clamp: float = RATIO_CLAMP,
    sigma_floor: float = SIGMA_FLOOR,
) -> MixedState:
    """Change of variables (rho1, rho2) -> (sigma, r, f(r)).

    ``pair`` feeds the drift offset of ``u = f(r) + V1 - V2``; without
    it the offset is zero.
    """
    grid = state.grid
    r1 = state.rho1.values
    r2 = state.rho2.values
    sigma = r1 + r2
    ok = sigma >= sigma_floor
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio_raw = np.where(ok, r1 / np.maximum(sigma, sigma_floor), 0.5)
    ratio = _nearest_fill(ratio_raw, ok)
    clamped_range = (ratio < ratio_clamp) | (ratio > 1.0 - ratio_clamp)
    ratio = np.clip(ratio, ratio_clamp, 1.0 - ratio_clamp)
    clamp_mask = clamped_range | ~ok
    clamp_count = int(clamp_mask.sum())
    if clamp_count > SEGREGATION_FRACTION * grid.n_cells:
        warnings.warn(
            f"{clamp_count}/{grid.n_cells} cells clamped; state is leaving "
            "the well-mixed regime",
            SegregationWarning,
            stacklevel=2,
        )
    f_vals = log_odds(ratio)
    if pair is not None:
        u_vals = f_vals + pair.v1.values - pair.v2.values
    else:
        u_vals = f_vals
    mask = clamp_mask.copy()
    mask.setflags(write=False)
    return MixedState(
        sigma=GridField(grid, sigma),
        ratio=GridField(grid, ratio),
        f_ratio=GridField(grid, f_vals),
        u_field=GridField(grid, u_vals),
        clamp_count=clamp_count,
        clamp_mask=mask,
    )


def from_mixed(mixed: MixedState, time: float = 0.0) -> SpeciesState:
    """Inverse transform: rho1 = r sigma, rho2 = (1 - r) sigma."""
    grid = mixed.grid
    r = mixed.ratio.values
    s = mixed.sigma.values
    return SpeciesState(
        rho1=GridField(grid, r * s),
        rho2=GridField(grid, (1.0 - r) * s),
        time=time,
    )


@dataclass(frozen=True)
class InitialSpec:
    """Parameters of one initial-data family.

    ``a1, k1, a2, k2`` modulate the two species, ``ratio_offset``
    tilts the ratio away from 1/2 without changing either mass, and
    ``vacuum_exponent`` controls the cusp strength of the vacuum
    family.  ``perturb`` adds a seeded random cosine modulation.
    """

    family: str
    a1: float = 0.0
    k1: int = 1
    a2: float = 0.0
    k2: int = 1
    ratio_offset: float = 0.0
    vacuum_exponent: float = 1.0 / 3.0
    table1: tuple | None = None  # (x, values) columns
    table2: tuple | None = None
    perturb: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InitialDataError(f"unknown initial family {self.family!r}")
        for name, amp in (("a1", self.a1), ("a2", self.a2)):
            if not -1.0 < amp < 1.0:
                raise InitialDataError(
                    f"modulation amplitude {name}={amp} must lie in (-1, 1)"
                )
        if self.family == "figure1" and not 0.0 <= self.vacuum_exponent < 1.0:
            raise InitialDataError(
                f"vacuum_exponent={self.vacuum_exponent} must lie in [0, 1) "
                "for an integrable profile"
            )
        if self.family == "tabulated" and (self.table1 is None or self.table2 is None):
            raise InitialDataError("tabulated family needs table1 and table2")


def _resample_periodic(x: np.ndarray, y: np.ndarray, grid: Grid) -> np.ndarray:
    """Linear interpolation of tabulated (x, value) data onto cell
    centers, wrapping the last segment around the torus."""
    order = np.argsort(x)
    x = np.asarray(x, dtype=float)[order]
    y = np.asarray(y, dtype=float)[order]
    x_ext = np.concatenate([x[-1:] - 1.0, x, x[:1] + 1.0])
    y_ext = np.concatenate([y[-1:], y, y[:1]])
    return np.interp(grid.cell_centers, x_ext, y_ext)


def _figure1_profiles(spec: InitialSpec, grid: Grid) -> tuple:
    """Cusp-and-vacuum profiles: g(x) (1 - a_i sin(k_i pi x)) with
    g(x) = x(1-x) |x - x*|^{-q}.

    The blow-up point x* is the cell center nearest 1/2; each cell
    average is approximated by four interior subsamples, none of which
    can land on a cell center, so the singular point is never evaluated.
    """
    n = grid.n_cells
    dx = grid.dx
    centers = grid.cell_centers
    x_star = centers[np.argmin(np.abs(centers - 0.5))]
    # subsample offsets +-dx/8 and +-3dx/8 inside each cell
    offsets = (np.array([1.0, 3.0, 5.0, 7.0]) / 8.0 - 0.5) * dx
    xs = centers[:, None] + offsets[None, :]
    g = xs * (1.0 - xs) / np.abs(xs - x_star) ** spec.vacuum_exponent
    rho1 = (g * (1.0 - spec.a1 * np.sin(spec.k1 * np.pi * xs))).mean(axis=1)
    rho2 = (g * (1.0 - spec.a2 * np.sin(spec.k2 * np.pi * xs))).mean(axis=1)
    return rho1, rho2


def make_initial(spec: InitialSpec, grid: Grid, rng=None) -> SpeciesState:
    """Build probability-normalised initial densities for a family."""
    x = grid.cell_centers
    if spec.family == "uniform":
        rho1 = np.ones(grid.n_cells)
        rho2 = np.ones(grid.n_cells)
    elif spec.family == "cosine_mix":
        tilt = spec.ratio_offset * np.cos(2.0 * np.pi * x)
        rho1 = 1.0 + spec.a1 * np.cos(2.0 * np.pi * spec.k1 * x) + tilt
        rho2 = 1.0 + spec.a2 * np.cos(2.0 * np.pi * spec.k2 * x) - tilt
    elif spec.family == "figure1":
        rho1, rho2 = _figure1_profiles(spec, grid)
    else:  # tabulated
        x1, y1 = spec.table1
        x2, y2 = spec.table2
        rho1 = _resample_periodic(np.asarray(x1), np.asarray(y1), grid)
        rho2 = _resample_periodic(np.asarray(x2), np.asarray(y2), grid)

    if spec.perturb:
        rng = np.random.default_rng(rng)
        for rho in (rho1, rho2):
            k = int(rng.integers(1, 5))
            phase = float(rng.uniform(0.0, 2.0 * np.pi))
            rho *= 1.0 + spec.perturb * np.cos(2.0 * np.pi * k * x + phase)

    for name, rho in (("rho1", rho1), ("rho2", rho2)):
        if rho.min() < 0.0:
            raise InitialDataError(
                f"{name} dips to {rho.min():.3e} < 0; reduce the modulation "
                "amplitudes or the ratio offset"
            )
    mass1 = grid.dx * rho1.sum()
    mass2 = grid.dx * rho2.sum()
    if mass1 <= 0.0 or mass2 <= 0.0:
        raise InitialDataError("initial profiles must carry positive mass")
    return SpeciesState(
        rho1=GridField(grid, rho1 / mass1),
        rho2=GridField(grid, rho2 / mass2),
        time=0.0,
    )


@dataclass(frozen=True)
class H1H2Report:
    llogl: float
    tv_logratio: float
    mixing_bound: float
    clamp_fraction: float
    passed: bool


def entropy_l_log_l(sigma: GridField) -> float:
    """Integral of sigma log sigma with the 0 log 0 := 0 convention."""
    s = sigma.values
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(s > 0.0, s * np.log(np.maximum(s, SIGMA_FLOOR)), 0.0)
    return float(sigma.grid.dx * integrand.sum())


def _tv_skipping(values: np.ndarray, keep: np.ndarray) -> float:
    """Total variation of the subsequence of kept cells, periodic."""
    kept = values[keep]
    if len(kept) < 2:
        return 0.0
    return float(np.abs(np.roll(kept, -1) - kept).sum())


def check_h1_h2(
    state: SpeciesState,
    llogl_ceiling: float = H1_CEILING,
    tv_ceiling: float = TV_LOGRATIO_CEILING,
    mixing_ceiling: float = MIXING_CEILING,
) -> H1H2Report:
    """Summability of the total density and regularity of the log ratio.

    ``tv_logratio`` is taken over non-clamped cells only; a clamp
    fraction above 5% fails the report outright since the log ratio is
    then saturated rather than measured.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SegregationWarning)
        mixed = to_mixed(state)
    llogl = entropy_l_log_l(mixed.sigma)
    tv_logratio = _tv_skipping(mixed.f_ratio.values, ~mixed.clamp_mask)
    mixing_bound = float(np.abs(mixed.f_ratio.values).max())
    clamp_fraction = mixed.clamp_count / state.grid.n_cells
    passed = (
        clamp_fraction <= SEGREGATION_FRACTION
        and llogl <= llogl_ceiling
        and tv_logratio <= tv_ceiling
        and mixing_bound <= mixing_ceiling
    )
    return H1H2Report(
        llogl=llogl,
        tv_logratio=tv_logratio,
        mixing_bound=mixing_bound,
        clamp_fraction=clamp_fraction,
        passed=passed,
    )
