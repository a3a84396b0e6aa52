"""Runtime monitors: energies, envelope, variation norms, entropy, and
the weak-form residual.

Every a priori estimate the solver is supposed to satisfy shows up here
as a computable number: the first-order energy integral |d_x f(r) + V|,
its closed-form envelope (e0 + alpha s) exp(beta s), the eta-weighted
entropy, per-species bounded-variation norms, the cumulative H^1 budget
of sqrt(sigma), and defects of the weak formulation against separable
space-time test functions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import SegregationWarning
from .grid import GridField, periodic_diff, quadrature, total_variation
from .potentials import GronwallConstants, PotentialPair, gronwall_constants
from .solver import SchemeConfig, Trajectory
from .states import MixedState, SpeciesState, entropy_l_log_l, to_mixed

UNRELIABLE_CLAMP_FRACTION = 0.05
MIN_RESIDUAL_SNAPSHOTS = 16


@dataclass
class DiagnosticsRecord:
    """Scalar monitors at one snapshot."""

    time: float
    mass1: float
    mass2: float
    first_order_energy: float
    gronwall_envelope: float
    entropy_eta: float
    llogl: float
    tv_r: float
    tv_f: float
    bv_rho1: float
    bv_rho2: float
    sqrt_sigma_h1_cum: float
    min_density: float
    clamp_count: int
    reliable: bool

    CSV_FIELDS = (
        "time",
        "mass1",
        "mass2",
        "first_order_energy",
        "gronwall_envelope",
        "entropy_eta",
        "llogl",
        "tv_r",
        "tv_f",
        "bv_rho1",
        "bv_rho2",
        "sqrt_sigma_h1_cum",
        "min_density",
        "clamp_count",
        "reliable",
    )


def first_order_energy(mixed: MixedState, pair: PotentialPair) -> float:
    """Integral of |d_x f(r) + V|; clamped cells are excluded."""
    integrand = np.abs(periodic_diff(mixed.f_ratio).values + pair.V.values)
    if mixed.clamp_count > 0:
        integrand = np.where(mixed.clamp_mask, 0.0, integrand)
    return float(mixed.grid.dx * integrand.sum())


def gronwall_envelope(e0: float, constants: GronwallConstants, s: float) -> float:
    """Closed-form bound (e0 + alpha s) exp(beta s); nondecreasing in
    every argument."""
    if s < 0.0:
        raise ValueError(f"elapsed time must be nonnegative, got {s}")
    return (e0 + constants.alpha * s) * math.exp(s * constants.beta)


def entropy_eta(state: SpeciesState, pair: PotentialPair, eta: float) -> float:
    """Energy (1-2 eta) sigma log sigma + eta rho_i log rho_i + V_i rho_i
    integrated over the torus, with 0 log 0 := 0."""
    grid = state.grid
    rho1 = state.rho1.values
    rho2 = state.rho2.values
    sigma = rho1 + rho2

    def xlogx(a):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(a > 0.0, a * np.log(np.maximum(a, 1e-300)), 0.0)

    integrand = (
        (1.0 - 2.0 * eta) * xlogx(sigma)
        + eta * xlogx(rho1)
        + eta * xlogx(rho2)
        + pair.v1.values * rho1
        + pair.v2.values * rho2
    )
    return float(grid.dx * integrand.sum())


def species_bv(state: SpeciesState) -> tuple:
    """Per-species bounded-variation norm |rho|_{L1} + TV(rho)."""
    grid = state.grid

    def bv(field):
        return float(grid.dx * np.abs(field.values).sum()) + total_variation(field)

    return (bv(state.rho1), bv(state.rho2))


def _sqrt_sigma_h1_sq(state: SpeciesState) -> float:
    sigma = state.rho1.values + state.rho2.values
    root = GridField._wrap(state.grid, np.sqrt(sigma))
    grad = periodic_diff(root).values
    return float(
        state.grid.dx * sigma.sum() + state.grid.dx * (grad * grad).sum()
    )


def sqrt_sigma_dissipation(trajectory: Trajectory) -> float:
    """Trapezoid-in-time integral of the squared H^1 norm of
    sqrt(rho1 + rho2) over the whole trajectory."""
    if len(trajectory.states) < 2:
        return 0.0
    values = [_sqrt_sigma_h1_sq(s) for s in trajectory.states]
    return float(np.trapezoid(values, trajectory.times))


def species_bv_l2(trajectory: Trajectory) -> tuple:
    """L^2-in-time aggregation of the per-snapshot BV norms."""
    if len(trajectory.states) < 2:
        return (0.0, 0.0)
    bvs = np.array([species_bv(s) for s in trajectory.states])
    t = trajectory.times
    return (
        float(np.sqrt(np.trapezoid(bvs[:, 0] ** 2, t))),
        float(np.sqrt(np.trapezoid(bvs[:, 1] ** 2, t))),
    )


# --- weak-form residual ---------------------------------------------------

TIME_PROFILES = {
    # smooth polynomial bumps vanishing at the horizon; the quadratic one
    # has a linear derivative, which the trapezoid rule integrates exactly
    "quad_decay": (
        lambda t, T: (1.0 - t / T) ** 2,
        lambda t, T: -2.0 * (1.0 - t / T) / T,
    ),
    "cubic_decay": (
        lambda t, T: (1.0 - t / T) ** 3,
        lambda t, T: -3.0 * (1.0 - t / T) ** 2 / T,
    ),
}


def _trig_pairs(k: int, x: np.ndarray):
    """Spatial factors trig(2 pi k x) with their derivatives."""
    if k == 0:
        return [(np.ones_like(x), np.zeros_like(x))]
    w = 2.0 * np.pi * k
    return [
        (np.cos(w * x), -w * np.sin(w * x)),
        (np.sin(w * x), w * np.cos(w * x)),
    ]


def weak_residual(
    trajectory: Trajectory,
    pair: PotentialPair,
    eta: float,
    test_bank: list,
) -> list:
    """Absolute defects of the weak formulation for each test function
    and species.

    ``test_bank`` holds (time_profile_name, wavenumber) entries; each
    yields a cosine and a sine test (constant for wavenumber 0) and the
    defect is computed for both species, so the result is flattened in
    that order.  Requires at least 16 uniformly spaced snapshots.
    """
    times = np.asarray(trajectory.times)
    if len(times) < MIN_RESIDUAL_SNAPSHOTS:
        raise ValueError(
            f"need at least {MIN_RESIDUAL_SNAPSHOTS} snapshots, got {len(times)}"
        )
    gaps = np.diff(times)
    if gaps.min() <= 0 or (gaps.max() - gaps.min()) > 1e-9 * max(gaps.max(), 1.0):
        raise ValueError("snapshot cadence must be uniform")
    horizon = times[-1] - times[0]
    grid = trajectory.grid
    x = grid.cell_centers
    dx = grid.dx

    rho = [
        np.stack([s.rho1.values for s in trajectory.states]),
        np.stack([s.rho2.values for s in trajectory.states]),
    ]
    sigma = rho[0] + rho[1]
    dlog_sigma = (np.log(np.roll(sigma, -1, axis=1)) - np.log(np.roll(sigma, 1, axis=1))) / (
        2.0 * dx
    )
    d_rho = [
        (np.roll(r, -1, axis=1) - np.roll(r, 1, axis=1)) / (2.0 * dx) for r in rho
    ]
    drift = [pair.v1_x.values, pair.v2_x.values]

    rel_t = times - times[0]
    results = []
    for profile_name, k in test_bank:
        psi_fn, dpsi_fn = TIME_PROFILES[profile_name]
        psi = psi_fn(rel_t, horizon)
        dpsi = dpsi_fn(rel_t, horizon)
        for trig, trig_x in _trig_pairs(int(k), x):
            for i in (0, 1):
                initial = dx * float((rho[i][0] * trig).sum())
                interior = dx * (rho[i] * trig[None, :]).sum(axis=1) * dpsi
                flux = (
                    rho[i] * ((1.0 - 2.0 * eta) * dlog_sigma + drift[i][None, :])
                    + eta * d_rho[i]
                )
                flux_term = dx * (flux * trig_x[None, :]).sum(axis=1) * psi
                defect = (
                    initial
                    + float(np.trapezoid(interior, times))
                    - float(np.trapezoid(flux_term, times))
                )
                results.append(abs(defect))
    return results


def residual_labels(test_bank: list) -> list:
    """Labels matching the flattened ``weak_residual`` output order."""
    labels = []
    for profile_name, k in test_bank:
        trigs = ["const"] if k == 0 else ["cos", "sin"]
        for trig in trigs:
            for species in (1, 2):
                labels.append(f"{profile_name}:k={k}:{trig}:rho{species}")
    return labels


# --- per-snapshot record assembly ----------------------------------------


@dataclass
class RunningAggregates:
    """State threaded through successive record() calls."""

    constants: GronwallConstants
    eta: float
    e0: float | None = None
    start_time: float | None = None
    h1_cum: float = 0.0
    prev_time: float | None = None
    prev_h1_sq: float | None = None


def record(
    state: SpeciesState,
    mixed: MixedState,
    pair: PotentialPair,
    cfg: SchemeConfig,
    running: RunningAggregates,
) -> DiagnosticsRecord:
    """Assemble all monitors for one snapshot, updating the running
    aggregates in place."""
    energy = first_order_energy(mixed, pair)
    if running.e0 is None:
        running.e0 = energy
        running.start_time = state.time
    h1_sq = _sqrt_sigma_h1_sq(state)
    if running.prev_time is not None:
        running.h1_cum += 0.5 * (h1_sq + running.prev_h1_sq) * (state.time - running.prev_time)
    running.prev_time = state.time
    running.prev_h1_sq = h1_sq

    mass1, mass2 = state.masses()
    bv1, bv2 = species_bv(state)
    n = state.grid.n_cells
    return DiagnosticsRecord(
        time=state.time,
        mass1=mass1,
        mass2=mass2,
        first_order_energy=energy,
        gronwall_envelope=gronwall_envelope(
            running.e0, running.constants, state.time - running.start_time
        ),
        entropy_eta=entropy_eta(state, pair, running.eta),
        llogl=entropy_l_log_l(mixed.sigma),
        tv_r=total_variation(mixed.ratio),
        tv_f=total_variation(mixed.f_ratio),
        bv_rho1=bv1,
        bv_rho2=bv2,
        sqrt_sigma_h1_cum=running.h1_cum,
        min_density=float(min(state.rho1.values.min(), state.rho2.values.min())),
        clamp_count=mixed.clamp_count,
        reliable=mixed.clamp_count <= UNRELIABLE_CLAMP_FRACTION * n,
    )


class DiagnosticsCollector:
    """Observer appending a DiagnosticsRecord per snapshot."""

    def __init__(self, pair: PotentialPair, cfg: SchemeConfig):
        self.pair = pair
        self.cfg = cfg
        self.running = RunningAggregates(
            constants=gronwall_constants(pair), eta=cfg.eta
        )

    def __call__(self, trajectory: Trajectory, state: SpeciesState) -> None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SegregationWarning)
            mixed = to_mixed(state, self.pair)
        trajectory.records.append(record(state, mixed, self.pair, self.cfg, self.running))


# --- trajectory-level invariant checks ------------------------------------


@dataclass
class CheckResult:
    name: str
    passed: bool | None  # None means not applicable / skipped
    detail: str

    @property
    def failed(self) -> bool:
        return self.passed is False


def check_trajectory(
    trajectory: Trajectory,
    mass_tol: float = 1e-10,
    envelope_slack: float = 1.1,
    entropy_tol_factor: float = 10.0,
) -> list:
    """Run the standard invariant checks against recorded diagnostics."""
    recs = trajectory.records
    if not recs:
        raise ValueError("trajectory carries no diagnostics records")
    results = []
    dx = trajectory.grid.dx
    has_reactions = trajectory.reactions is not None

    if has_reactions:
        results.append(CheckResult("mass_conservation", None, "skipped: reactions active"))
    else:
        drift = max(
            max(abs(r.mass1 - recs[0].mass1), abs(r.mass2 - recs[0].mass2)) for r in recs
        )
        results.append(
            CheckResult(
                "mass_conservation",
                drift <= mass_tol,
                f"max mass drift {drift:.3e} (tol {mass_tol:.1e})",
            )
        )

    min_density = min(r.min_density for r in recs)
    results.append(
        CheckResult("positivity", min_density >= 0.0, f"min density {min_density:.3e}")
    )

    worst_tv = max(r.tv_r - 0.25 * r.tv_f for r in recs)
    results.append(
        CheckResult(
            "tv_ordering",
            worst_tv <= 0.0,
            f"max(tv_r - tv_f/4) = {worst_tv:.3e}",
        )
    )

    if has_reactions:
        results.append(CheckResult("entropy_decay", None, "skipped: reactions active"))
    else:
        worst_rise = 0.0
        ok = True
        for prev, cur in zip(recs, recs[1:]):
            tol = entropy_tol_factor * dx * (cur.time - prev.time)
            rise = cur.entropy_eta - prev.entropy_eta
            worst_rise = max(worst_rise, rise - tol)
            if rise > tol:
                ok = False
        results.append(
            CheckResult(
                "entropy_decay",
                ok,
                f"max entropy rise beyond tolerance {worst_rise:.3e}",
            )
        )

    if any(r.clamp_count > 0 for r in recs):
        results.append(
            CheckResult(
                "gronwall_certificate",
                None,
                "skipped: clamped cells present, run not resolved",
            )
        )
    else:
        margin = max(
            r.first_order_energy - envelope_slack * r.gronwall_envelope for r in recs
        )
        results.append(
            CheckResult(
                "gronwall_certificate",
                margin <= 0.0,
                f"max(energy - {envelope_slack} envelope) = {margin:.3e}",
            )
        )
    return results
