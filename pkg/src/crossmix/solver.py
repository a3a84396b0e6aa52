"""Conservative finite-volume stepper for the regularised two-species
cross-diffusion system, with an optional explicit reaction mode.

Cell i owns face i on its right, at x = (i+1) dx, shared with cell
i+1 (mod n).  Each species carries the face flux

    F_i = eta d_x rho_i + (1 - 2 eta) (rho_i / sigma) d_x sigma
          + rho_i d_x V_i,

with d_x rho_i and d_x sigma as two-point face differences; the update
is the forward-Euler divergence rho_i <- rho_i + dt (F[j] - F[j-1])/dx.
Summing the two species fluxes reproduces the total-density flux
(1 - eta) d_x sigma + sigma W + r sigma V identically when the face
ratio is the arithmetic mean, which is what makes the change of
variables checkable at round-off level.

Time steps obey a parabolic CFL bound and are halved on any negativity,
up to a retry limit.  Masses telescope exactly on the torus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import PositivityError, SolverError, TransformUnavailableError, VacuumFluxError
from .grid import Grid, GridField
from .potentials import PotentialPair
from .states import MixedState, SpeciesState

FLUX_RATIO_RULES = ("arithmetic", "upwind")


@dataclass(frozen=True)
class SchemeConfig:
    """Scheme dials: regularisation strength, CFL safety, ratio rule."""

    eta: float
    t_end: float
    cfl_safety: float = 0.4
    dt_max: float = math.inf
    positivity_retry_limit: int = 40
    flux_ratio_rule: str = "arithmetic"
    sigma_floor: float = 1e-300

    def __post_init__(self):
        if not 0.0 < self.eta <= 0.5:
            raise ValueError(f"eta must lie in (0, 1/2], got {self.eta}")
        if not 0.0 < self.cfl_safety < 1.0:
            raise ValueError(f"cfl_safety must lie in (0, 1), got {self.cfl_safety}")
        if self.t_end < 0.0:
            raise ValueError(f"t_end must be nonnegative, got {self.t_end}")
        if self.dt_max <= 0.0:
            raise ValueError(f"dt_max must be positive, got {self.dt_max}")
        if self.positivity_retry_limit < 0:
            raise ValueError("positivity_retry_limit must be nonnegative")
        if self.flux_ratio_rule not in FLUX_RATIO_RULES:
            raise ValueError(
                f"flux_ratio_rule must be one of {FLUX_RATIO_RULES}, "
                f"got {self.flux_ratio_rule!r}"
            )


@dataclass(frozen=True)
class ReactionFunction:
    """Named reaction rate F(rho1, rho2) with declared bounds on its
    domain of use."""

    name: str
    fn: object
    sup: float
    lipschitz: float

    def __call__(self, rho1: np.ndarray, rho2: np.ndarray) -> np.ndarray:
        return self.fn(rho1, rho2)


def reaction_zero() -> ReactionFunction:
    return ReactionFunction("zero", lambda r1, r2: np.zeros_like(r1), sup=0.0, lipschitz=0.0)


def reaction_logistic(a: float, b: float, domain_max: float = 8.0) -> ReactionFunction:
    """Saturating growth rate a (1 - b (rho1 + rho2)), declared on total
    densities up to ``domain_max``."""
    if b < 0.0 or domain_max <= 0.0:
        raise ValueError("logistic reaction needs b >= 0 and a positive domain")
    sup = abs(a) * max(1.0, abs(1.0 - b * domain_max))
    return ReactionFunction(
        f"logistic({a},{b})",
        lambda r1, r2: a * (1.0 - b * (r1 + r2)),
        sup=sup,
        lipschitz=abs(a) * b * math.sqrt(2.0),
    )


def reaction_tabulated_bilinear(
    values, rho1_max: float, rho2_max: float
) -> ReactionFunction:
    """Bilinear interpolation of a rate table on [0, rho1_max] x
    [0, rho2_max], clamped at the edges (hence bounded everywhere)."""
    table = np.asarray(values, dtype=float)
    if table.ndim != 2 or table.shape[0] < 2 or table.shape[1] < 2:
        raise ValueError("bilinear reaction table must be at least 2x2")
    if not np.all(np.isfinite(table)):
        raise ValueError("reaction table values must be finite")
    n1, n2 = table.shape
    h1 = rho1_max / (n1 - 1)
    h2 = rho2_max / (n2 - 1)

    def interp(r1, r2):
        # clamped bilinear lookup
        s = np.clip(r1 / h1, 0.0, n1 - 1.0)
        t = np.clip(r2 / h2, 0.0, n2 - 1.0)
        i = np.minimum(s.astype(int), n1 - 2)
        j = np.minimum(t.astype(int), n2 - 2)
        fs = s - i
        ft = t - j
        return (
            table[i, j] * (1 - fs) * (1 - ft)
            + table[i + 1, j] * fs * (1 - ft)
            + table[i, j + 1] * (1 - fs) * ft
            + table[i + 1, j + 1] * fs * ft
        )

    lip1 = np.abs(np.diff(table, axis=0)).max() / h1 if n1 > 1 else 0.0
    lip2 = np.abs(np.diff(table, axis=1)).max() / h2 if n2 > 1 else 0.0
    return ReactionFunction(
        "tabulated-bilinear",
        interp,
        sup=float(np.abs(table).max()),
        lipschitz=float(np.hypot(lip1, lip2)),
    )


@dataclass(frozen=True)
class ReactionSpec:
    """Reaction pair with bounds covering both rates."""

    f1: ReactionFunction
    f2: ReactionFunction
    lipschitz_bound: float
    sup_bound: float

    def __post_init__(self):
        if not (math.isfinite(self.lipschitz_bound) and math.isfinite(self.sup_bound)):
            raise ValueError("reaction bounds must be finite")
        if max(self.f1.sup, self.f2.sup) > self.sup_bound * (1 + 1e-12):
            raise ValueError("declared sup_bound does not cover both rates")

    @classmethod
    def from_functions(cls, f1: ReactionFunction, f2: ReactionFunction) -> "ReactionSpec":
        return cls(
            f1=f1,
            f2=f2,
            lipschitz_bound=max(f1.lipschitz, f2.lipschitz),
            sup_bound=max(f1.sup, f2.sup),
        )


@dataclass(frozen=True)
class StepReport:
    dt_used: float
    mass_drift: tuple
    min_density: float
    retries: int


def _shift_left(a: np.ndarray) -> np.ndarray:
    """Entry i becomes a[i+1] with periodic wrap (last axis)."""
    out = np.empty_like(a)
    out[..., :-1] = a[..., 1:]
    out[..., -1] = a[..., 0]
    return out


def _shift_right(a: np.ndarray) -> np.ndarray:
    """Entry i becomes a[i-1] with periodic wrap (last axis)."""
    out = np.empty_like(a)
    out[..., 1:] = a[..., :-1]
    out[..., 0] = a[..., -1]
    return out


def _face_fluxes(rho: np.ndarray, pair: PotentialPair, cfg: SchemeConfig):
    """Face fluxes for the stacked species array ``rho`` of shape (2, n).

    Returns (flux, max face ratio) with flux[j] on the face between
    cells j and j+1.  Both species run through identical row-wise
    expressions, so swapping them commutes with the step bit for bit.
    """
    dx = 1.0 / rho.shape[1]
    sigma = rho[0] + rho[1]

    ok = sigma >= cfg.sigma_floor
    all_ok = bool(ok.all())
    if not all_ok:
        both_bad = ~ok & ~_shift_left(ok)
        if both_bad.any():
            raise VacuumFluxError(int(np.flatnonzero(both_bad)[0]))
        ratio = rho / np.maximum(sigma, cfg.sigma_floor)
    else:
        ratio = rho / sigma

    inv_dx = 1.0 / dx
    d_rho = (_shift_left(rho) - rho) * inv_dx
    # differenced from sigma itself so the transformed total-density flux
    # shares the subexpression bit for bit
    d_sigma = (_shift_left(sigma) - sigma) * inv_dx

    ratio_right = _shift_left(ratio)
    ratio_mean = 0.5 * (ratio + ratio_right)
    if not all_ok:
        # one-sided fallback where exactly one neighbour sits in vacuum
        ok_right = _shift_left(ok)
        ratio_mean = np.where(
            ok & ok_right, ratio_mean, np.where(ok, ratio, ratio_right)
        )

    if cfg.flux_ratio_rule == "arithmetic":
        face_ratio = ratio_mean
        face_rho = 0.5 * (rho + _shift_left(rho))
    else:
        # upwind on the sign of the total face velocity: the advected
        # profile moves left for positive velocity, so the donor cell is
        # the right neighbour
        sigma_face = np.maximum(0.5 * (sigma + _shift_left(sigma)), cfg.sigma_floor)
        vel = (1.0 - 2.0 * cfg.eta) * d_sigma / sigma_face + pair.drift_face_stack
        rho_right = _shift_left(rho)
        face_ratio = np.where(
            vel > 0.0, ratio_right, np.where(vel < 0.0, ratio, ratio_mean)
        )
        face_rho = np.where(
            vel > 0.0, rho_right, np.where(vel < 0.0, rho, 0.5 * (rho + rho_right))
        )

    eta = cfg.eta
    flux = (
        eta * d_rho
        + ((1.0 - 2.0 * eta) * d_sigma) * face_ratio
        + face_rho * pair.drift_face_stack
    )
    return flux, float(face_ratio.max())


def species_flux(state: SpeciesState, pair: PotentialPair, cfg: SchemeConfig):
    """Face fluxes of the two species; entry j lives on the face between
    cells j and j+1."""
    rho = np.stack([state.rho1.values, state.rho2.values])
    flux, _ = _face_fluxes(rho, pair, cfg)
    return flux[0], flux[1]


def step(
    state: SpeciesState,
    pair: PotentialPair,
    cfg: SchemeConfig,
    reactions: ReactionSpec | None = None,
    dt_cap: float | None = None,
):
    """One forward-Euler step with internally chosen dt.

    Returns the new state and a report.  ``dt_cap`` additionally limits
    the step (used by the runner to land snapshots exactly).  On any
    negative density the step is retried with halved dt up to the
    configured limit.
    """
    grid = state.grid
    dx = grid.dx
    rho = np.stack([state.rho1.values, state.rho2.values])

    flux, ratio_max = _face_fluxes(rho, pair, cfg)
    div = (flux - _shift_right(flux)) * (1.0 / dx)

    if reactions is not None:
        react = np.stack(
            [
                rho[0] * reactions.f1(rho[0], rho[1]),
                rho[1] * reactions.f2(rho[0], rho[1]),
            ]
        )
    else:
        react = None

    # parabolic CFL with the face ratio and drift folded into the bound
    diffusivity = cfg.eta + (1.0 - 2.0 * cfg.eta) * ratio_max + dx * pair.drift_face_sup
    dt = min(cfg.dt_max, cfg.cfl_safety * dx * dx / (2.0 * diffusivity))
    if dt_cap is not None:
        dt = min(dt, dt_cap)
    if not (dt > 0.0 and math.isfinite(dt)):
        raise VacuumFluxError(-1, f"no admissible time step (dt={dt})")

    retries = 0
    while True:
        new = rho + dt * div
        if react is not None:
            new = new + dt * react
        min_density = new.min()
        if math.isfinite(min_density) and min_density >= 0.0:
            break
        retries += 1
        if retries > cfg.positivity_retry_limit:
            bad = ~(np.isfinite(new) & (new >= 0.0))
            species, cell = (int(v) for v in np.argwhere(bad)[0])
            raise PositivityError(cell, species + 1, retries - 1)
        dt *= 0.5

    mass_new = dx * new.sum(axis=1)
    mass_old = dx * rho.sum(axis=1)
    expected = dt * dx * react.sum(axis=1) if react is not None else np.zeros(2)
    report = StepReport(
        dt_used=dt,
        mass_drift=(
            float(mass_new[0] - mass_old[0] - expected[0]),
            float(mass_new[1] - mass_old[1] - expected[1]),
        ),
        min_density=float(min_density),
        retries=retries,
    )
    new_state = SpeciesState.__new__(SpeciesState)
    object.__setattr__(new_state, "rho1", GridField._wrap(grid, new[0]))
    object.__setattr__(new_state, "rho2", GridField._wrap(grid, new[1]))
    object.__setattr__(new_state, "time", state.time + dt)
    return new_state, report


@dataclass
class Trajectory:
    """Snapshots of one run plus whatever the observers recorded."""

    grid: Grid
    pair: PotentialPair
    cfg: SchemeConfig
    reactions: ReactionSpec | None = None
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    records: list = field(default_factory=list)
    total_steps: int = 0
    max_retries: int = 0
    max_mass_drift: float = 0.0

    @property
    def final_state(self) -> SpeciesState:
        return self.states[-1]


def run(
    state0: SpeciesState,
    pair: PotentialPair,
    cfg: SchemeConfig,
    reactions: ReactionSpec | None = None,
    observers: tuple = (),
    n_snapshots: int = 50,
) -> Trajectory:
    """Advance to ``t_end`` emitting evenly spaced snapshots.

    Observers are called as ``obs(trajectory, state)`` at every snapshot,
    including the initial one.  On a solver failure the partial
    trajectory is attached to the raised :class:`SolverError`.
    """
    if n_snapshots < 1:
        raise ValueError("n_snapshots must be at least 1")
    traj = Trajectory(grid=state0.grid, pair=pair, cfg=cfg, reactions=reactions)

    def emit(state: SpeciesState) -> None:
        traj.times.append(state.time)
        traj.states.append(state)
        for obs in observers:
            obs(traj, state)

    emit(state0)
    if cfg.t_end == 0.0:
        return traj

    t0 = state0.time
    state = state0
    try:
        for k in range(1, n_snapshots + 1):
            target = t0 + cfg.t_end * (k / n_snapshots)
            while state.time < target:
                remaining = target - state.time
                state, report = step(state, pair, cfg, reactions, dt_cap=remaining)
                traj.total_steps += 1
                traj.max_retries = max(traj.max_retries, report.retries)
                drift = max(abs(report.mass_drift[0]), abs(report.mass_drift[1]))
                traj.max_mass_drift = max(traj.max_mass_drift, drift)
                if report.dt_used >= remaining * (1.0 - 1e-12):
                    state = replace(state, time=target)
            emit(state)
    except (PositivityError, VacuumFluxError) as exc:
        raise SolverError(exc, traj) from exc
    return traj


def transformed_rhs(mixed: MixedState, pair: PotentialPair, cfg: SchemeConfig):
    """Right-hand sides of the transformed system on the current state,
    for diagnostics only (never stepped).

    The total-density component is assembled from face fluxes with the
    same two-point differences and arithmetic face means as the primal
    scheme, so its divergence matches the summed species fluxes at
    round-off level.  The log-odds component is evaluated with centred
    differences at cell centers.
    """
    if mixed.clamp_count > 0:
        raise TransformUnavailableError(
            f"{mixed.clamp_count} clamped cells; transform consistency undefined"
        )
    grid = mixed.grid
    dx = grid.dx
    eta = cfg.eta
    sigma = mixed.sigma.values
    ratio = mixed.ratio.values
    f = mixed.f_ratio.values

    # total density: divergence of (1-eta) d_x sigma + sigma W + r sigma V
    d_sigma = (_shift_left(sigma) - sigma) / dx
    sigma_face = 0.5 * (sigma + _shift_left(sigma))
    rho1 = ratio * sigma
    rho1_face = 0.5 * (rho1 + _shift_left(rho1))
    flux = (1.0 - eta) * d_sigma + sigma_face * pair.W_face + rho1_face * pair.V_face
    sigma_rhs = (flux - _shift_right(flux)) / dx

    # log-odds equation, cell-centred
    df = (np.roll(f, -1) - np.roll(f, 1)) / (2.0 * dx)
    d2f = (np.roll(f, -1) - 2.0 * f + np.roll(f, 1)) / (dx * dx)
    dlog_sigma = (np.log(np.roll(sigma, -1)) - np.log(np.roll(sigma, 1))) / (2.0 * dx)
    V = pair.V.values
    W = pair.W.values
    f_rhs = (
        eta * d2f
        - V * W
        + pair.V_x.values
        + (df + V) * (dlog_sigma + W - eta * (2.0 * ratio - 1.0) * df)
        + ((1.0 - eta) - (1.0 - 2.0 * eta) * ratio) * df * V
    )
    return GridField(grid, sigma_rhs), GridField(grid, f_rhs)


def transform_consistency(
    state: SpeciesState, pair: PotentialPair, cfg: SchemeConfig
) -> dict:
    """One primal step versus one transformed-RHS Euler step.

    Returns max-norm gaps between the primal increments of (sigma, f(r))
    and dt times the transformed right-hand sides; both should vanish at
    first order in dt and second order in dx.
    """
    from .states import to_mixed

    mixed0 = to_mixed(state, pair)
    sigma_rhs, f_rhs = transformed_rhs(mixed0, pair, cfg)
    new_state, report = step(state, pair, cfg)
    mixed1 = to_mixed(new_state, pair)
    dt = report.dt_used
    gap_sigma = np.abs(
        (mixed1.sigma.values - mixed0.sigma.values) - dt * sigma_rhs.values
    ).max()
    gap_f = np.abs(
        (mixed1.f_ratio.values - mixed0.f_ratio.values) - dt * f_rhs.values
    ).max()
    return {"dt": dt, "sigma_gap": float(gap_sigma), "f_gap": float(gap_f)}
