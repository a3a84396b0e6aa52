"""Run configuration: TOML schema, validation, and object assembly.

Every field is validated before any compute starts; the first offending
key is reported by its dotted path.  A config plus seed pins the run
completely, so reruns are byte-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError, InitialDataError
from .grid import Grid
from .potentials import PotentialSpec, build_pair
from .solver import (
    ReactionSpec,
    SchemeConfig,
    reaction_logistic,
    reaction_tabulated_bilinear,
    reaction_zero,
)
from .states import InitialSpec, make_initial

DEFAULT_ETA_LADDER = tuple(0.5 * 2.0**-j for j in range(7))
SWEEP_NORMS = ("L1_final", "L2L1_trajectory")


def _need(table: dict, key: str, path: str):
    if key not in table:
        raise ConfigError(f"{path}.{key}" if path else key, "missing")
    return table[key]


def _get_number(table, key, path, default=None, minimum=None, maximum=None,
                exclusive_min=False, exclusive_max=False):
    if key not in table:
        if default is None:
            raise ConfigError(f"{path}.{key}", "missing")
        return default
    value = table[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected number, got {value!r}")
    value = float(value)
    if minimum is not None and (value <= minimum if exclusive_min else value < minimum):
        op = ">" if exclusive_min else ">="
        raise ConfigError(f"{path}.{key}", f"must be {op} {minimum}, got {value}")
    if maximum is not None and (value >= maximum if exclusive_max else value > maximum):
        op = "<" if exclusive_max else "<="
        raise ConfigError(f"{path}.{key}", f"must be {op} {maximum}, got {value}")
    return value


def _get_int(table, key, path, default=None, minimum=None):
    if key not in table:
        if default is None:
            raise ConfigError(f"{path}.{key}", "missing")
        return default
    value = table[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}.{key}", f"expected integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}.{key}", f"must be >= {minimum}, got {value}")
    return value


def _load_table_csv(path_str: str, base_dir: Path, key: str):
    path = Path(path_str)
    if not path.is_absolute():
        path = base_dir / path
    if not path.exists():
        raise ConfigError(key, f"file not found: {path}")
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    return data


def _parse_potential(table: dict, path: str, base_dir: Path) -> PotentialSpec:
    kind = _need(table, "kind", path)
    if kind == "zero":
        return PotentialSpec("zero")
    if kind == "cosine_sum":
        terms = table.get("terms", [])
        if not isinstance(terms, list) or not terms:
            raise ConfigError(f"{path}.terms", "cosine_sum needs a nonempty term list")
        parsed = []
        for i, term in enumerate(terms):
            if not isinstance(term, list) or len(term) != 3:
                raise ConfigError(
                    f"{path}.terms[{i}]", "expected [amplitude, wavenumber, phase]"
                )
            amp, k, phase = term
            if isinstance(k, bool) or not isinstance(k, int) or k < 1:
                raise ConfigError(
                    f"{path}.terms[{i}]", f"wavenumber must be a positive integer, got {k!r}"
                )
            parsed.append((float(amp), k, float(phase)))
        return PotentialSpec("cosine_sum", terms=tuple(parsed))
    if kind == "tabulated":
        source = _need(table, "table", f"{path}")
        data = _load_table_csv(source, base_dir, f"{path}.table")
        values = data[:, -1]
        return PotentialSpec("tabulated", table=values)
    raise ConfigError(f"{path}.kind", f"unknown potential kind {kind!r}")


def _parse_initial(table: dict, path: str, base_dir: Path) -> InitialSpec:
    family = _need(table, "family", path)
    kwargs = {
        "a1": _get_number(table, "a1", path, default=0.0),
        "a2": _get_number(table, "a2", path, default=0.0),
        "k1": _get_int(table, "k1", path, default=1, minimum=1),
        "k2": _get_int(table, "k2", path, default=1, minimum=1),
        "ratio_offset": _get_number(table, "ratio_offset", path, default=0.0),
        "vacuum_exponent": _get_number(table, "vacuum_exponent", path, default=1.0 / 3.0),
        "perturb": _get_number(table, "perturb", path, default=0.0),
    }
    if family == "figure1" and "a1" not in table:
        kwargs.update(a1=0.2, k1=17, a2=0.3, k2=11)
    if family == "tabulated":
        for name in ("table1", "table2"):
            source = _need(table, name, path)
            data = _load_table_csv(source, base_dir, f"{path}.{name}")
            if data.shape[1] < 2:
                raise ConfigError(f"{path}.{name}", "expected two columns (x, value)")
            kwargs[name] = (data[:, 0], data[:, 1])
    try:
        return InitialSpec(family=family, **kwargs)
    except InitialDataError as exc:
        raise ConfigError(path, str(exc)) from exc


def _parse_reaction_function(table: dict, path: str):
    kind = _need(table, "kind", path)
    if kind == "zero":
        return reaction_zero()
    if kind == "logistic":
        a = _get_number(table, "a", path)
        b = _get_number(table, "b", path, minimum=0.0)
        domain_max = _get_number(table, "domain_max", path, default=8.0, minimum=0.0,
                                 exclusive_min=True)
        return reaction_logistic(a, b, domain_max)
    if kind == "tabulated_bilinear":
        values = _need(table, "values", path)
        rho1_max = _get_number(table, "rho1_max", path, minimum=0.0, exclusive_min=True)
        rho2_max = _get_number(table, "rho2_max", path, minimum=0.0, exclusive_min=True)
        try:
            return reaction_tabulated_bilinear(values, rho1_max, rho2_max)
        except ValueError as exc:
            raise ConfigError(f"{path}.values", str(exc)) from exc
    raise ConfigError(f"{path}.kind", f"unknown reaction kind {kind!r}")


def _parse_reactions(table: dict, path: str) -> ReactionSpec:
    if "f1" in table or "f2" in table:
        f1 = _parse_reaction_function(_need(table, "f1", path), f"{path}.f1")
        f2 = _parse_reaction_function(_need(table, "f2", path), f"{path}.f2")
    else:
        f1 = _parse_reaction_function(table, path)
        f2 = _parse_reaction_function(table, path)
    return ReactionSpec.from_functions(f1, f2)


@dataclass
class RunConfig:
    """Validated single-run configuration."""

    n_cells: int
    t_end: float
    snapshots: int
    eta: float
    cfl_safety: float
    dt_max: float
    flux_ratio_rule: str
    positivity_retry_limit: int
    initial: InitialSpec
    potential1: PotentialSpec
    potential2: PotentialSpec
    reactions: ReactionSpec | None
    out_dir: Path
    seed: int
    mass_tol: float = 1e-10
    envelope_slack: float = 1.1
    entropy_tol_factor: float = 10.0
    echo: dict = field(default_factory=dict, repr=False)

    def scheme(self) -> SchemeConfig:
        return SchemeConfig(
            eta=self.eta,
            t_end=self.t_end,
            cfl_safety=self.cfl_safety,
            dt_max=self.dt_max,
            positivity_retry_limit=self.positivity_retry_limit,
            flux_ratio_rule=self.flux_ratio_rule,
        )

    def build(self):
        """Instantiate grid, initial state and potential pair.

        Tabulated potentials are resampled onto the grid when a
        resolution factor changed it; the library-level pair builder
        keeps its strict length contract.
        """
        grid = Grid(self.n_cells)
        state0 = make_initial(self.initial, grid, rng=self.seed)
        pair = build_pair(
            _fit_potential(self.potential1, grid),
            _fit_potential(self.potential2, grid),
            grid,
        )
        return grid, state0, pair

    def with_resolution_factor(self, factor: int) -> "RunConfig":
        import copy

        clone = copy.copy(self)
        clone.n_cells = self.n_cells * int(factor)
        clone.echo = dict(self.echo, resolution_factor=int(factor))
        return clone


def _fit_potential(spec: PotentialSpec, grid: Grid) -> PotentialSpec:
    if spec.kind != "tabulated" or spec.table.shape == (grid.n_cells,):
        return spec
    n_src = spec.table.shape[0]
    x_src = (np.arange(n_src) + 0.5) / n_src
    x_ext = np.concatenate([x_src[-1:] - 1.0, x_src, x_src[:1] + 1.0])
    y_ext = np.concatenate([spec.table[-1:], spec.table, spec.table[:1]])
    resampled = np.interp(grid.cell_centers, x_ext, y_ext)
    return PotentialSpec("tabulated", table=resampled)


@dataclass
class SweepConfig:
    base: RunConfig
    eta_ladder: tuple
    norm: str

    def __post_init__(self):
        if len(self.eta_ladder) < 3:
            raise ConfigError("sweep.eta_ladder", "needs at least 3 rungs")
        for eta in self.eta_ladder:
            if not 0.0 < eta <= 0.5:
                raise ConfigError("sweep.eta_ladder", f"eta {eta} outside (0, 0.5]")
        diffs = np.diff(self.eta_ladder)
        if not np.all(diffs < 0):
            raise ConfigError("sweep.eta_ladder", "must be strictly decreasing")
        if self.norm not in SWEEP_NORMS:
            raise ConfigError("sweep.norm", f"must be one of {SWEEP_NORMS}")


def load_raw(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError("config", f"file not found: {path}")
    try:
        with open(path, "rb") as handle:
            return tomllib.load(handle)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"TOML parse error: {exc}") from exc


def run_config_from_dict(raw: dict, base_dir: Path, overrides: dict | None = None) -> RunConfig:
    overrides = overrides or {}

    grid_tbl = raw.get("grid", {})
    n_cells = _get_int(grid_tbl, "n_cells", "grid", minimum=8)

    time_tbl = raw.get("time", {})
    t_end = _get_number(time_tbl, "t_end", "time", minimum=0.0)
    snapshots = _get_int(time_tbl, "snapshots", "time", default=50, minimum=1)

    scheme_tbl = raw.get("scheme", {})
    eta = _get_number(scheme_tbl, "eta", "scheme", minimum=0.0, exclusive_min=True,
                      maximum=0.5)
    cfl_safety = _get_number(scheme_tbl, "cfl_safety", "scheme", default=0.4,
                             minimum=0.0, maximum=1.0, exclusive_min=True,
                             exclusive_max=True)
    dt_max = _get_number(scheme_tbl, "dt_max", "scheme", default=math.inf,
                         minimum=0.0, exclusive_min=True)
    retry = _get_int(scheme_tbl, "positivity_retry_limit", "scheme", default=40,
                     minimum=0)
    rule = scheme_tbl.get("flux_ratio_rule", "arithmetic")
    if rule not in ("arithmetic", "upwind"):
        raise ConfigError("scheme.flux_ratio_rule", f"unknown rule {rule!r}")

    initial = _parse_initial(raw.get("initial", {"family": "uniform"}), "initial", base_dir)

    potentials_tbl = raw.get("potentials", {})
    potential1 = _parse_potential(
        potentials_tbl.get("v1", {"kind": "zero"}), "potentials.v1", base_dir
    )
    potential2 = _parse_potential(
        potentials_tbl.get("v2", {"kind": "zero"}), "potentials.v2", base_dir
    )

    reactions = None
    if "reactions" in raw:
        reactions = _parse_reactions(raw["reactions"], "reactions")

    out_tbl = raw.get("output", {})
    out_dir = Path(overrides.get("out_dir") or out_tbl.get("directory", "out"))

    run_tbl = raw.get("run", {})
    seed = overrides.get("seed")
    if seed is None:
        seed = _get_int(run_tbl, "seed", "run", default=0, minimum=0)

    checks_tbl = raw.get("checks", {})
    mass_tol = _get_number(checks_tbl, "mass_tol", "checks", default=1e-10,
                           minimum=0.0, exclusive_min=True)
    envelope_slack = _get_number(checks_tbl, "envelope_slack", "checks", default=1.1,
                                 minimum=1.0)
    entropy_tol_factor = _get_number(checks_tbl, "entropy_tol_factor", "checks",
                                     default=10.0, minimum=0.0)

    factor = int(overrides.get("resolution_factor", 1))
    if factor < 1:
        raise ConfigError("resolution_factor", f"must be >= 1, got {factor}")

    echo = _echo_dict(raw, seed=int(seed), out_dir=str(out_dir), resolution_factor=factor)

    return RunConfig(
        n_cells=n_cells * factor,
        t_end=t_end,
        snapshots=snapshots,
        eta=eta,
        cfl_safety=cfl_safety,
        dt_max=dt_max,
        flux_ratio_rule=rule,
        positivity_retry_limit=retry,
        initial=initial,
        potential1=potential1,
        potential2=potential2,
        reactions=reactions,
        out_dir=out_dir,
        seed=int(seed),
        mass_tol=mass_tol,
        envelope_slack=envelope_slack,
        entropy_tol_factor=entropy_tol_factor,
        echo=echo,
    )


def _echo_dict(raw: dict, **extra) -> dict:
    def clean(obj):
        if isinstance(obj, dict):
            return {k: clean(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [clean(v) for v in obj]
        if isinstance(obj, Path):
            return str(obj)
        return obj

    echo = clean(raw)
    echo.update(extra)
    return echo


def sweep_config_from_dict(raw: dict, base_dir: Path, overrides: dict | None = None) -> SweepConfig:
    base = run_config_from_dict(raw, base_dir, overrides)
    sweep_tbl = raw.get("sweep", {})
    ladder = sweep_tbl.get("eta_ladder")
    if ladder is None:
        ladder = DEFAULT_ETA_LADDER
    else:
        if not isinstance(ladder, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in ladder
        ):
            raise ConfigError("sweep.eta_ladder", "expected a list of numbers")
        ladder = tuple(float(v) for v in ladder)
    norm = sweep_tbl.get("norm", "L1_final")
    return SweepConfig(base=base, eta_ladder=ladder, norm=norm)


def load_run_config(path, overrides: dict | None = None) -> RunConfig:
    raw = load_raw(path)
    return run_config_from_dict(raw, Path(path).parent, overrides)


def load_sweep_config(path, overrides: dict | None = None) -> SweepConfig:
    raw = load_raw(path)
    return sweep_config_from_dict(raw, Path(path).parent, overrides)
