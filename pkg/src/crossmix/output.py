"""Versioned CSV/JSON emission.

Headers carry a schema tag comment line so downstream consumers (the
figure renderer, external tools) can refuse files they do not
understand.  Floats are written with shortest round-trip repr, which
makes byte-identical reruns checkable.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from pathlib import Path

from .errors import SegregationWarning
from .solver import Trajectory
from .states import to_mixed

SNAPSHOTS_SCHEMA = "crossmix-snapshots-v1"
DIAGNOSTICS_SCHEMA = "crossmix-diagnostics-v1"
SWEEP_SCHEMA = "crossmix-sweep-v1"

SNAPSHOT_COLUMNS = ("t", "x", "rho1", "rho2", "sigma", "r", "f_r")
SWEEP_COLUMNS = ("eta_j", "d_j", "ratio")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int,)):
        return str(value)
    return repr(float(value))


def write_snapshots(path, trajectory: Trajectory) -> None:
    lines = [f"# {SNAPSHOTS_SCHEMA}", ",".join(SNAPSHOT_COLUMNS)]
    x = trajectory.grid.cell_centers
    for t, state in zip(trajectory.times, trajectory.states):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SegregationWarning)
            mixed = to_mixed(state, trajectory.pair)
        cols = (
            state.rho1.values,
            state.rho2.values,
            mixed.sigma.values,
            mixed.ratio.values,
            mixed.f_ratio.values,
        )
        for i in range(trajectory.grid.n_cells):
            row = [_fmt(t), _fmt(x[i])] + [_fmt(c[i]) for c in cols]
            lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_diagnostics(path, records) -> None:
    from .diagnostics import DiagnosticsRecord

    fields = DiagnosticsRecord.CSV_FIELDS
    lines = [f"# {DIAGNOSTICS_SCHEMA}", ",".join(fields)]
    for rec in records:
        lines.append(",".join(_fmt(getattr(rec, f)) for f in fields))
    Path(path).write_text("\n".join(lines) + "\n")


def write_sweep(path, rows) -> None:
    """Rows are (eta_j, d_j, ratio) with ratio possibly nan."""
    lines = [f"# {SWEEP_SCHEMA}", ",".join(SWEEP_COLUMNS)]
    for eta_j, d_j, ratio in rows:
        lines.append(",".join([_fmt(eta_j), _fmt(d_j), _fmt(ratio)]))
    Path(path).write_text("\n".join(lines) + "\n")


def config_hash(config_echo: dict) -> str:
    canonical = json.dumps(config_echo, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def write_summary(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
