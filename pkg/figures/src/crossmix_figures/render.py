"""The four figure types: initial data, density evolution, energy vs
envelope, and sweep convergence.

Rendering is deterministic: fixed style, hash-salted SVG ids, no
timestamps in the output, and each figure carries the run's config hash
in its footer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "crossmix-figures"

import matplotlib.pyplot as plt
import numpy as np

from .loaders import (
    InputError,
    load_config_hash,
    load_diagnostics,
    load_snapshots,
    load_sweep,
)

FORMATS = ("png", "svg")


@dataclass
class FigureJob:
    """Inputs and options for one rendering pass."""

    in_dir: Path
    out_dir: Path
    select: tuple = ()
    fmt: str = "png"
    snapshots_path: Path = field(init=False)
    diagnostics_path: Path = field(init=False)
    sweep_path: Path = field(init=False)
    summary_path: Path = field(init=False)

    def __post_init__(self):
        self.in_dir = Path(self.in_dir)
        self.out_dir = Path(self.out_dir)
        if self.fmt not in FORMATS:
            raise InputError(f"format must be one of {FORMATS}, got {self.fmt!r}")
        unknown = [name for name in self.select if name not in FIGURES]
        if unknown:
            raise InputError(f"unknown figure selection {unknown}; choose from {list(FIGURES)}")
        self.snapshots_path = self.in_dir / "snapshots.csv"
        self.diagnostics_path = self.in_dir / "diagnostics.csv"
        self.sweep_path = self.in_dir / "sweep.csv"
        self.summary_path = self.in_dir / "summary.json"


def _finish(fig, job: FigureJob, name: str) -> Path:
    stamp = load_config_hash(job.summary_path)
    fig.text(0.99, 0.01, f"config {stamp}", ha="right", va="bottom", fontsize=6, color="0.4")
    job.out_dir.mkdir(parents=True, exist_ok=True)
    out = job.out_dir / f"{name}.{job.fmt}"
    metadata = {"Date": None} if job.fmt == "svg" else {"Software": "crossmix-figures"}
    fig.savefig(out, dpi=150, metadata=metadata)
    plt.close(fig)
    return out


def plot_initial(job: FigureJob) -> Path:
    """Overlaid initial densities, first species solid, second dashed."""
    cols = load_snapshots(job.snapshots_path)
    t0 = cols["times"][0]
    if t0 != 0.0:
        raise InputError("snapshots.csv carries no t = 0 rows")
    mask = cols["t"] == t0
    x = cols["x"][mask]
    order = np.argsort(x)
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    ax.plot(x[order], cols["rho1"][mask][order], "-", color="tab:blue", lw=1.6, label=r"$\rho_{1,0}$")
    ax.plot(x[order], cols["rho2"][mask][order], "--", color="tab:red", lw=1.6, label=r"$\rho_{2,0}$")
    ax.set_xlabel("x")
    ax.set_ylabel("density")
    ax.set_title("Initial data")
    ax.legend(loc="upper left")
    ax.margins(x=0)
    return _finish(fig, job, "initial")


def plot_density(job: FigureJob) -> Path:
    """Density evolution: one panel per species, lines coloured by time."""
    cols = load_snapshots(job.snapshots_path)
    times = cols["times"]
    shown = times[:: max(1, len(times) // 8)]
    cmap = plt.get_cmap("viridis")
    fig, axes = plt.subplots(1, 2, figsize=(10.0, 4.0), sharey=True)
    for ax, species in zip(axes, ("rho1", "rho2")):
        for t in shown:
            mask = cols["t"] == t
            x = cols["x"][mask]
            order = np.argsort(x)
            shade = 0.0 if times[-1] == times[0] else (t - times[0]) / (times[-1] - times[0])
            ax.plot(x[order], cols[species][mask][order], color=cmap(shade), lw=1.2)
        ax.set_xlabel("x")
        ax.set_title(species)
        ax.margins(x=0)
    axes[0].set_ylabel("density")
    fig.suptitle(f"Density evolution, t in [{times[0]:g}, {times[-1]:g}]")
    return _finish(fig, job, "density")


def plot_envelope(job: FigureJob) -> Path:
    """First-order energy against its closed-form bound."""
    cols = load_diagnostics(job.diagnostics_path)
    t = cols["time"]
    energy = cols["first_order_energy"]
    envelope = cols["gronwall_envelope"]
    crossed = energy > envelope
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    ax.plot(t, energy, "-", color="tab:blue", lw=1.6, label="first-order energy")
    ax.plot(t, envelope, "--", color="tab:orange", lw=1.6, label="envelope")
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    if crossed.any():
        first = t[np.argmax(crossed)]
        caption = f"bound crossed at t = {first:g}"
        ax.plot(t[crossed], energy[crossed], "x", color="tab:red", ms=5)
    else:
        caption = "bound holds at every snapshot"
    ax.set_title(f"Energy vs envelope ({caption})")
    ax.legend(loc="best")
    ax.margins(x=0)
    return _finish(fig, job, "envelope")


def plot_sweep(job: FigureJob) -> Path:
    """Inter-rung distances of the viscosity ladder on log-log axes."""
    cols = load_sweep(job.sweep_path)
    eta = cols["eta_j"]
    d = cols["d_j"]
    ratio = cols["ratio"]
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    positive = d > 0
    ax.loglog(eta[positive], d[positive], "o-", color="tab:blue", lw=1.4)
    for e, dist, r in zip(eta, d, ratio):
        if np.isfinite(r) and dist > 0:
            ax.annotate(f"{r:.2f}", (e, dist), textcoords="offset points", xytext=(4, 4), fontsize=7)
    ax.set_xlabel("regularisation strength")
    ax.set_ylabel("distance to next rung")
    ax.set_title("Vanishing-viscosity convergence")
    ax.invert_xaxis()
    return _finish(fig, job, "sweep")


FIGURES = {
    "initial": plot_initial,
    "density": plot_density,
    "envelope": plot_envelope,
    "sweep": plot_sweep,
}


def render(job: FigureJob) -> list:
    """Render the selected figures, returning the written paths."""
    return [FIGURES[name](job) for name in job.select]
