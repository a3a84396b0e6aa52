"""Figure rendering for crossmix CSV artifacts."""

from .loaders import InputError, load_diagnostics, load_snapshots, load_sweep
from .render import FIGURES, FigureJob, plot_density, plot_envelope, plot_initial, plot_sweep, render

__version__ = "0.1.0"
