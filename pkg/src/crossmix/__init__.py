"""Finite-volume laboratory for a two-species cross-diffusion system on
the unit torus, with species drifts and runtime-checkable estimates."""

from .grid import Grid, GridField, periodic_diff, quadrature, sobolev_norm, total_variation
from .potentials import (
    GronwallConstants,
    PotentialPair,
    PotentialSpec,
    build_pair,
    check_h3_h4,
    cosine_potential,
    gronwall_constants,
    tabulated_potential,
    zero_potential,
)
from .solver import (
    ReactionSpec,
    SchemeConfig,
    StepReport,
    Trajectory,
    reaction_logistic,
    reaction_tabulated_bilinear,
    reaction_zero,
    run,
    species_flux,
    step,
    transformed_rhs,
)
from .states import (
    InitialSpec,
    MixedState,
    SpeciesState,
    check_h1_h2,
    f_prime,
    from_mixed,
    make_initial,
    to_mixed,
)
from .diagnostics import (
    DiagnosticsCollector,
    DiagnosticsRecord,
    check_trajectory,
    entropy_eta,
    first_order_energy,
    gronwall_envelope,
    species_bv,
    sqrt_sigma_dissipation,
    weak_residual,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
