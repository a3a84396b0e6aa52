"""Acceptance suite: one test per exit criterion, each printing a
PASS/FAIL line with its pinned tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines.
"""

import json
import math
import textwrap
import time

import numpy as np
import pytest

from crossmix.cli import main
from crossmix.config import DEFAULT_ETA_LADDER
from crossmix.diagnostics import (
    DiagnosticsCollector,
    check_trajectory,
    residual_labels,
    weak_residual,
)
from crossmix.grid import Grid, GridField, quadrature
from crossmix.potentials import build_pair, cosine_potential, gronwall_constants, zero_potential
from crossmix.solver import (
    ReactionSpec,
    SchemeConfig,
    reaction_logistic,
    reaction_zero,
    run,
    step,
)
from crossmix.states import InitialSpec, SpeciesState, make_initial, to_mixed

TWO_PI = 2.0 * math.pi


def report(name, passed, detail):
    print(f"[ACCEPTANCE] {name}: {'PASS' if passed else 'FAIL'} ({detail})")
    assert passed, f"{name}: {detail}"


def state_of(grid, rho1, rho2, time=0.0):
    return SpeciesState(GridField(grid, rho1), GridField(grid, rho2), time)


def drift_pair(grid, a):
    # d/dx (V1 - V2) = a cos(2 pi x), d/dx V2 = 0
    return build_pair(
        cosine_potential((a / TWO_PI, 1, -math.pi / 2)), zero_potential(), grid
    )


def run_with_records(state, pair, cfg, n_snapshots, reactions=None):
    collector = DiagnosticsCollector(pair, cfg)
    return run(
        state,
        pair,
        cfg,
        reactions=reactions,
        observers=(collector,),
        n_snapshots=n_snapshots,
    )


# --- shared runs -----------------------------------------------------------


@pytest.fixture(scope="module")
def mass_run():
    """Drift run at n=256 over [0, 0.5], the timed mass-conservation case."""
    g = Grid(256)
    pair = drift_pair(g, 0.3)
    state = make_initial(
        InitialSpec("cosine_mix", a1=0.25, k1=2, a2=0.15, k2=1, ratio_offset=0.1), g
    )
    cfg = SchemeConfig(eta=0.25, t_end=0.5)
    start = time.perf_counter()
    traj = run_with_records(state, pair, cfg, n_snapshots=50)
    return traj, time.perf_counter() - start


@pytest.fixture(scope="module")
def heat_family():
    """Equal-species heat decay at n in {64,128,256} plus 4x references."""
    out = {}
    for n in (64, 128, 256, 512, 1024):
        g = Grid(n)
        sigma0 = 1.0 + 0.5 * np.cos(TWO_PI * g.cell_centers)
        state = state_of(g, sigma0 / 2, sigma0 / 2)
        pair = build_pair(zero_potential(), zero_potential(), g)
        cfg = SchemeConfig(eta=0.1, t_end=0.02)
        out[n] = run_with_records(state, pair, cfg, n_snapshots=20)
    return out


@pytest.fixture(scope="module")
def gronwall_family():
    """Drift amplitude x resolution grid for the envelope certificate."""
    out = {}
    for a in (0.25, 0.5):
        for n in (256, 512):
            g = Grid(n)
            pair = drift_pair(g, a)
            state = make_initial(
                InitialSpec("cosine_mix", a1=0.25, k1=2, a2=0.15, k2=1, ratio_offset=0.1),
                g,
            )
            cfg = SchemeConfig(eta=0.25, t_end=0.25)
            out[(a, n)] = run_with_records(state, pair, cfg, n_snapshots=25)
    return out


@pytest.fixture(scope="module")
def equal_drift_run():
    """V1 = V2 with a constant initial ratio away from 1/2."""
    g = Grid(256)
    spec = cosine_potential((0.3, 1, 0.0))
    pair = build_pair(spec, spec, g)
    sigma0 = 1.0 + 0.5 * np.cos(2 * TWO_PI * g.cell_centers + 0.7)
    r0 = 0.3
    state = state_of(g, r0 * sigma0, (1 - r0) * sigma0)
    cfg = SchemeConfig(eta=0.2, t_end=0.1)
    return run_with_records(state, pair, cfg, n_snapshots=20), r0


def all_no_reaction_runs(mass_run, heat_family, gronwall_family, equal_drift_run):
    runs = [("mass", mass_run[0])]
    runs += [(f"heat-n{n}", traj) for n, traj in heat_family.items()]
    runs += [(f"gronwall-a{a}-n{n}", traj) for (a, n), traj in gronwall_family.items()]
    runs.append(("equal-drift", equal_drift_run[0]))
    return runs


# --- criteria --------------------------------------------------------------


def test_mass_conservation(mass_run):
    traj, elapsed = mass_run
    worst = max(
        max(abs(r.mass1 - 1.0), abs(r.mass2 - 1.0)) for r in traj.records
    )
    report(
        "mass-conservation",
        worst <= 1e-10 and elapsed < 10.0,
        f"max |mass - 1| = {worst:.2e} (tol 1e-10), runtime {elapsed:.1f}s < 10s",
    )


def test_fixed_point():
    g = Grid(256)
    pair = build_pair(zero_potential(), zero_potential(), g)
    cfg = SchemeConfig(eta=0.25, t_end=1.0)
    state = state_of(g, np.ones(256), np.ones(256))
    for _ in range(1000):
        state, _ = step(state, pair, cfg)
    dev = max(
        np.abs(state.rho1.values - 1.0).max(), np.abs(state.rho2.values - 1.0).max()
    )
    report("fixed-point", dev <= 1e-12, f"max deviation {dev:.2e} after 1000 steps (tol 1e-12)")


def test_equal_drift_ratio_transport(equal_drift_run):
    traj, r0 = equal_drift_run
    dev = max(
        np.abs(to_mixed(s).ratio.values - r0).max() for s in traj.states
    )
    moved = np.abs(
        traj.final_state.rho1.values + traj.final_state.rho2.values
        - (traj.states[0].rho1.values + traj.states[0].rho2.values)
    ).max()
    report(
        "equal-drift-ratio-transport",
        dev <= 1e-10 and moved > 1e-4,
        f"max |r - r0| = {dev:.2e} (tol 1e-10), sigma moved {moved:.2e}",
    )


def coarsen(values, factor):
    return values.reshape(-1, factor).mean(axis=1)


def test_heat_oracle(heat_family):
    errors = []
    for n in (64, 128, 256):
        sigma = heat_family[n].final_state.rho1.values + heat_family[n].final_state.rho2.values
        ref_traj = heat_family[4 * n]
        ref = ref_traj.final_state.rho1.values + ref_traj.final_state.rho2.values
        errors.append(np.abs(sigma - coarsen(ref, 4)).max())
    orders = [math.log2(a / b) for a, b in zip(errors, errors[1:])]
    report(
        "heat-oracle",
        min(orders) >= 1.8,
        f"errors vs 4x reference {[f'{e:.2e}' for e in errors]}, orders {[f'{o:.2f}' for o in orders]} (>= 1.8)",
    )


def test_gronwall_certificate(gronwall_family):
    worst = -math.inf
    for (a, n), traj in gronwall_family.items():
        assert max(r.clamp_count for r in traj.records) == 0
        for rec in traj.records:
            worst = max(worst, rec.first_order_energy - 1.1 * rec.gronwall_envelope)
    report(
        "gronwall-certificate",
        worst <= 0.0,
        f"max(energy - 1.1 envelope) = {worst:.3e} over a in {{0.25,0.5}}, n in {{256,512}}",
    )


def test_tv_ordering(mass_run, heat_family, gronwall_family, equal_drift_run):
    worst = -math.inf
    for _, traj in all_no_reaction_runs(mass_run, heat_family, gronwall_family, equal_drift_run):
        for rec in traj.records:
            worst = max(worst, rec.tv_r - 0.25 * rec.tv_f)
    report(
        "tv-ordering",
        worst <= 0.0,
        f"max(tv_r - tv_f/4) = {worst:.3e} over every snapshot of every run",
    )


def test_entropy_decay(mass_run, heat_family, gronwall_family, equal_drift_run):
    failing = []
    for name, traj in all_no_reaction_runs(mass_run, heat_family, gronwall_family, equal_drift_run):
        results = {c.name: c for c in check_trajectory(traj)}
        if not results["entropy_decay"].passed:
            failing.append(name)
    report(
        "entropy-decay",
        not failing,
        f"nonincreasing within 10 dt dx on all runs"
        + (f"; failing: {failing}" if failing else ""),
    )


def test_eta_sweep_cauchy():
    # short horizon keeps every rung in the linear-response window of the
    # regularisation strength, where the inter-rung gaps halve with eta
    g = Grid(256)
    pair = drift_pair(g, 0.3)
    spec = InitialSpec("cosine_mix", a1=0.25, k1=2, a2=0.15, k2=1, ratio_offset=0.1)
    finals = []
    for eta in DEFAULT_ETA_LADDER:
        state = make_initial(spec, g)
        cfg = SchemeConfig(eta=eta, t_end=0.01)
        traj = run(state, pair, cfg, n_snapshots=5)
        finals.append(
            (traj.final_state.rho1.values.copy(), traj.final_state.rho2.values.copy())
        )
    distances = [
        g.dx * (np.abs(a1 - b1).sum() + np.abs(a2 - b2).sum())
        for (a1, a2), (b1, b2) in zip(finals, finals[1:])
    ]
    ratios = [distances[j + 1] / distances[j] for j in range(len(distances) - 1)]
    checked = ratios[1:5]  # j = 1..4, skipping the first gap
    report(
        "eta-sweep-cauchy",
        all(r <= 0.9 for r in checked),
        f"d ratios {[f'{r:.3f}' for r in checked]} (<= 0.9 for j=1..4)",
    )


def test_weak_residual_refinement():
    bank = [("quad_decay", k) for k in (1, 2, 3)]
    labels = residual_labels(bank)

    def heat(n, dt_max, snaps):
        g = Grid(n)
        sigma0 = 1.0 + 0.5 * np.cos(TWO_PI * g.cell_centers)
        state = state_of(g, sigma0 / 2, sigma0 / 2)
        pair = build_pair(zero_potential(), zero_potential(), g)
        cfg = SchemeConfig(eta=0.1, t_end=0.05, dt_max=dt_max)
        traj = run(state, pair, cfg, n_snapshots=snaps)
        values = weak_residual(traj, pair, cfg.eta, bank)
        return {
            k: max(v for l, v in zip(labels, values) if f":k={k}:" in l)
            for k in (1, 2, 3)
        }

    coarse = heat(64, 2e-5, 32)
    fine = heat(128, 1e-5, 64)  # dx and dt both halved
    reductions = {k: coarse[k] / fine[k] for k in (1, 2, 3)}
    report(
        "weak-residual-refinement",
        all(r >= 3.0 for r in reductions.values()),
        f"reductions {{k: {', '.join(f'{k}: {v:.2f}x' for k, v in reductions.items())}}} (>= 3x)",
    )


def test_reaction_mass_law():
    g = Grid(128)
    pair = drift_pair(g, 0.2)
    state = make_initial(
        InitialSpec("cosine_mix", a1=0.2, k1=1, a2=0.1, k2=2, ratio_offset=0.05), g
    )
    cfg = SchemeConfig(eta=0.2, t_end=1.0)
    logistic = ReactionSpec.from_functions(
        reaction_logistic(0.5, 1.0), reaction_logistic(0.5, 1.0)
    )
    worst = 0.0
    cur = state
    for _ in range(50):
        cur, rep = step(cur, pair, cfg, logistic)
        worst = max(worst, abs(rep.mass_drift[0]), abs(rep.mass_drift[1]))

    zero_spec = ReactionSpec.from_functions(reaction_zero(), reaction_zero())
    cfg_short = SchemeConfig(eta=0.2, t_end=0.005)
    plain = run(state, pair, cfg_short, n_snapshots=8)
    reacted = run(state, pair, cfg_short, reactions=zero_spec, n_snapshots=8)
    bitwise = all(
        np.array_equal(a.rho1.values, b.rho1.values)
        and np.array_equal(a.rho2.values, b.rho2.values)
        for a, b in zip(plain.states, reacted.states)
    )
    report(
        "reaction-mass-law",
        worst <= 1e-12 and bitwise,
        f"max |dm - dt*integral(rho F)| = {worst:.2e} (tol 1e-12); "
        f"zero-reaction bitwise match: {bitwise}",
    )


FIGURE1_CONFIG = """
[grid]
n_cells = 256

[time]
t_end = 0.001
snapshots = 4

[scheme]
eta = 0.25

[initial]
family = "figure1"
a1 = 0.2
k1 = 17
a2 = 0.3
k2 = 11

[potentials.v1]
kind = "zero"

[potentials.v2]
kind = "zero"
"""


def test_hypothesis_checker(tmp_path):
    cfg_path = tmp_path / "figure1.toml"
    cfg_path.write_text(textwrap.dedent(FIGURE1_CONFIG))
    out_good = tmp_path / "good"
    code_good = main(["hypotheses", "--config", str(cfg_path), "--out", str(out_good)])
    summary = json.loads((out_good / "summary.json").read_text())
    verdicts = summary["hypotheses"]["verdicts"]

    xs = np.linspace(0.0, 1.0, 128, endpoint=False)
    np.savetxt(
        tmp_path / "seg1.csv",
        np.column_stack([xs, np.where(xs < 0.5, 2.0, 0.0)]),
        delimiter=",",
    )
    np.savetxt(
        tmp_path / "seg2.csv",
        np.column_stack([xs, np.where(xs >= 0.5, 2.0, 0.0)]),
        delimiter=",",
    )
    seg_cfg = textwrap.dedent(FIGURE1_CONFIG).replace(
        textwrap.dedent(
            """\
            [initial]
            family = "figure1"
            a1 = 0.2
            k1 = 17
            a2 = 0.3
            k2 = 11
            """
        ),
        textwrap.dedent(
            """\
            [initial]
            family = "tabulated"
            table1 = "seg1.csv"
            table2 = "seg2.csv"
            """
        ),
    )
    seg_path = tmp_path / "segregated.toml"
    seg_path.write_text(seg_cfg)
    out_bad = tmp_path / "bad"
    code_bad = main(["hypotheses", "--config", str(seg_path), "--out", str(out_bad)])
    bad_summary = json.loads((out_bad / "summary.json").read_text())

    ok = (
        code_good == 0
        and verdicts["H1"]
        and verdicts["H2"]
        and code_bad == 4
        and not bad_summary["hypotheses"]["verdicts"]["H2"]
    )
    report(
        "hypothesis-checker",
        ok,
        f"figure1 exit {code_good} with H1/H2 stable; segregated exit {code_bad} with H2 failed",
    )
