"""Command-line orchestration: single runs, viscosity sweeps,
verification runs, and hypothesis reports.

Exit codes: 0 success, 2 config error, 3 solver failure, 4 invariant or
hypothesis failure.  Every command writes a summary.json with a
machine-readable reason next to its CSV artifacts.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import (
    RunConfig,
    SweepConfig,
    load_raw,
    run_config_from_dict,
    sweep_config_from_dict,
)
from .diagnostics import (
    CheckResult,
    DiagnosticsCollector,
    check_trajectory,
    residual_labels,
    species_bv_l2,
    sqrt_sigma_dissipation,
    weak_residual,
)
from .errors import ConfigError, CrossmixError, SolverError
from .grid import quadrature
from .output import (
    config_hash,
    write_diagnostics,
    write_snapshots,
    write_summary,
    write_sweep,
)
from .potentials import check_h3_h4
from .solver import run
from .states import check_h1_h2

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_INVARIANT = 4

SWEEP_NOISE_FLOOR = 1e-13
CAUCHY_RATIO = 0.9
REFINEMENT_GROWTH_LIMIT = 4.0
DEFAULT_RESIDUAL_BANK = [("quad_decay", 1), ("quad_decay", 2), ("quad_decay", 3)]


def _execute(cfg: RunConfig):
    """Build and advance one configured run with diagnostics attached."""
    grid, state0, pair = cfg.build()
    state0.assert_probability(tol=cfg.mass_tol)
    scheme = cfg.scheme()
    collector = DiagnosticsCollector(pair, scheme)
    traj = run(
        state0,
        pair,
        scheme,
        reactions=cfg.reactions,
        observers=(collector,),
        n_snapshots=cfg.snapshots,
    )
    return traj


def _check_payload(checks) -> list:
    return [
        {"name": c.name, "passed": c.passed, "detail": c.detail} for c in checks
    ]


def _write_run_artifacts(out_dir: Path, traj) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_snapshots(out_dir / "snapshots.csv", traj)
    write_diagnostics(out_dir / "diagnostics.csv", traj.records)


def cmd_run(cfg: RunConfig) -> int:
    out_dir = cfg.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {"command": "run", "config": cfg.echo, "config_hash": config_hash(cfg.echo)}
    try:
        traj = _execute(cfg)
    except SolverError as exc:
        _write_run_artifacts(out_dir, exc.trajectory)
        summary.update(exit_code=EXIT_SOLVER, exit_reason=f"solver failure: {exc}")
        write_summary(out_dir / "summary.json", summary)
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    _write_run_artifacts(out_dir, traj)
    checks = check_trajectory(
        traj,
        mass_tol=cfg.mass_tol,
        envelope_slack=cfg.envelope_slack,
        entropy_tol_factor=cfg.entropy_tol_factor,
    )
    summary["checks"] = _check_payload(checks)
    summary["run"] = {
        "total_steps": traj.total_steps,
        "max_retries": traj.max_retries,
        "final_time": traj.times[-1],
        "max_clamp_count": max(r.clamp_count for r in traj.records),
    }
    failed = [c for c in checks if c.failed]
    code = EXIT_INVARIANT if failed else EXIT_OK
    summary.update(
        exit_code=code,
        exit_reason="ok" if not failed else "invariant failure: "
        + ", ".join(c.name for c in failed),
    )
    write_summary(out_dir / "summary.json", summary)
    for check in checks:
        state = "skip" if check.passed is None else ("pass" if check.passed else "FAIL")
        print(f"[{state}] {check.name}: {check.detail}")
    return code


def _sweep_rung(raw: dict, base_dir: str, overrides: dict, eta: float):
    """Worker: run one ladder rung, return snapshot arrays."""
    cfg = run_config_from_dict(raw, Path(base_dir), overrides)
    cfg.eta = eta
    traj = _execute(cfg)
    return (
        list(traj.times),
        [s.rho1.values for s in traj.states],
        [s.rho2.values for s in traj.states],
    )


def _sweep_distance(result_a, result_b, norm: str, dx: float) -> float:
    times, rho1_a, rho2_a = result_a
    _, rho1_b, rho2_b = result_b
    per_time = np.array(
        [
            float(np.abs(a1 - b1).sum() * dx + np.abs(a2 - b2).sum() * dx)
            for a1, b1, a2, b2 in zip(rho1_a, rho1_b, rho2_a, rho2_b)
        ]
    )
    if norm == "L1_final":
        return float(per_time[-1])
    return float(np.sqrt(np.trapezoid(per_time**2, times)))


def cmd_sweep(sweep: SweepConfig, raw: dict, base_dir: Path, overrides: dict) -> int:
    cfg = sweep.base
    out_dir = cfg.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {
        "command": "sweep",
        "config": cfg.echo,
        "config_hash": config_hash(cfg.echo),
        "eta_ladder": list(sweep.eta_ladder),
        "norm": sweep.norm,
    }
    tasks = [(raw, str(base_dir), overrides, eta) for eta in sweep.eta_ladder]
    try:
        workers = min(len(tasks), os.cpu_count() or 1)
        try:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_sweep_rung, *zip(*tasks)))
        except Exception:
            # pickling or pool start-up limits: fall back to serial execution
            results = [_sweep_rung(*task) for task in tasks]
    except SolverError as exc:
        summary.update(exit_code=EXIT_SOLVER, exit_reason=f"solver failure: {exc}")
        write_summary(out_dir / "summary.json", summary)
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    dx = 1.0 / cfg.n_cells
    distances = [
        _sweep_distance(results[j], results[j + 1], sweep.norm, dx)
        for j in range(len(results) - 1)
    ]
    rows = []
    ratios = []
    for j, d in enumerate(distances):
        ratio = distances[j] / distances[j - 1] if j >= 1 and distances[j - 1] > 0 else float("nan")
        if j >= 1:
            ratios.append((d, distances[j - 1], ratio))
        rows.append((sweep.eta_ladder[j], d, ratio))
    write_sweep(out_dir / "sweep.csv", rows)

    cauchy_ok = all(
        d <= SWEEP_NOISE_FLOOR or (np.isfinite(r) and r <= CAUCHY_RATIO)
        for d, _, r in ratios
    )
    summary["distances"] = distances
    summary["cauchy_pass"] = bool(cauchy_ok)
    code = EXIT_OK if cauchy_ok else EXIT_INVARIANT
    summary.update(
        exit_code=code,
        exit_reason="ok" if cauchy_ok else "invariant failure: cauchy ratio above 0.9",
    )
    write_summary(out_dir / "summary.json", summary)
    for (eta_j, d, ratio) in rows:
        print(f"eta={eta_j:<12.6g} d={d:<12.6g} ratio={ratio:.6g}")
    print(f"cauchy: {'pass' if cauchy_ok else 'FAIL'}")
    return code


def _refinement_stable(coarse: float, fine: float) -> bool:
    return abs(fine) <= max(REFINEMENT_GROWTH_LIMIT * abs(coarse), 1e-9)


def _hypothesis_block(cfg: RunConfig) -> dict:
    """H1-H4 quantities at 1x and 2x resolution with verdicts."""
    values = {}
    for factor in (1, 2):
        sub = cfg.with_resolution_factor(factor)
        grid, state0, pair = sub.build()
        h12 = check_h1_h2(state0)
        h34 = check_h3_h4(pair)
        values[factor] = {
            "llogl": h12.llogl,
            "tv_logratio": h12.tv_logratio,
            "mixing_bound": h12.mixing_bound,
            "clamp_fraction": h12.clamp_fraction,
            "h12_passed": h12.passed,
            "w21_v1": h34.h3_norms[0],
            "w21_v2": h34.h3_norms[1],
            "w31_diff": h34.h4_norm,
            "h34_passed": h34.passed,
        }
    one, two = values[1], values[2]
    verdicts = {
        "H1": one["h12_passed"] and two["h12_passed"]
        and _refinement_stable(one["llogl"], two["llogl"]),
        "H2": one["h12_passed"] and two["h12_passed"]
        and _refinement_stable(one["tv_logratio"], two["tv_logratio"]),
        "H3": one["h34_passed"] and two["h34_passed"]
        and _refinement_stable(one["w21_v1"], two["w21_v1"])
        and _refinement_stable(one["w21_v2"], two["w21_v2"]),
        "H4": one["h34_passed"] and two["h34_passed"]
        and _refinement_stable(one["w31_diff"], two["w31_diff"]),
    }
    return {"values": values, "verdicts": verdicts, "passed": all(verdicts.values())}


def cmd_hypotheses(cfg: RunConfig) -> int:
    out_dir = cfg.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {
        "command": "hypotheses",
        "config": cfg.echo,
        "config_hash": config_hash(cfg.echo),
    }
    block = _hypothesis_block(cfg)
    summary["hypotheses"] = {
        "values": {str(k): v for k, v in block["values"].items()},
        "verdicts": block["verdicts"],
    }
    code = EXIT_OK if block["passed"] else EXIT_INVARIANT
    summary.update(
        exit_code=code,
        exit_reason="ok" if block["passed"] else "hypothesis failure: "
        + ", ".join(name for name, ok in block["verdicts"].items() if not ok),
    )
    write_summary(out_dir / "summary.json", summary)

    one, two = block["values"][1], block["values"][2]
    rows = [
        ("H1 llogl", one["llogl"], two["llogl"], block["verdicts"]["H1"]),
        ("H2 tv_logratio", one["tv_logratio"], two["tv_logratio"], block["verdicts"]["H2"]),
        ("H3 w21_v1", one["w21_v1"], two["w21_v1"], block["verdicts"]["H3"]),
        ("H3 w21_v2", one["w21_v2"], two["w21_v2"], block["verdicts"]["H3"]),
        ("H4 w31_diff", one["w31_diff"], two["w31_diff"], block["verdicts"]["H4"]),
    ]
    for name, v1, v2, ok in rows:
        print(f"[{'pass' if ok else 'FAIL'}] {name}: 1x={v1:.6g} 2x={v2:.6g}")
    return code


def _combine_checks(coarse: list, fine: list) -> list:
    """Merge the two-resolution check outcomes.

    The envelope certificate defers to the refined run on failure; all
    other checks must hold at both resolutions.
    """
    by_name = {c.name: c for c in fine}
    combined = []
    for check in coarse:
        other = by_name.get(check.name)
        detail = f"1x: {check.detail}; 2x: {other.detail if other else 'n/a'}"
        if check.name == "gronwall_certificate":
            if check.passed is False and other is not None and other.passed:
                combined.append(CheckResult(check.name, True, detail + " (resolved at 2x)"))
                continue
            if check.passed is None and other is not None:
                combined.append(CheckResult(check.name, other.passed, detail))
                continue
            combined.append(CheckResult(check.name, check.passed, detail))
            continue
        if check.passed is None or (other is not None and other.passed is None):
            combined.append(CheckResult(check.name, None, detail))
        else:
            combined.append(
                CheckResult(check.name, check.passed and other.passed, detail)
            )
    return combined


def _residual_block(traj, cfg: RunConfig) -> dict:
    if len(traj.times) < 16:
        return {"skipped": "needs at least 16 snapshots"}
    values = weak_residual(traj, traj.pair, traj.cfg.eta, DEFAULT_RESIDUAL_BANK)
    labels = residual_labels(DEFAULT_RESIDUAL_BANK)
    return {"max": max(values), "values": dict(zip(labels, values))}


def cmd_verify(cfg: RunConfig) -> int:
    out_dir = cfg.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {
        "command": "verify",
        "config": cfg.echo,
        "config_hash": config_hash(cfg.echo),
    }
    block = _hypothesis_block(cfg)
    summary["hypotheses"] = {
        "values": {str(k): v for k, v in block["values"].items()},
        "verdicts": block["verdicts"],
    }
    for name, ok in block["verdicts"].items():
        print(f"[{'pass' if ok else 'FAIL'}] hypothesis {name}")
    if not block["passed"]:
        summary.update(
            exit_code=EXIT_INVARIANT,
            exit_reason="hypothesis failure: "
            + ", ".join(name for name, ok in block["verdicts"].items() if not ok),
        )
        write_summary(out_dir / "summary.json", summary)
        return EXIT_INVARIANT

    trajectories = {}
    try:
        for factor in (1, 2):
            sub = cfg.with_resolution_factor(factor)
            trajectories[factor] = _execute(sub)
    except SolverError as exc:
        summary.update(exit_code=EXIT_SOLVER, exit_reason=f"solver failure: {exc}")
        write_summary(out_dir / "summary.json", summary)
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    traj1, traj2 = trajectories[1], trajectories[2]
    _write_run_artifacts(out_dir, traj1)
    _write_run_artifacts(out_dir / "refined", traj2)

    kwargs = dict(
        mass_tol=cfg.mass_tol,
        envelope_slack=cfg.envelope_slack,
        entropy_tol_factor=cfg.entropy_tol_factor,
    )
    combined = _combine_checks(
        check_trajectory(traj1, **kwargs), check_trajectory(traj2, **kwargs)
    )
    summary["checks"] = _check_payload(combined)
    summary["estimates"] = {
        "sqrt_sigma_h1_budget": {
            "1x": sqrt_sigma_dissipation(traj1),
            "2x": sqrt_sigma_dissipation(traj2),
        },
        "species_bv_l2": {
            "1x": list(species_bv_l2(traj1)),
            "2x": list(species_bv_l2(traj2)),
        },
        "weak_residual": {
            "1x": _residual_block(traj1, cfg),
            "2x": _residual_block(traj2, cfg),
        },
    }
    failed = [c for c in combined if c.failed]
    code = EXIT_INVARIANT if failed else EXIT_OK
    summary.update(
        exit_code=code,
        exit_reason="ok" if not failed else "invariant failure: "
        + ", ".join(c.name for c in failed),
    )
    write_summary(out_dir / "summary.json", summary)
    for check in combined:
        state = "skip" if check.passed is None else ("pass" if check.passed else "FAIL")
        print(f"[{state}] {check.name}: {check.detail}")
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossmix",
        description="Finite-volume runs and verification for the two-species "
        "cross-diffusion system",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, description in (
        ("run", "single run with diagnostics and invariant checks"),
        ("sweep", "vanishing-viscosity ladder with Cauchy table"),
        ("verify", "two-resolution run checking every tracked estimate"),
        ("hypotheses", "evaluate the standing hypotheses on data and potentials"),
    ):
        p = sub.add_parser(name, help=description)
        p.add_argument("--config", required=True, help="TOML configuration file")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument(
            "--resolution-factor",
            type=int,
            default=1,
            help="multiply the configured n_cells",
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        "out_dir": args.out,
        "seed": args.seed,
        "resolution_factor": args.resolution_factor,
    }
    try:
        raw = load_raw(args.config)
        base_dir = Path(args.config).parent
        if args.command == "sweep":
            sweep = sweep_config_from_dict(raw, base_dir, overrides)
            return cmd_sweep(sweep, raw, base_dir, overrides)
        cfg = run_config_from_dict(raw, base_dir, overrides)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "verify":
            return cmd_verify(cfg)
        return cmd_hypotheses(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        _try_write_config_error(args, exc)
        return EXIT_CONFIG
    except CrossmixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def _try_write_config_error(args, exc: ConfigError) -> None:
    try:
        out = Path(args.out) if args.out else None
        if out is None:
            raw = load_raw(args.config)
            out = Path(raw.get("output", {}).get("directory", "out"))
        out.mkdir(parents=True, exist_ok=True)
        write_summary(
            out / "summary.json",
            {
                "command": args.command,
                "exit_code": EXIT_CONFIG,
                "exit_reason": f"config error: {exc}",
                "offending_key": exc.key,
            },
        )
    except Exception:
        pass  # reporting must never mask the config error


if __name__ == "__main__":
    sys.exit(main())
