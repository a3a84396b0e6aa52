import json
import textwrap

import numpy as np
import pytest

from crossmix.cli import main

BASE_RUN = """
[grid]
n_cells = 64

[time]
t_end = 0.005
snapshots = 10

[scheme]
eta = 0.25

[initial]
family = "uniform"

[potentials.v1]
kind = "zero"

[potentials.v2]
kind = "zero"

[run]
seed = 0
"""

HEAT_DECAY = """
[grid]
n_cells = 64

[time]
t_end = 0.01
snapshots = 20

[scheme]
eta = 0.1

[initial]
family = "cosine_mix"
a1 = 0.4
k1 = 1
a2 = 0.4
k2 = 1

[potentials.v1]
kind = "zero"

[potentials.v2]
kind = "zero"
"""

DRIFT_RUN = """
[grid]
n_cells = 64

[time]
t_end = 0.02
snapshots = 10

[scheme]
eta = 0.25

[initial]
family = "cosine_mix"
a1 = 0.2
k1 = 2
a2 = 0.1
k2 = 1
ratio_offset = 0.05

[potentials.v1]
kind = "cosine_sum"
terms = [[0.0496, 1, -1.5708]]

[potentials.v2]
kind = "zero"
"""


def write_config(tmp_path, body, name="config.toml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(body))
    return path


def read_rows(path):
    lines = path.read_text().strip().splitlines()
    assert lines[0].startswith("# crossmix-")
    header = lines[1].split(",")
    return header, [line.split(",") for line in lines[2:]]


def test_run_uniform_exits_zero_and_emits_artifacts(tmp_path):
    cfg = write_config(tmp_path, BASE_RUN)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    header, rows = read_rows(out / "diagnostics.csv")
    assert len(rows) == 11  # snapshot count + 1
    mass_col = header.index("mass1")
    masses = {row[mass_col] for row in rows}
    assert len(masses) == 1  # constant diagnostics on the fixed point

    _, snap_rows = read_rows(out / "snapshots.csv")
    times = {row[0] for row in snap_rows}
    assert len(times) == 11
    assert len(snap_rows) == 11 * 64

    summary = json.loads((out / "summary.json").read_text())
    assert summary["exit_code"] == 0
    assert all(c["passed"] in (True, None) for c in summary["checks"])
    assert summary["config_hash"]


def test_run_rejects_eta_out_of_range(tmp_path):
    cfg = write_config(tmp_path, BASE_RUN.replace("eta = 0.25", "eta = 0.7"))
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 2
    summary = json.loads((out / "summary.json").read_text())
    assert summary["exit_code"] == 2
    assert "eta" in summary["offending_key"]


def test_run_rejects_missing_grid_size(tmp_path):
    cfg = write_config(tmp_path, BASE_RUN.replace("n_cells = 64", ""))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_run_is_deterministic(tmp_path):
    cfg = write_config(tmp_path, DRIFT_RUN)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["run", "--config", str(cfg), "--out", str(out_a), "--seed", "5"]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(out_b), "--seed", "5"]) == 0
    for name in ("snapshots.csv", "diagnostics.csv"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_run_figure1_smoke(tmp_path):
    body = BASE_RUN.replace('family = "uniform"', 'family = "figure1"').replace(
        "n_cells = 64", "n_cells = 512"
    ).replace("t_end = 0.005", "t_end = 0.001")
    cfg = write_config(tmp_path, body)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert "max_clamp_count" in summary["run"]


def test_resolution_factor_scales_grid(tmp_path):
    cfg = write_config(tmp_path, BASE_RUN)
    out = tmp_path / "out"
    assert main(
        ["run", "--config", str(cfg), "--out", str(out), "--resolution-factor", "2"]
    ) == 0
    _, rows = read_rows(out / "snapshots.csv")
    assert len(rows) == 11 * 128


def test_sweep_requires_three_rungs(tmp_path):
    body = BASE_RUN + "\n[sweep]\neta_ladder = [0.5]\n"
    cfg = write_config(tmp_path, body)
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_sweep_uniform_state_distances_vanish(tmp_path):
    body = BASE_RUN + "\n[sweep]\neta_ladder = [0.5, 0.25, 0.125]\n"
    cfg = write_config(tmp_path, body)
    out = tmp_path / "out"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    _, rows = read_rows(out / "sweep.csv")
    assert len(rows) == 2
    assert all(float(row[1]) <= 1e-13 for row in rows)


def test_sweep_drift_distances_decrease(tmp_path):
    body = DRIFT_RUN + "\n[sweep]\neta_ladder = [0.5, 0.25, 0.125, 0.0625]\n"
    cfg = write_config(tmp_path, body)
    out = tmp_path / "out"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    _, rows = read_rows(out / "sweep.csv")
    distances = [float(row[1]) for row in rows]
    assert len(distances) == 3
    assert all(b < a for a, b in zip(distances, distances[1:]))
    summary = json.loads((out / "summary.json").read_text())
    assert summary["cauchy_pass"]


def test_verify_heat_decay_passes(tmp_path):
    cfg = write_config(tmp_path, HEAT_DECAY)
    out = tmp_path / "out"
    assert main(["verify", "--config", str(cfg), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["exit_code"] == 0
    assert (out / "refined" / "diagnostics.csv").exists()
    names = {c["name"]: c for c in summary["checks"]}
    assert names["gronwall_certificate"]["passed"] in (True, None)
    assert summary["hypotheses"]["verdicts"]["H2"]
    assert "sqrt_sigma_h1_budget" in summary["estimates"]


def test_verify_drift_config_exercises_envelope(tmp_path):
    # nonzero drift difference: envelope constants are positive and the
    # certificate is a real inequality, checked at both resolutions
    cfg = write_config(tmp_path, DRIFT_RUN)
    out = tmp_path / "out"
    assert main(["verify", "--config", str(cfg), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    names = {c["name"]: c for c in summary["checks"]}
    assert names["gronwall_certificate"]["passed"] is True
    rows = read_rows(out / "diagnostics.csv")[1]
    header = read_rows(out / "diagnostics.csv")[0]
    env_col = header.index("gronwall_envelope")
    envelopes = [float(r[env_col]) for r in rows]
    assert envelopes[-1] > envelopes[0]  # alpha, beta > 0 make it grow


def test_verify_segregated_data_fails_hypotheses(tmp_path):
    xs = np.linspace(0.0, 1.0, 64, endpoint=False)
    rho1 = np.where(xs < 0.5, 2.0, 0.0)
    rho2 = np.where(xs >= 0.5, 2.0, 0.0)
    np.savetxt(tmp_path / "rho1.csv", np.column_stack([xs, rho1]), delimiter=",")
    np.savetxt(tmp_path / "rho2.csv", np.column_stack([xs, rho2]), delimiter=",")
    body = HEAT_DECAY.replace(
        textwrap.dedent(
            """\
            [initial]
            family = "cosine_mix"
            a1 = 0.4
            k1 = 1
            a2 = 0.4
            k2 = 1
            """
        ),
        textwrap.dedent(
            """\
            [initial]
            family = "tabulated"
            table1 = "rho1.csv"
            table2 = "rho2.csv"
            """
        ),
    )
    cfg = write_config(tmp_path, body)
    out = tmp_path / "out"
    assert main(["verify", "--config", str(cfg), "--out", str(out)]) == 4
    summary = json.loads((out / "summary.json").read_text())
    assert not summary["hypotheses"]["verdicts"]["H2"]


def test_hypotheses_uniform_passes_with_zero_quantities(tmp_path, capsys):
    cfg = write_config(tmp_path, BASE_RUN)
    out = tmp_path / "out"
    assert main(["hypotheses", "--config", str(cfg), "--out", str(out)]) == 0
    captured = capsys.readouterr().out
    assert "H1 llogl" in captured
    summary = json.loads((out / "summary.json").read_text())
    values = summary["hypotheses"]["values"]["1"]
    assert values["tv_logratio"] == 0.0
    assert values["w21_v1"] == 0.0


def test_hypotheses_figure1_refinement_stable(tmp_path):
    body = BASE_RUN.replace('family = "uniform"', 'family = "figure1"').replace(
        "n_cells = 64", "n_cells = 256"
    )
    cfg = write_config(tmp_path, body)
    out = tmp_path / "out"
    assert main(["hypotheses", "--config", str(cfg), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["hypotheses"]["verdicts"]["H1"]
    assert summary["hypotheses"]["verdicts"]["H2"]


def test_hypotheses_flags_sawtooth_potential(tmp_path):
    n = 64
    xs = (np.arange(n) + 0.5) / n
    saw = 1e4 * np.where(xs < 0.5, xs, 1.0 - xs)
    np.savetxt(tmp_path / "saw.csv", saw, delimiter=",")
    body = BASE_RUN.replace(
        textwrap.dedent(
            """\
            [potentials.v1]
            kind = "zero"
            """
        ),
        textwrap.dedent(
            """\
            [potentials.v1]
            kind = "tabulated"
            table = "saw.csv"
            """
        ),
    )
    cfg = write_config(tmp_path, body)
    out = tmp_path / "out"
    assert main(["hypotheses", "--config", str(cfg), "--out", str(out)]) == 4
    summary = json.loads((out / "summary.json").read_text())
    assert not summary["hypotheses"]["verdicts"]["H4"]


def test_missing_config_file_is_config_error(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path)]) == 2
