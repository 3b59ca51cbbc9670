"""Command line: run, check, study and energy-report."""

import csv
import json

import numpy as np
import pytest

from polytherm import selfcheck
from polytherm.cli import main
from polytherm.grid import GridSpec
from polytherm.varstep import constraint_adjoint

EQ = """
[grid]
n = 6
[initial]
preset = equilibrium
[time]
T = 0.05
h = 0.01
[study]
levels = 0.01 0.005 0.0025
grids = 4 8 16
reference_factor = 2
"""

WAVE = """
[grid]
n = 6
[initial]
preset = smooth-wave
amplitude = 0.02
velocity = 0.1
[time]
T = 0.04
h = 0.004
"""

HARD = """
[grid]
n = 6
[initial]
preset = smooth-wave
amplitude = 0.05
velocity = 5
[time]
T = 1
h = 0.5
[solver]
newton_max = 2
"""


def _cfg(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _read(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_run_equilibrium_constant_energy(tmp_path, capsys):
    out = tmp_path / "eq"
    assert main(["run", "--config", str(_cfg(tmp_path, EQ)), "--out", str(out)]) == 0
    rows = _read(out / "energy.csv")
    assert list(rows[0]) == ["step", "t", "total", "kinetic", "internal", "relative_energy",
                             "dissipation_margin", "heat"]
    assert len({r["total"] for r in rows}) == 1
    assert (out / "final.ckpt").exists() and (out / "drift.csv").exists() and (out / "solver.csv").exists()
    assert "FAIL" not in capsys.readouterr().out


def test_run_smooth_wave_nonincreasing(tmp_path):
    out = tmp_path / "w"
    assert main(["run", "--config", str(_cfg(tmp_path, WAVE)), "--out", str(out)]) == 0
    total = np.array([float(r["total"]) for r in _read(out / "energy.csv")])
    assert np.all(np.diff(total) <= 0)
    # floats are written with 17 significant digits, so they round-trip exactly
    assert all(len(r["total"].replace(".", "").lstrip("0")) >= 15 for r in _read(out / "energy.csv"))
    certs = _read(out / "certificates.csv")
    assert {c["verdict"] for c in certs} == {"PASS"}


def test_run_is_deterministic(tmp_path):
    cfg = _cfg(tmp_path, WAVE)
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "b"), "--workers", "3"])
    for name in ("energy.csv", "drift.csv", "solver.csv", "final.ckpt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_run_step_failure(tmp_path, capsys):
    out = tmp_path / "hard"
    assert main(["run", "--config", str(_cfg(tmp_path, HARD)), "--out", str(out)]) == 2
    rec = json.loads((out / "failure.json").read_text())
    assert rec["failed_step"] == 1 and "Newton" in rec["message"]
    assert (out / "energy.csv").exists()
    assert "step failure" in capsys.readouterr().err


def test_energy_report_reproduces_ledgers(tmp_path):
    out = tmp_path / "w"
    main(["run", "--config", str(_cfg(tmp_path, WAVE)), "--out", str(out)])
    rep = tmp_path / "rep"
    assert main(["energy-report", str(out / "final.ckpt"), "--out", str(rep)]) == 0
    assert (rep / "energy.csv").read_bytes() == (out / "energy.csv").read_bytes()
    assert (rep / "solver.csv").read_bytes() == (out / "solver.csv").read_bytes()


def test_energy_report_full_checkpoint_includes_drift(tmp_path):
    out = tmp_path / "w"
    main(["run", "--config", str(_cfg(tmp_path, WAVE + "[output]\ncheckpoint = full\n")), "--out", str(out)])
    rep = tmp_path / "rep"
    assert main(["energy-report", str(out / "final.ckpt"), "--out", str(rep)]) == 0
    assert (rep / "drift.csv").read_bytes() == (out / "drift.csv").read_bytes()


def test_config_error_exit_code(tmp_path, capsys):
    bad = _cfg(tmp_path, "[grid]\nn = 6\nbogus = 1\n[time]\nT = 1\nh = 1\n")
    assert main(["run", "--config", str(bad)]) == 2
    assert "line 3" in capsys.readouterr().err


def test_check_default_passes(capsys):
    assert main(["check", "--seed", "3"]) == 0
    out = capsys.readouterr().out
    assert "quadratic_surrogate_oracle" in out and "FAIL" not in out


def test_check_nonconvex_model_fails(capsys):
    assert main(["check", "--model", "saddle"]) == 1
    assert "constitutive_hessian" in capsys.readouterr().err


def test_check_catches_adjoint_sign_error():
    grid = GridSpec((5, 5, 5))
    rng = np.random.default_rng(0)
    row = selfcheck.adjoint_row(rng, grid, lambda g_, F0, m: -constraint_adjoint(g_, F0, m))
    assert not row.passed
    rows = selfcheck.run_suite(adjoint=lambda g_, F0, m: -constraint_adjoint(g_, F0, m))
    assert [r.name for r in rows if not r.passed] == ["constraint_adjoint_identity"]


def test_study_equilibrium_reports_exact(tmp_path, capsys):
    out = tmp_path / "s"
    assert main(["study", "--config", str(_cfg(tmp_path, EQ)), "--out", str(out)]) == 0
    rows = _read(out / "study.csv")
    orders = {r["quantity"]: r["order"] for r in rows if r["order"]}
    assert set(orders.values()) == {"exact"}


def test_study_needs_three_levels(tmp_path, capsys):
    cfg = _cfg(tmp_path, EQ.replace("levels = 0.01 0.005 0.0025", "levels = 0.01 0.005"))
    assert main(["study", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 2
    assert "at least 3" in capsys.readouterr().err


@pytest.mark.slow
def test_study_smooth_wave_orders(tmp_path, capsys):
    text = WAVE.replace("n = 6", "n = 8").replace("T = 0.04\nh = 0.004", "T = 0.04\nh = 0.002")
    text += "[study]\nlevels = 0.004 0.002 0.001\ngrids = 8 16 32\n"
    out = tmp_path / "s"
    assert main(["study", "--config", str(_cfg(tmp_path, text)), "--out", str(out), "--workers", "2"]) == 0
    rows = _read(out / "study.csv")
    drift = [r for r in rows if r["quantity"] == "cof_drift"]
    assert float(drift[0]["order"]) >= 0.8
    piola = [r for r in rows if r["quantity"] == "piola_residual"]
    assert float(piola[0]["order"]) >= 1.8
