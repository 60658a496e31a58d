import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from runtumble import cli
from runtumble.model import NumericalError

CONFIGS = Path(__file__).parent.parent / "configs"


def run(*args):
    return cli.main([str(a) for a in args])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], [[float(v) if v else None for v in r] for r in rows[1:]]


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


SMALL_SIM = """
[simulation]
t = 5
n = 3000
seed = 12
clt_t = 50
clt_n = 2000
scgf_alpha = 0.1
scgf_t = 2
scgf_n = 3000
endpoints = true
"""


def test_analyze_worked_examples(tmp_path):
    assert run("analyze", "--config", CONFIGS / "lattice_1d.ini", "--out", tmp_path / "a") == 0
    assert json.loads((tmp_path / "a" / "diffusion.json").read_text())["sigma2"] == 5.0
    assert run("analyze", "--config", CONFIGS / "continuum.ini", "--out", tmp_path / "c") == 0
    assert json.loads((tmp_path / "c" / "diffusion.json").read_text())["sigma2"] == 3.0
    header, rows = read_csv(tmp_path / "a" / "fourier_laplace.csv")
    assert header == ["q", "z_re", "z_im", "S_re", "S_im", "closed_form_residual"]
    for q, z, _, s_re, s_im, _ in rows:
        if q == 0.0:
            assert s_re == pytest.approx(1 / z, rel=1e-14) and s_im == 0.0
    header, rows = read_csv(tmp_path / "a" / "scaling_diagnostic.csv")
    assert header == ["epsilon", "deviation"] and len(rows) == 3


def test_analyze_general_model_writes_diffusion_matrix(tmp_path):
    assert run("analyze", "--config", CONFIGS / "lattice_2d.ini", "--out", tmp_path) == 0
    summary = json.loads((tmp_path / "diffusion.json").read_text())
    np.testing.assert_allclose(summary["diffusion_matrix"], np.eye(2), atol=1e-12)
    assert not (tmp_path / "fourier_laplace.csv").exists()


def test_ldp_two_state(tmp_path):
    assert run("ldp", "--out", tmp_path) == 0
    report = json.loads((tmp_path / "verify.json").read_text())
    assert report["max_abs_discrepancy"]["closed_spectral"] <= 1e-12
    assert report["gamma_monotone"] is True
    header, rows = read_csv(tmp_path / "free_energy.csv")
    assert header == ["alpha", "F_closed", "F_spectral", "F_variational"]
    assert len(rows) == 41
    header, rows = read_csv(tmp_path / "rate_function.csv")
    assert header == ["x", "I", "alpha_star"]
    I = np.array([r[1] for r in rows])
    np.testing.assert_allclose(I, I[::-1], atol=1e-12)
    assert I[len(I) // 2] == 0.0


def test_ldp_four_velocity(tmp_path):
    assert run("ldp", "--config", CONFIGS / "lattice_2d.ini", "--out", tmp_path) == 0
    report = json.loads((tmp_path / "verify.json").read_text())
    assert report["max_abs_discrepancy"]["spectral_variational"] <= 1e-8
    assert "closed_spectral" not in report["max_abs_discrepancy"]
    header, rows = read_csv(tmp_path / "free_energy.csv")
    assert header[:2] == ["alpha_1", "alpha_2"] and all(r[2] is None for r in rows)


def test_simulate_is_byte_identical_across_runs_and_threads(tmp_path):
    cfg = write(tmp_path, "[model]\ntype = lattice\n" + SMALL_SIM)
    assert run("simulate", "--config", cfg, "--out", tmp_path / "a") == 0
    assert run("simulate", "--config", cfg, "--out", tmp_path / "b", "--threads", "3") == 0
    for name in ("sim_stats.json", "endpoints.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert run("simulate", "--config", cfg, "--out", tmp_path / "c", "--seed", "13") == 0
    assert (tmp_path / "a" / "sim_stats.json").read_bytes() != (tmp_path / "c" / "sim_stats.json").read_bytes()
    stats = json.loads((tmp_path / "a" / "sim_stats.json").read_text())
    assert set(stats) >= {"sigma2", "sigma2_stderr", "velocity", "clt", "scgf"}
    assert stats["scgf"][0]["reliable"] in (True, False)
    header, rows = read_csv(tmp_path / "a" / "endpoints.csv")
    assert header == ["replica", "x_1", "v_index"] and len(rows) == 3000


def test_simulate_drift_leaves_diffusion_unchanged(tmp_path):
    cfg = write(tmp_path, (CONFIGS / "continuum_drift.ini").read_text().split("[simulation]")[0]
                + "[simulation]\nt = 20\nn = 20000\nseed = 1\nclt_t = 20\nclt_n = 2000\n")
    assert run("simulate", "--config", cfg, "--out", tmp_path) == 0
    stats = json.loads((tmp_path / "sim_stats.json").read_text())
    assert stats["velocity_analytic"] == [1.0]
    assert stats["diffusion_matrix_analytic"] == [[3.0]]
    assert abs(stats["velocity"][0] - 1.0) <= 4 * stats["velocity_stderr"][0]


def test_verify_subset_and_negative_control(tmp_path, capsys):
    small = write(tmp_path, "[model]\ntype = lattice\n[verify]\nrecord_fk_t = 10\nrecord_fk_n = 2000\n", "ok.ini")
    assert run("verify", "--config", small, "--criteria", "3,6", "--out", tmp_path / "ok") == 0
    report = json.loads((tmp_path / "ok" / "report.json").read_text())
    assert report["passed"] and [c["number"] for c in report["criteria"]] == [3, 6]
    assert {"F_spectral", "F_variational", "F_closed", "F_feynman_kac"} <= set(report["model_records"][0])
    cfg = write(tmp_path, small.read_text() + "[tolerances]\ndiffusion_rel = 0\n")
    assert run("verify", "--config", cfg, "--criteria", "3", "--out", tmp_path / "bad") == 4
    out = capsys.readouterr()
    assert "[FAIL] criterion  3" in out.out and "failed criteria: 3" in out.err


def test_config_errors_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, "[model]\ntype = lattice\nlamda = 2\n")
    assert run("analyze", "--config", cfg, "--out", tmp_path) == 2
    assert f"{cfg}:3:" in capsys.readouterr().err
    assert run("analyze", "--config", tmp_path / "missing.ini") == 2
    assert run("simulate", "--threads", "0", "--out", tmp_path) == 2


def test_numerical_failure_exit_3(tmp_path, monkeypatch):
    def boom(cfg, out):
        raise NumericalError("did not converge")

    monkeypatch.setitem(cli.COMMANDS, "ldp", boom)
    assert run("ldp", "--out", tmp_path) == 3


def test_flags_before_or_after_command(tmp_path):
    assert run("--out", tmp_path / "x", "analyze") == 0
    assert (tmp_path / "x" / "diffusion.json").exists()
    with pytest.raises(SystemExit):
        run("unknown")


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "runtumble", "show-config"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("[model]")
