import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from drlqr.cli import main
from drlqr.grid import GridSamples

GRID = "256"


@pytest.fixture(scope="module")
def system(tmp_path_factory):
    path = tmp_path_factory.mktemp("sys") / "sys.json"
    path.write_text(
        json.dumps({"A": [[0.9, 0.3], [0.0, 0.6]], "B_u": [[0.0], [1.0]], "B_w": [[1.0], [0.5]], "Q": [[2, 0], [0, 1]]})
    )
    return path


@pytest.fixture(scope="module")
def synth_dir(system, tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--system", str(system), "--radius", "1.5", "--grid", GRID, "--out", str(out)]) == 0
    return out


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


def test_synth_outputs(synth_dir):
    manifest = json.loads((synth_dir / "manifest.json").read_text())
    assert manifest["command"] == "synth"
    for name in manifest["outputs"]:
        assert (synth_dir / name).exists()
    for name in ("K.csv", "N.csv", "L.csv", "result.json", "convergence.csv", "spectrum.csv"):
        assert name in manifest["outputs"]
    result = json.loads((synth_dir / "result.json").read_text())
    assert result["gamma_star"] > result["gamma_hinf"]
    assert result["cost"] <= result["cost_h2"] and result["cost"] <= result["cost_hinf"] * 1.001
    header, conv = read_csv(synth_dir / "convergence.csv")
    assert header[:2] == ["iteration", "change"]
    assert conv.shape[0] >= 3


def test_synth_small_radius_recovers_h2(system, tmp_path):
    assert main(["synth", "--system", str(system), "--radius", "1e-4", "--grid", GRID, "--out", str(tmp_path)]) == 0
    K = GridSamples.from_csv(tmp_path / "K.csv").values
    K_h2 = GridSamples.from_csv(tmp_path / "K_h2.csv").values
    assert np.max(np.abs(K - K_h2)) <= 1e-2 * np.max(np.abs(K_h2))


def test_synth_is_reproducible(system, synth_dir, tmp_path):
    assert main(["synth", "--system", str(system), "--radius", "1.5", "--grid", GRID, "--out", str(tmp_path)]) == 0
    for name in ("K.csv", "N.csv", "spectrum.csv", "convergence.csv"):
        assert (tmp_path / name).read_bytes() == (synth_dir / name).read_bytes()


def test_missing_system_exit_code(tmp_path, capsys):
    code = main(["synth", "--system", str(tmp_path / "absent.json"), "--radius", "1", "--out", str(tmp_path)])
    assert code == 2
    assert "absent.json" in capsys.readouterr().err


def test_bad_radius_exit_code(system, tmp_path):
    assert main(["synth", "--system", str(system), "--radius", "-1", "--grid", GRID, "--out", str(tmp_path)]) == 2


def test_approx_and_eval(system, synth_dir, tmp_path, capsys):
    out = tmp_path / "ra"
    args = ["approx", "--nspec", str(synth_dir / "N.csv"), "--order", "2", "--system", str(system)]
    assert main(args + ["--radius", "1.5", "--out", str(out)]) == 0
    resp = json.loads((out / "response_error.json").read_text())
    assert resp["closed_loop_spectral_radius"] < 1
    assert resp["cost_rational"] <= 1.01 * resp["cost_target"]
    capsys.readouterr()
    assert main(["eval", "--system", str(system), "--controller", f"ss:{out / 'controller.json'}", "--radius", "1.5", "--grid", GRID]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["cost"] == pytest.approx(resp["cost_rational"], rel=1e-10)
    assert main(["eval", "--system", str(system), "--controller", f"dr:{synth_dir / 'K.csv'}", "--radius", "1.5", "--grid", GRID]) == 0
    dr = json.loads(capsys.readouterr().out)
    result = json.loads((synth_dir / "result.json").read_text())
    assert dr["cost"] == pytest.approx(result["cost"], rel=1e-10)


def test_approx_constant_spectrum_is_exact(tmp_path):
    GridSamples(np.full((64, 1, 1), 3.0 + 0j), "N").to_csv(tmp_path / "N.csv")
    assert main(["approx", "--nspec", str(tmp_path / "N.csv"), "--order", "0", "--out", str(tmp_path / "o")]) == 0
    fit = json.loads((tmp_path / "o" / "fit.json").read_text())
    assert fit["eps_star"] <= 1e-9


def test_eval_zero_radius_is_nominal(system, capsys):
    assert main(["eval", "--system", str(system), "--controller", "h2", "--radius", "0", "--grid", GRID]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["gamma_star"] is None
    assert out["cost"] > 0


def test_eval_unknown_controller(system):
    assert main(["eval", "--system", str(system), "--controller", "pid", "--radius", "1", "--grid", GRID]) == 2


def test_sweep(system, tmp_path):
    args = ["sweep", "--system", str(system), "--radii", "0.1,1,5", "--orders", "2", "--grid", GRID]
    assert main(args + ["--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "sweep.csv")
    col = {h: i for i, h in enumerate(header)}
    dr = rows[:, col["cost_dr"]]
    assert np.all(np.diff(dr) >= 0)
    assert np.all(dr <= rows[:, col["cost_h2"]] * (1 + 1e-9))
    assert np.all(dr <= rows[:, col["cost_hinf"]] * 1.001)
    assert (tmp_path / "sweep.plot.json").exists() and (tmp_path / "sweep.png").exists()


def test_sim_white_vs_worst_and_seed(system, synth_dir, tmp_path):
    common = ["sim", "--system", str(system), "--controller", "h2", "--grid", GRID, "--horizon", "400", "--trials", "20"]
    assert main(common + ["--seed", "7", "--out", str(tmp_path / "a")]) == 0
    assert main(common + ["--seed", "7", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "simrun.csv").read_bytes() == (tmp_path / "b" / "simrun.csv").read_bytes()
    assert main(common + ["--kind", "worst", "--radius", "1.5", "--seed", "7", "--out", str(tmp_path / "w")]) == 0
    white = json.loads((tmp_path / "a" / "sim.json").read_text())
    worst = json.loads((tmp_path / "w" / "sim.json").read_text())
    assert worst["terminal_mean"] >= white["terminal_mean"]
    assert worst["stationary_prediction"] > white["stationary_prediction"]


def test_sim_worst_needs_spectrum(system, tmp_path):
    args = ["sim", "--system", str(system), "--controller", "h2", "--kind", "worst", "--grid", GRID]
    assert main(args + ["--out", str(tmp_path)]) == 2


def test_module_entry_point(system, tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "drlqr", "eval", "--system", str(system), "--controller", "hinf", "--radius", "1", "--grid", GRID],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["controller"] == "hinf"
