import json
import subprocess
import sys

import numpy as np
import pytest

from lpdecon.cli import main
from lpdecon.io import write_data
from lpdecon.noise import laplace
from lpdecon.selector import build_candidates
from lpdecon.spectral import build_kernel, load_grid_function
from lpdecon.structure import default_family


@pytest.fixture
def data_1d(tmp_path):
    rng = np.random.default_rng(0)
    Y = rng.normal(size=(100, 1)) + laplace(1.0).sample(100, seed=1)
    path = tmp_path / "y.csv"
    write_data(path, Y)
    return path, Y


def run(args, capsys):
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_estimate_smoke(tmp_path, data_1d, capsys):
    path, Y = data_1d
    out = tmp_path / "o"
    code, stdout, err = run(["estimate", "--data", path, "--noise", "laplace:1", "--p", "2",
                             "--kappa-cal", "0.02", "--out", out], capsys)
    assert code == 0
    rep = json.loads((out / "selection.json").read_text())
    H = {c.h for c in build_candidates(2, 100, 1, [2.0], default_family(1))}
    assert tuple(rep["selected"]["h"]) in H
    assert (out / "summary.txt").read_text().startswith("observations: 100 x 1")
    f = load_grid_function(out / "estimate.lpdg")
    csv = np.loadtxt(out / "estimate.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(csv[:, 1], f.values)
    assert "setting p = 2.0 (command line)" in err
    assert "setting order = 2 (default)" in err


def test_estimate_is_deterministic(tmp_path, data_1d, capsys):
    path, _ = data_1d
    reports = []
    for name in ("a", "b"):
        run(["estimate", "--data", path, "--noise", "laplace:1", "--kappa-cal", "0.02",
             "--out", tmp_path / "same", "--threads", 2 if name == "b" else 1], capsys)
        rep = json.loads((tmp_path / "same" / "selection.json").read_text())
        rep.pop("timestamp")
        rep["settings"].pop("threads")
        reports.append(json.dumps(rep, sort_keys=True))
    assert reports[0] == reports[1]


def test_empty_and_short_data(tmp_path, capsys):
    empty = tmp_path / "e.csv"
    empty.write_text("")
    code, _, err = run(["estimate", "--data", empty, "--noise", "laplace:1"], capsys)
    assert code == 1 and "no observations" in err
    short = tmp_path / "s.csv"
    short.write_text("1\n2\n")
    code, _, err = run(["estimate", "--data", short, "--noise", "laplace:1"], capsys)
    assert code == 1 and "3" in err


def test_assumption_failure_exit_2(tmp_path, data_1d, capsys):
    path, _ = data_1d
    code, _, err = run(["estimate", "--data", path, "--noise", "none", "--p", "2",
                        "--out", tmp_path / "x"], capsys)
    assert code == 2 and "N1(i)" in err


def test_numerical_guard_exit_3(tmp_path, data_1d, capsys):
    path, _ = data_1d
    code, _, err = run(["estimate", "--data", path, "--noise", "laplace:1", "--grid-points", 4,
                        "--out", tmp_path / "x"], capsys)
    assert code == 3 and "NumericalGuardError" in err


def test_usage_errors(capsys):
    assert run(["estimate", "--bogus"], capsys)[0] == 1
    assert run(["estimate", "--p", "1"], capsys)[0] == 1
    assert run([], capsys)[0] == 1
    assert run(["rates", "--beta", "2"], capsys)[0] == 1


def test_kde_reduction_dump(tmp_path, capsys):
    rng = np.random.default_rng(3)
    Y = rng.normal(size=(60, 1))
    write_data(tmp_path / "y.csv", Y)
    code, _, _ = run(["estimate", "--data", tmp_path / "y.csv", "--noise", "none", "--p", "1.5",
                      "--kappa-cal", "0.1", "--out", tmp_path / "o"], capsys)
    assert code == 0
    rep = json.loads((tmp_path / "o" / "selection.json").read_text())
    h = rep["selected"]["h"][0]
    f = load_grid_function(tmp_path / "o" / "estimate.lpdg")
    x = f.grid.points()[0]
    K = build_kernel(order=2)
    kde = K((x[:, None] - Y[None, :, 0]) / h).mean(axis=1) / h
    assert np.max(np.abs(f.values - kde)) <= 1e-8


def test_config_overrides_flags(tmp_path, data_1d, capsys):
    path, _ = data_1d
    cfg = tmp_path / "run.toml"
    cfg.write_text(f'noise = "laplace:1"\nkappa_cal = 0.05\ndata = "{path}"\n')
    code, _, err = run(["estimate", "--config", cfg, "--kappa-cal", "9", "--noise", "laplace:3",
                        "--out", tmp_path / "o"], capsys)
    assert code == 0
    assert f"setting kappa_cal = 0.05 (config {cfg})" in err
    assert f"setting noise = 'laplace:1' (config {cfg})" in err
    rep = json.loads((tmp_path / "o" / "selection.json").read_text())
    assert rep["constants"]["kappa_cal"] == 0.05


def test_unknown_config_key(tmp_path, data_1d, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text("colour = 1\n")
    assert run(["estimate", "--config", cfg], capsys)[0] == 1


def test_rates(capsys):
    code, out, _ = run(["rates", "--beta", "2", "--lam", "1", "--p", "2"], capsys)
    assert code == 0 and "(2/7)" in out
    code, out, err = run(["rates", "--beta", "1,1", "--r", "1,1", "--lam", "2,2", "--p", "inf",
                          "--partition", "[[1,2]]"], capsys)
    assert code == 0 and "no uniformly consistent estimator" in out and "warning" in err
    code, out, _ = run(["rates", "--beta", "2,2", "--noise", "laplace:1", "--p", "2"], capsys)
    lines = out.splitlines()
    assert any("[[1,2]]" in s and "(1/7)" in s for s in lines)
    assert any("[[1],[2]]" in s and "(2/9)" in s for s in lines)


def test_validate_noise(tmp_path, capsys):
    code, out, _ = run(["validate-noise", "--noise", "laplace:1", "--d", 2, "--p", "2"], capsys)
    assert code == 0 and json.loads(out)["passed"]
    code, out, err = run(["validate-noise", "--noise", "none", "--d", 1, "--p", "2",
                          "--out", tmp_path / "v.json"], capsys)
    assert code == 2 and "N1(i)" in err
    assert json.loads((tmp_path / "v.json").read_text())["passed"] is False


def test_simulate(tmp_path, capsys):
    cfg = tmp_path / "sc.toml"
    cfg.write_text(
        'noise = "laplace:1"\np = 2\nn = [64, 128, 256, 512]\nreplications = 2\nseed = 3\n'
        'kappa_cal = 0.02\n\n[target]\nkind = "gaussian-product"\nd = 1\n'
    )
    code, out, _ = run(["simulate", "--config", cfg, "--out", tmp_path / "sim"], capsys)
    assert code == 0 and "fitted slope" in out
    res = json.loads((tmp_path / "sim" / "risk.json").read_text())
    assert len(res["reports"]) == 4 and "rate_fit" in res
    assert res["rate_fit"]["theoretical"] == pytest.approx(-2 / 9)
    assert len((tmp_path / "sim" / "risk.csv").read_text().splitlines()) == 5


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "lpdecon", "rates", "--beta", "2", "--lam", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "2/7" in proc.stdout
