"""test the experiment tasks end to end on small grids."""

import numpy as np
import pytest

from helpers.config import load_config
from helpers.csvio import read_csv
from helpers.task import run_experiment


def setup_experiment(tmp_path, text):
    path = tmp_path / "config.ini"
    path.write_text(text, encoding="utf-8")
    return load_config(str(path), environ={})


def run(tmp_path, text, threads=1):
    config = setup_experiment(tmp_path, text)
    results = run_experiment(config, output_dir=str(tmp_path), threads=threads, output=False)
    return config, results


def table(tmp_path, name):
    return read_csv(str(tmp_path / f"{name}.csv"))


TILTED = "[potential]\nkind = tilted\na = 1.0\neps = 0.5\n"


def test_fe(tmp_path):
    """Test the fe kind with thermodynamic integration."""
    _, results = run(
        tmp_path,
        "[potential]\nkind = separable\n[params]\nn_steps = 2000\n"
        "[grid]\nn_q = 16\nn_z = 16\n"
        "[experiment]\nkind = fe\noutput = fe\nn_batches = 10\n",
    )
    assert results["check_consistency"]["max_err_A1"] < 1e-9
    header, rows = table(tmp_path, "fe_ti")
    assert header == ["z", "estimate", "se", "A1"]
    assert [float(r[0]) for r in rows] == [0.1, 0.3, 0.7]
    # separable dz U is constant at frozen z
    for r in rows:
        assert float(r[1]) == pytest.approx(float(r[3]), abs=1e-9)


def test_fpe(tmp_path):
    """Test the fpe kind on a coupled potential."""
    _, results = run(
        tmp_path,
        TILTED + "[params]\nbeta_bar = 0.5\ndelta = 0.05\n"
        "[grid]\nn_q = 32\nn_z = 32\n[experiment]\nkind = fpe\noutput = fpe\n",
    )
    header, rows = table(tmp_path, "fpe_report")
    assert header == [
        "gap", "lambda_ref", "R2_marginal", "eigen_count", "zero_multiplicity",
        "h_err", "residual"]
    report = dict(zip(header, map(float, rows[0])))
    assert report["eigen_count"] == 1024
    assert report["zero_multiplicity"] == 1
    assert report["residual"] < 1e-7
    assert report["h_err"] < 0.05
    assert results["corrections"]["construction_gap"] < 1e-8
    # test every field file is written
    for name in ("fpe_h", "fpe_hfrak", "fpe_htilde"):
        assert len(table(tmp_path, name)[1]) == 1024
    assert table(tmp_path, "fpe_hbar")[0] == ["z", "value"]
    assert len(table(tmp_path, "fpe_spectrum")[1]) == 1024


def test_sweep(tmp_path):
    """Test the sweep kind fits first order variance and second order density errors."""
    _, results = run(
        tmp_path,
        TILTED + "[params]\nbeta_bar = 0.5\ndelta_list = 0.2, 0.1, 0.05, 0.025\n"
        "[grid]\nn_q = 32\nn_z = 32\n[experiment]\nkind = sweep\noutput = sweep\n",
        threads=2,
    )
    fits = results["fits"]
    assert 1.7 < fits["h_err_slope"] < 2.3
    assert fits["h_err_r2"] >= 0.98
    # test the variance and Poisson errors are at least first order
    assert fits["var_err_slope"] >= 0.9
    assert fits["var_err_r2"] >= 0.95
    assert fits["phi_err_slope"] >= 0.9
    header, rows = table(tmp_path, "sweep")
    assert header[:4] == ["delta", "gap", "lambda_ref", "h_err"]
    # test rows follow delta_list, trailer rows at the end
    assert [float(r[0]) for r in rows[:4]] == [0.2, 0.1, 0.05, 0.025]
    labels = [r[0] for r in rows[4:]]
    assert labels[:2] == ["slope:h_err", "r2:h_err"]
    assert all(len(r) == len(header) for r in rows)
    header, rows = table(tmp_path, "sweep_poisson")
    assert header == ["delta", "phi_err"]


def test_sweep_exact(tmp_path):
    """Test exact cases skip the fits instead of failing."""
    _, results = run(
        tmp_path,
        "[potential]\nkind = separable\n[params]\ndelta_list = 0.2, 0.1, 0.05\n"
        "[grid]\nn_q = 16\nn_z = 16\n[experiment]\nkind = sweep\noutput = exact\n",
    )
    assert results["fits"]["h_err_slope"] == "n/a"


def test_rate(tmp_path):
    """Test the fitted decay rate matches the spectral gap."""
    _, results = run(
        tmp_path,
        "[potential]\nkind = separable\nw =\n[params]\ndelta = 0.1\n"
        "[grid]\nn_q = 16\nn_z = 16\n"
        "[experiment]\nkind = rate\nphi = cos_z\nt_final = 0.1\ndt_pde = 1e-3\n"
        "output = rate\n",
    )
    fit = results["fit"]
    assert fit["gap"] == pytest.approx(4 * np.pi**2, rel=1e-6)
    assert fit["rel_err"] < 1e-2
    header, rows = table(tmp_path, "rate")
    assert header == ["t", "distance"]
    assert rows[-1][0] == "gap"
    assert rows[-3][0] == "rate:distance"


def test_sample(tmp_path):
    """Test the sample kind with a dt sweep."""
    config, results = run(
        tmp_path,
        "[potential]\nkind = separable\n"
        "[params]\ndelta = 0.5\ndt = 1e-3\nn_steps = 6000\nreplicas = 2\nseed = 3\n"
        "dt_list = 4e-3, 2e-3, 1e-3\n"
        "[grid]\nn_q = 16\nn_z = 16\n"
        "[experiment]\nkind = sample\nobservables = cos_z, sin_z\noutput = mc\n",
    )
    assert results["simulate"]["replicas"] == 2
    header, rows = table(tmp_path, "mc_grid")
    assert header == ["observable", "mc_mean", "se", "grid_mean", "z_score"]
    assert [r[0] for r in rows] == ["cos_z", "sin_z"]
    # separable z-marginal is exp(-cos(2 pi z))
    assert float(rows[0][3]) == pytest.approx(-0.44639, abs=1e-4)
    header, rows = table(tmp_path, "mc_density")
    assert int(rows[0][3]) == 2 * 5401
    header, rows = table(tmp_path, "mc_bias")
    assert [float(r[0]) for r in rows[:3]] == [4e-3, 2e-3, 1e-3]
    assert rows[3][0] == "slope:bias"
    assert len(table(tmp_path, "mc_traj1")[1]) == 6001
    assert config.replicas == 2


def test_sample_limiting(tmp_path):
    """Test limiting runs report q observables through their q average."""
    _, results = run(
        tmp_path,
        TILTED + "[params]\nbeta_bar = 0.5\ndt = 1e-3\nn_steps = 20000\nreplicas = 4\n"
        "seed = 13\n[grid]\nn_q = 24\nn_z = 24\n"
        "[experiment]\nkind = sample\ndynamics = limiting\nobservables = cos_q, cos_z\n"
        "output = lim\n",
    )
    header, rows = table(tmp_path, "lim_grid")
    assert [r[0] for r in rows] == ["proj_cos_q", "proj_cos_z"]
    # test the projected q observable moves with z and matches the grid
    for row in rows:
        assert float(row[2]) > 0
        assert float(row[4]) < 5
    assert np.isfinite(results["grid_comparison"]["max_z_score"])


def test_variance(tmp_path):
    """Test the variance kind reports both sources."""
    _, results = run(
        tmp_path,
        "[potential]\nkind = separable\n"
        "[params]\ndelta = 0.5\nn_steps = 5000\nreplicas = 2\n"
        "[grid]\nn_q = 16\nn_z = 16\n"
        "[experiment]\nkind = variance\nphi = cos_z\nn_batches = 10\noutput = var\n",
    )
    assert results["grid_variances"]["var_delta"] > 0
    header, rows = table(tmp_path, "var")
    assert header[0] == "source"
    assert [r[0] for r in rows] == ["tamd", "limiting"]
    # a z-only observable of a separable U has the same variance in both
    assert float(rows[0][5]) == pytest.approx(float(rows[1][5]), rel=1e-6)


def test_gain(tmp_path):
    """Test the gain kind writes one row per barrier."""
    _, results = run(
        tmp_path,
        "[potential]\nkind = separable\nw =\n"
        "[params]\nbeta = 2.0\nbeta_bar = 0.5\ndelta = 0.1\ndt = 1e-4\nreplicas = 8\n"
        "[experiment]\nkind = gain\nbarriers = 0.5, 1.5\nmax_steps = 200000\n"
        "output = gain\n",
    )
    header, rows = table(tmp_path, "gain")
    assert header == ["barrier", "plain_steps", "tamd_steps", "ratio"]
    assert [float(r[0]) for r in rows] == [0.5, 1.5]
    ratios = results["benchmark"]["ratios"]
    assert ratios[1] > ratios[0]
