"""test the main module."""

import os
from os.path import dirname, join

import numpy as np
import pytest
from scipy.special import i0

import main
from helpers.config import load_config
from helpers.csvio import read_csv
from main import ExperimentRunner, load_config_decorator
from tamdlab.errors import SolverError

FXT_DIR = join(dirname(__file__), "fixtures")
FE_CONFIG = join(FXT_DIR, "fe_small.ini")
FPE_CONFIG = join(FXT_DIR, "fpe_small.ini")


def test_load_config_decorator():
    """Test load_config_decorator method."""

    @load_config_decorator
    def test(self, config):
        return config

    # test paths are resolved
    assert test(ExperimentRunner, FE_CONFIG).kind == "fe"
    # test resolved configs pass through
    config = load_config(FE_CONFIG)
    assert test(ExperimentRunner, config) is config


class TestExperimentRunner:
    """Test the ExperimentRunner class."""

    def test_get_kinds(self):
        """Test get_kinds method."""
        assert "sweep" in ExperimentRunner.get_kinds()

    def test_describe(self, tmp_path, capsys):
        """Test describe method."""
        runner = ExperimentRunner(str(tmp_path))
        plan = runner.describe(FPE_CONFIG)
        assert capsys.readouterr().out == plan + "\n"
        assert "grid: 24 x 24 = 576 nodes (spectral)" in plan
        # test the resolved potential is echoed
        assert "potential: {'kind': 'tilted', 'a': 1.0, 'eps': 0.5, 'phase': 0.0}" in plan
        assert "leak = 1e-08" in plan
        assert "residual = 1e-09" in plan
        # test defaults are echoed
        assert "  gamma = 1.0" in plan
        assert "  n_batches = 32" in plan
        # test output schema
        assert f"output: {join(str(tmp_path), 'fpe_small_report.csv')}" in plan
        # test nothing is written
        assert os.listdir(tmp_path) == []

    def test_delta_list_warning(self, tmp_path):
        """Test describe warns when delta_list goes unused."""
        path = tmp_path / "fe.ini"
        path.write_text("[params]\ndelta_list = 0.1, 0.05\n[experiment]\nkind = fe\n")
        plan = ExperimentRunner().describe(str(path))
        assert "warning: kind=fe ignores delta and delta_list" in plan

    def test_run(self, tmp_path):
        """Test run method writes the free energy profile."""
        runner = ExperimentRunner(str(tmp_path / "out"), quiet=True)
        results = runner.run(FE_CONFIG)
        assert "compute_profile" in results
        header, rows = read_csv(str(tmp_path / "out" / "fe_small.csv"))
        assert header == ["z", "A", "A1", "A2", "Z"]
        z = np.array([float(r[0]) for r in rows])
        a = np.array([float(r[1]) for r in rows])
        assert np.allclose(a, np.cos(2 * np.pi * z) + np.log(i0(1.0)), atol=1e-10)


class TestMain:
    """Test the command line entry point."""

    def test_success(self, tmp_path):
        """Test a valid run exits with 0."""
        assert main.main([FE_CONFIG, "-o", str(tmp_path), "-q"]) == 0
        assert os.listdir(tmp_path) == ["fe_small.csv"]

    def test_dry_run(self, tmp_path, capsys):
        """Test --dry-run prints the plan and computes nothing."""
        assert main.main([FPE_CONFIG, "-o", str(tmp_path), "--dry-run"]) == 0
        assert "kind: fpe" in capsys.readouterr().out
        assert os.listdir(tmp_path) == []

    def test_config_error(self, tmp_path, capsys):
        """Test a misspelled key exits with 2 and writes nothing."""
        assert main.main([join(FXT_DIR, "typo.ini"), "-o", str(tmp_path)]) == 2
        assert "betta" in capsys.readouterr().err
        assert os.listdir(tmp_path) == []

    def test_threads(self, tmp_path, capsys):
        """Test a thread count below one is a configuration error."""
        assert main.main([FE_CONFIG, "-o", str(tmp_path), "-t", "0"]) == 2
        assert "--threads" in capsys.readouterr().err

    def test_guard_error(self, tmp_path, capsys):
        """Test a rejected step size exits with 3."""
        path = tmp_path / "sample.ini"
        path.write_text(
            "[params]\ndt = 0.1\nn_steps = 10\n[experiment]\nkind = sample\n"
        )
        assert main.main([str(path), "-o", str(tmp_path / "out"), "-q"]) == 3
        assert "dt/delta" in capsys.readouterr().err

    def test_solver_error(self, tmp_path, monkeypatch, capsys):
        """Test solver failures exit with 4 and name the stage."""

        def fail(*args, **kwargs):
            raise SolverError("stationary density: singular shifted system")

        monkeypatch.setattr(main.task, "run_experiment", fail)
        assert main.main([FE_CONFIG, "-o", str(tmp_path), "-q"]) == 4
        assert "stationary density" in capsys.readouterr().err

    def test_interrupt(self, tmp_path, monkeypatch):
        """Test a keyboard interrupt exits with 130."""

        def interrupt(*args, **kwargs):
            raise KeyboardInterrupt

        monkeypatch.setattr(main.task, "run_experiment", interrupt)
        assert main.main([FE_CONFIG, "-o", str(tmp_path), "-q"]) == 130

    def test_seed_override(self, tmp_path, monkeypatch, capsys):
        """Test the environment seed is reported as such."""
        monkeypatch.setenv("TAMD_LAB_SEED", "99")
        assert main.main([FE_CONFIG, "-n"]) == 0
        assert "seed = 99  (from TAMD_LAB_SEED)" in capsys.readouterr().out

    @pytest.mark.parametrize("threads", ["1", "2"])
    def test_reproducible(self, tmp_path, threads):
        """Test identical configs give byte-identical CSV files."""
        config = tmp_path / "sample.ini"
        config.write_text(
            "[potential]\nkind = separable\n"
            "[params]\ndelta = 0.5\ndt = 1e-3\nn_steps = 6000\nreplicas = 2\nseed = 5\n"
            "[grid]\nn_q = 16\nn_z = 16\n"
            "[experiment]\nkind = sample\nobservables = cos_z, cos_q\noutput = s\n"
        )
        contents = []
        for run in ("a", "b"):
            out = tmp_path / run
            assert main.main([str(config), "-o", str(out), "-q", "-t", threads]) == 0
            contents.append({name: (out / name).read_bytes()
                             for name in sorted(os.listdir(out))})
        assert contents[0] == contents[1]
        assert "s_stats.csv" in contents[0]
