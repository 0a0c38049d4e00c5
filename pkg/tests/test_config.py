"""test the config module."""

from dataclasses import replace
from glob import glob
from os.path import basename, dirname, join

import pytest

from helpers.config import SEED_ENV, load_config, parse_floats, read_values
from tamdlab.errors import ConfigError
from tamdlab.freenergy import free_energy_profile
from tamdlab.model import Separable, TiltedCoupling, ZBiased
from tamdlab.sde import check_stability

FXT_DIR = join(dirname(__file__), "fixtures")
CONFIGS = sorted(glob(join(dirname(__file__), "..", "configs", "*.ini")))


def write_config(tmp_path, text, name="test.ini"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestLoadConfig:
    """Test the load_config function."""

    def test_valid(self):
        """Test a valid configuration is resolved."""
        config = load_config(join(FXT_DIR, "fe_small.ini"), environ={})
        assert config.kind == "fe"
        assert config.output == "fe_small"
        assert isinstance(config.potential, Separable)
        assert (config.grid.n_q, config.grid.n_z) == (16, 16)
        assert config.params.beta == 1.0
        assert config.seed_source == "config"

    def test_defaults(self):
        """Test unset keys are filled with their defaults."""
        config = load_config(join(FXT_DIR, "fe_small.ini"), environ={})
        assert config.values["params"]["gamma"] == 1.0
        assert config.values["grid"]["scheme"] == "spectral"
        assert config.values["experiment"]["dynamics"] == "overdamped"
        assert config.replicas == 1
        assert config.delta_list == ()

    def test_unknown_key(self):
        """Test a misspelled key is rejected by name."""
        with pytest.raises(ConfigError, match="betta"):
            load_config(join(FXT_DIR, "typo.ini"), environ={})

    def test_unknown_section(self, tmp_path):
        """Test an unknown section is rejected."""
        path = write_config(tmp_path, "[solver]\ntol = 1\n")
        with pytest.raises(ConfigError, match="solver"):
            read_values(path)

    def test_bad_values(self, tmp_path):
        """Test invalid values name their key."""
        # test delta above 1
        path = write_config(tmp_path, "[params]\ndelta = 2\n")
        with pytest.raises(ConfigError, match="delta"):
            load_config(path, environ={})
        # test non-numeric value
        path = write_config(tmp_path, "[params]\nbeta = hot\n")
        with pytest.raises(ConfigError, match="beta"):
            load_config(path, environ={})
        # test odd spectral grid
        path = write_config(tmp_path, "[grid]\nn_q = 15\n")
        with pytest.raises(ConfigError, match="even"):
            load_config(path, environ={})
        # test unknown experiment kind
        path = write_config(tmp_path, "[experiment]\nkind = md\n")
        with pytest.raises(ConfigError, match="kind"):
            load_config(path, environ={})
        # test unknown observable
        path = write_config(tmp_path, "[experiment]\nobservables = cos_z, energy\n")
        with pytest.raises(ConfigError, match="energy"):
            load_config(path, environ={})
        # test bad delta_list entry
        path = write_config(tmp_path, "[params]\ndelta_list = 0.1, 0\n")
        with pytest.raises(ConfigError, match="delta_list"):
            load_config(path, environ={})

    def test_missing_file(self, tmp_path):
        """Test an unreadable file is a configuration error."""
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(str(tmp_path / "missing.ini"), environ={})

    def test_seed_override(self):
        """Test the environment seed overrides the file."""
        config = load_config(join(FXT_DIR, "fe_small.ini"), environ={SEED_ENV: "42"})
        assert config.params.seed == 42
        assert config.seed_source == SEED_ENV
        # test invalid seed
        with pytest.raises(ConfigError, match="seed"):
            load_config(join(FXT_DIR, "fe_small.ini"), environ={SEED_ENV: "-1"})

    def test_potentials(self, tmp_path):
        """Test potential sections build the matching kind."""
        path = write_config(tmp_path, "[potential]\nkind = tilted\na = 2\neps = 0.25\n")
        pot = load_config(path, environ={}).potential
        assert isinstance(pot, TiltedCoupling)
        assert (pot.a, pot.eps) == (2.0, 0.25)
        # test collective weights must match d
        path = write_config(
            tmp_path, "[domain]\nd = 2\n[potential]\nkind = collective\nxi = 1\n"
        )
        with pytest.raises(ConfigError, match="xi"):
            load_config(path, environ={})


def test_parse_floats():
    """Test parse_floats function."""
    assert parse_floats("params", "dt_list", "4e-3, 2e-3,1e-3") == (4e-3, 2e-3, 1e-3)
    assert parse_floats("params", "dt_list", "") == ()
    with pytest.raises(ConfigError, match="dt_list"):
        parse_floats("params", "dt_list", "1e-3, fast")


def sampled_runs(config):
    """(dynamics, potential, params) for every integration a config starts."""
    pot, params, exp = config.potential, config.params, config.experiment
    if config.kind == "sample":
        for dt in (params.dt,) + tuple(config.dt_list):
            yield exp["dynamics"], pot, replace(params, dt=dt)
    elif config.kind == "variance":
        yield "overdamped", pot, params
        yield "limiting", pot, params
    elif config.kind == "fe":
        yield "frozen", pot, params
    elif config.kind == "gain":
        for barrier in config.floats("barriers"):
            biased = ZBiased(pot, [(2, 0.5 * barrier, 0.0)])
            yield "plain", biased, replace(params, dt=params.dt / params.delta).plain()
            yield "overdamped", biased, params


class TestShippedConfigs:
    """Test the configs directory."""

    def test_found(self):
        """Test every experiment kind ships a config."""
        kinds = {load_config(path, environ={}).kind for path in CONFIGS}
        assert kinds == {"fe", "sample", "fpe", "sweep", "variance", "rate", "gain"}

    @pytest.mark.parametrize("path", CONFIGS, ids=basename)
    def test_stable(self, path):
        """Test every shipped sampling run passes the step size guard."""
        config = load_config(path, environ={})
        grid = config.grid
        for kind, pot, params in sampled_runs(config):
            profile = None
            if kind == "limiting":
                profile = free_energy_profile(
                    pot, params.beta, params.beta_bar, grid.n_q, grid.n_z
                )
            check_stability(kind, pot, params, profile)
