"""reads and validates experiment configuration files"""

import configparser
import os
from dataclasses import dataclass, field

from helpers.task import ChoiceValidator, RangeValidator, get_experiments
from tamdlab.errors import ConfigError
from tamdlab.fpgrid import SCHEMES, GridSpec
from tamdlab.model import POTENTIALS, Domain, TamdParams, parse_terms
from tamdlab.observables import ObservableRegistry

SEED_ENV = "TAMD_LAB_SEED"
DEFAULT_DELTAS = "0.2, 0.1, 0.05, 0.025"

_POSITIVE = RangeValidator(minval=0, minexc=True)
_AT_LEAST_ONE = RangeValidator(minval=1)

# section -> key -> (type, default, validator)
SCHEMA = {
    "domain": {
        "d": (int, 1, _AT_LEAST_ONE),
        "lq": (float, 1.0, _POSITIVE),
        "lz": (float, 1.0, _POSITIVE),
    },
    "potential": {
        "kind": (str, "separable", ChoiceValidator(*POTENTIALS)),
        "v": (str, "1:1", None),
        "w": (str, "1:1", None),
        "a": (float, 1.0, None),
        "eps": (float, 0.5, None),
        "phase": (float, 0.0, None),
        "k": (float, 1.0, _POSITIVE),
        "xi": (str, "1", None),
    },
    "params": {
        "beta": (float, 1.0, _POSITIVE),
        "beta_bar": (float, 1.0, _POSITIVE),
        "delta": (float, 1.0, RangeValidator(minval=0, minexc=True, maxval=1)),
        "delta_list": (str, "", None),
        "dt_list": (str, "", None),
        "gamma": (float, 1.0, _POSITIVE),
        "mass": (float, 1.0, _POSITIVE),
        "dt": (float, 1e-3, _POSITIVE),
        "n_steps": (int, 10000, RangeValidator(minval=0)),
        "stride": (int, 1, _AT_LEAST_ONE),
        "seed": (int, 0, RangeValidator(minval=0, maxval=2**64, maxexc=True)),
        "replicas": (int, 1, _AT_LEAST_ONE),
    },
    "grid": {
        "n_q": (int, 64, RangeValidator(minval=8)),
        "n_z": (int, 64, RangeValidator(minval=8)),
        "scheme": (str, "spectral", ChoiceValidator(*SCHEMES)),
    },
    "experiment": {
        "kind": (str, "fe", None),
        "observables": (str, "cos_z", None),
        "phi": (str, "mixed:0.5:1", None),
        "output": (str, "tamd", None),
        "dynamics": (
            str, "overdamped",
            ChoiceValidator("overdamped", "inertial", "limiting", "plain"),
        ),
        "burn_in": (float, 0.1, RangeValidator(minval=0, maxval=1, maxexc=True)),
        "n_batches": (int, 32, RangeValidator(minval=10)),
        "t_final": (float, 1.0, _POSITIVE),
        "dt_pde": (float, 1e-3, _POSITIVE),
        "barriers": (str, "2, 3, 4", None),
        "max_steps": (int, 1_000_000, _AT_LEAST_ONE),
        "mean_force_points": (str, "0.1, 0.3, 0.7", None),
    },
}


def _convert(section, key, raw):
    kind, _, validator = SCHEMA[section][key]
    try:
        value = kind(raw.strip()) if kind is not str else raw.strip()
        if validator is not None:
            validator(value)
    except ValueError as err:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {err}") from err
    return value


def parse_floats(section, key, text, validator=None):
    values = []
    for chunk in str(text).split(","):
        if not chunk.strip():
            continue
        try:
            value = float(chunk)
            if validator is not None:
                validator(value)
        except ValueError as err:
            raise ConfigError(f"[{section}] {key}: {chunk.strip()!r}: {err}") from err
        values.append(value)
    return tuple(values)


def read_values(path):
    """Parse path into section -> key -> typed value, defaults filled in."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, "r", encoding="utf-8") as f:
            parser.read_file(f)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except configparser.Error as err:
        raise ConfigError(f"malformed config {path}: {err}") from err

    values = {s: {k: spec[1] for k, spec in keys.items()} for s, keys in SCHEMA.items()}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in [{section}]")
            values[section][key] = _convert(section, key, raw)
    return values


@dataclass
class ExperimentConfig:
    """Resolved configuration: domain objects plus the experiment settings."""

    domain: Domain
    potential: object
    params: TamdParams
    grid: GridSpec
    experiment: dict
    replicas: int = 1
    delta_list: tuple = ()
    dt_list: tuple = ()
    values: dict = field(default_factory=dict)
    path: str = ""
    seed_source: str = "config"

    @property
    def kind(self):
        return self.experiment["kind"]

    @property
    def output(self):
        return self.experiment["output"]

    @property
    def observables(self):
        return [n.strip() for n in self.experiment["observables"].split(",") if n.strip()]

    def floats(self, key):
        return parse_floats("experiment", key, self.experiment[key])


def _build_potential(domain, pot):
    kind = pot["kind"]
    if kind == "separable":
        return POTENTIALS[kind](parse_terms(pot["v"]), parse_terms(pot["w"]), domain)
    if kind == "tilted":
        return POTENTIALS[kind](pot["a"], pot["eps"], pot["phase"], domain)
    try:
        xi = [int(c) for c in pot["xi"].split(",") if c.strip()]
    except ValueError as err:
        raise ConfigError(f"[potential] xi: {err}") from err
    return POTENTIALS[kind](parse_terms(pot["v"]), pot["k"], xi, domain)


def load_config(path, environ=None):
    """Read, validate and resolve a configuration file."""
    environ = os.environ if environ is None else environ
    values = read_values(path)
    exp = values["experiment"]
    kinds = get_experiments()
    if exp["kind"] not in kinds:
        raise ConfigError(f"[experiment] kind = {exp['kind']!r}: must be one of {kinds}")

    seed_source = "config"
    if environ.get(SEED_ENV, "").strip():
        values["params"]["seed"] = _convert("params", "seed", environ[SEED_ENV])
        seed_source = SEED_ENV

    domain = Domain(**values["domain"])
    potential = _build_potential(domain, values["potential"])
    par = values["params"]
    params = TamdParams(
        **{k: par[k] for k in ("beta", "beta_bar", "delta", "gamma", "mass", "dt",
                               "n_steps", "stride", "seed")}
    )
    grid = GridSpec(**values["grid"])
    delta_list = parse_floats(
        "params", "delta_list", par["delta_list"],
        RangeValidator(minval=0, minexc=True, maxval=1),
    )
    dt_list = parse_floats("params", "dt_list", par["dt_list"], _POSITIVE)
    config = ExperimentConfig(
        domain, potential, params, grid, exp, par["replicas"], delta_list, dt_list,
        values, str(path), seed_source,
    )
    ObservableRegistry.resolve_all(config.observables)
    ObservableRegistry.resolve(exp["phi"])
    for key in ("barriers", "mean_force_points"):
        config.floats(key)
    return config
