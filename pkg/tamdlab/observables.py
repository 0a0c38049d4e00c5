"""named observables evaluated on states, trajectories and grids"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from tamdlab.errors import ConfigError
from tamdlab.freenergy import conditional_mean

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Observable:
    """A deterministic function of (q, z) for a given potential.

    q has shape (..., d) and z shape (...); the result has shape (...)."""

    name: str
    func: Callable

    def __call__(self, pot, q, z):
        q = np.asarray(q, dtype=float)
        z = np.asarray(z, dtype=float)
        shape = np.broadcast_shapes(q.shape[:-1], z.shape)
        return np.broadcast_to(self.func(pot, q, z), shape)


def _cos_q(pot, q, z):
    return np.cos(TWO_PI * q / pot.domain.lq).mean(axis=-1)


def _cos_z(pot, q, z):
    return np.cos(TWO_PI * z / pot.domain.lz)


def _sin_z(pot, q, z):
    return np.sin(TWO_PI * z / pot.domain.lz)


def _dz_u(pot, q, z):
    return pot.gradient(q, z)[1]


def _z_moment(k):
    def moment(pot, q, z):
        return z**k

    return moment


def _mixed(c1, c2):
    def mixed(pot, q, z):
        return c1 * _cos_q(pot, q, z) + c2 * _cos_z(pot, q, z)

    return mixed


class ObservableRegistry:
    """Resolves observable names such as cos_z, z_moment:2 or mixed:0.5:1."""

    simple = {"cos_q": _cos_q, "cos_z": _cos_z, "sin_z": _sin_z, "dz_u": _dz_u}
    parametrized = {"z_moment": (_z_moment, (int,)), "mixed": (_mixed, (float, float))}

    @classmethod
    def names(cls):
        return sorted(cls.simple) + [f"{n}:..." for n in sorted(cls.parametrized)]

    @classmethod
    def resolve(cls, name):
        if isinstance(name, Observable):
            return name
        name = name.strip()
        if name in cls.simple:
            return Observable(name, cls.simple[name])
        head, _, tail = name.partition(":")
        if head not in cls.parametrized:
            raise ConfigError(
                f"unknown observable '{name}'; known: {', '.join(cls.names())}"
            )
        factory, types = cls.parametrized[head]
        args = tail.split(":") if tail else []
        if len(args) != len(types):
            raise ConfigError(f"observable '{name}' needs {len(types)} argument(s)")
        try:
            values = [t(a) for t, a in zip(types, args)]
        except ValueError as err:
            raise ConfigError(f"observable '{name}': {err}") from err
        return Observable(name, factory(*values))

    @classmethod
    def resolve_all(cls, names):
        return [cls.resolve(n) for n in names]


def projected(observable, beta, n_q):
    """Pi_z of an observable: its conditional Gibbs mean over q at every z.

    This is what the limiting dynamics, which never moves q, can sample."""
    observable = ObservableRegistry.resolve(observable)

    def func(pot, q, z):
        return conditional_mean(pot, beta, observable, z, n_q)

    return Observable(f"proj_{observable.name}", func)
