"""periodic domains, trigonometric potentials and the TAMD parameter set"""

from collections import namedtuple
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from helpers.task import RangeValidator
from tamdlab.errors import ConfigError

TWO_PI = 2.0 * np.pi

Derivatives = namedtuple("Derivatives", ["grad_q", "dz", "dzz", "grad_q_dz"])

_POSITIVE = RangeValidator(minval=0, minexc=True)


def _check(name, value, validator):
    """Run a validator and re-raise its message against the field name."""
    try:
        return validator(value)
    except ValueError as err:
        raise ConfigError(f"{name}: {err}") from err


def wrap_periodic(x, length):
    """Reduce x into [0, length); np.mod rounds tiny negatives up to length."""
    x = np.mod(x, length)
    return np.where(x >= length, 0.0, x) if np.ndim(x) else (0.0 if x >= length else x)


@dataclass(frozen=True)
class Domain:
    """Periodic position domain (Lq T)^d times the z-circle Lz T."""

    d: int = 1
    lq: float = 1.0
    lz: float = 1.0

    def __post_init__(self):
        _check("d", self.d, RangeValidator(minval=1))
        _check("lq", self.lq, _POSITIVE)
        _check("lz", self.lz, _POSITIVE)

    def wrap_q(self, q):
        return wrap_periodic(q, self.lq)

    def wrap_z(self, z):
        return wrap_periodic(z, self.lz)


@dataclass(frozen=True)
class TrigSeries:
    """Periodic trigonometric polynomial sum_k a cos(2 pi k x/L) + b sin(...)

    terms is a tuple of (frequency, cosine amplitude, sine amplitude)."""

    terms: tuple = ()
    period: float = 1.0

    def __post_init__(self):
        for k, _, _ in self.terms:
            if int(k) != k or k < 0:
                raise ConfigError(f"frequency {k} must be a non-negative integer")

    def _phases(self, x):
        x = np.asarray(x, dtype=float)
        for k, a, b in self.terms:
            omega = TWO_PI * k / self.period
            yield omega, a, b, omega * x

    def value(self, x):
        out = np.zeros(np.shape(x))
        for _, a, b, th in self._phases(x):
            out = out + a * np.cos(th) + b * np.sin(th)
        return out

    def d1(self, x):
        out = np.zeros(np.shape(x))
        for omega, a, b, th in self._phases(x):
            out = out + omega * (b * np.cos(th) - a * np.sin(th))
        return out

    def d2(self, x):
        out = np.zeros(np.shape(x))
        for omega, a, b, th in self._phases(x):
            out = out - omega**2 * (a * np.cos(th) + b * np.sin(th))
        return out

    def curvature_bound(self):
        return sum(
            (abs(a) + abs(b)) * (TWO_PI * k / self.period) ** 2
            for k, a, b in self.terms
        )

    @property
    def max_frequency(self):
        return max((int(k) for k, _, _ in self.terms), default=0)


def parse_terms(text):
    """Parse 'k:a:b, k:a:b' into a tuple of (k, a, b) terms."""
    terms = []
    for chunk in str(text).split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(":")
        if len(parts) == 2:
            parts.append("0")
        if len(parts) != 3:
            raise ConfigError(f"term '{chunk}' must read frequency:cos[:sin]")
        try:
            k, a, b = int(parts[0]), float(parts[1]), float(parts[2])
        except ValueError as err:
            raise ConfigError(f"term '{chunk}': {err}") from err
        terms.append((k, a, b))
    return tuple(terms)


class Potential:
    """Smooth periodic potential U(q, z) with analytic derivatives.

    q has shape (..., d) and z shape (...); every method broadcasts."""

    kind = "base"

    def __init__(self, domain=None) -> None:
        self.domain = domain or Domain()

    def evaluate(self, q, z):
        raise NotImplementedError

    def derivatives(self, q, z):
        raise NotImplementedError

    def gradient(self, q, z):
        """Forces only: (grad_q U, dz U)."""
        der = self.derivatives(q, z)
        return der.grad_q, der.dz

    def curvature_bound(self):
        raise NotImplementedError

    def max_frequency(self):
        raise NotImplementedError

    def describe(self):
        return {"kind": self.kind}


class Separable(Potential):
    """U(q, z) = sum_j V(q_j) + W(z)."""

    kind = "separable"

    def __init__(self, v_terms=(), w_terms=(), domain=None) -> None:
        super().__init__(domain)
        self.v = TrigSeries(tuple(v_terms), self.domain.lq)
        self.w = TrigSeries(tuple(w_terms), self.domain.lz)

    def evaluate(self, q, z):
        return self.v.value(q).sum(axis=-1) + self.w.value(z)

    def derivatives(self, q, z):
        q = np.asarray(q, dtype=float)
        return Derivatives(
            self.v.d1(q),
            self.w.d1(z),
            self.w.d2(z),
            np.zeros(np.broadcast_shapes(q.shape, np.shape(z) + (q.shape[-1],))),
        )

    def gradient(self, q, z):
        return self.v.d1(q), self.w.d1(z)

    def curvature_bound(self):
        return self.v.curvature_bound(), self.w.curvature_bound()

    def max_frequency(self):
        return max(self.v.max_frequency, self.w.max_frequency)

    def describe(self):
        return {"kind": self.kind, "v": self.v.terms, "w": self.w.terms}


class TiltedCoupling(Potential):
    """U = a sum_j cos(2 pi q_j/Lq) + eps sum_j cos(2 pi (q_j/Lq - z/Lz) + phase)."""

    kind = "tilted"

    def __init__(self, a=1.0, eps=0.5, phase=0.0, domain=None) -> None:
        super().__init__(domain)
        self.a = float(a)
        self.eps = float(eps)
        self.phase = float(phase)

    def _angles(self, q, z):
        q = np.asarray(q, dtype=float)
        z = np.asarray(z, dtype=float)
        th_q = TWO_PI * q / self.domain.lq
        th_c = th_q - TWO_PI * z[..., None] / self.domain.lz + self.phase
        return th_q, th_c

    def evaluate(self, q, z):
        th_q, th_c = self._angles(q, z)
        return (self.a * np.cos(th_q) + self.eps * np.cos(th_c)).sum(axis=-1)

    def derivatives(self, q, z):
        th_q, th_c = self._angles(q, z)
        kq = TWO_PI / self.domain.lq
        kz = TWO_PI / self.domain.lz
        grad_q = -kq * (self.a * np.sin(th_q) + self.eps * np.sin(th_c))
        dz = (kz * self.eps * np.sin(th_c)).sum(axis=-1)
        dzz = (-(kz**2) * self.eps * np.cos(th_c)).sum(axis=-1)
        grad_q_dz = kq * kz * self.eps * np.cos(th_c)
        return Derivatives(grad_q, dz, dzz, grad_q_dz)

    def gradient(self, q, z):
        der = self.derivatives(q, z)
        return der.grad_q, der.dz

    def curvature_bound(self):
        kq = TWO_PI / self.domain.lq
        kz = TWO_PI / self.domain.lz
        d = self.domain.d
        return (
            kq**2 * (abs(self.a) + abs(self.eps)),
            d * kz**2 * abs(self.eps),
        )

    def max_frequency(self):
        return 1

    def describe(self):
        return {"kind": self.kind, "a": self.a, "eps": self.eps, "phase": self.phase}


class CollectiveVariable(Potential):
    """U = V(q) + k Lz^2/(2 pi^2) (1 - cos(2 pi (xi(q) - z)/Lz)).

    xi(q) = (Lz/Lq) sum_j c_j q_j with integer weights c_j; the coupling is
    the periodic form of k |xi(q) - z|^2 and agrees with it to second order."""

    kind = "collective"

    def __init__(self, v_terms=(), k=1.0, xi=(1,), domain=None) -> None:
        super().__init__(domain)
        self.v = TrigSeries(tuple(v_terms), self.domain.lq)
        self.k = float(k)
        self.xi = tuple(int(c) for c in xi)
        if len(self.xi) != self.domain.d:
            raise ConfigError(
                f"xi: expected {self.domain.d} weights, got {len(self.xi)}"
            )

    def collective(self, q):
        q = np.asarray(q, dtype=float)
        return (self.domain.lz / self.domain.lq) * (q @ np.asarray(self.xi, float))

    def _theta(self, q, z):
        return TWO_PI * (self.collective(q) - np.asarray(z, float)) / self.domain.lz

    def evaluate(self, q, z):
        lz = self.domain.lz
        coupling = self.k * lz**2 / (2 * np.pi**2) * (1 - np.cos(self._theta(q, z)))
        return self.v.value(q).sum(axis=-1) + coupling

    def derivatives(self, q, z):
        lq, lz = self.domain.lq, self.domain.lz
        th = self._theta(q, z)[..., None]
        c = np.asarray(self.xi, dtype=float)
        grad_q = self.v.d1(q) + self.k * lz**2 * c * np.sin(th) / (np.pi * lq)
        dz = -self.k * lz * np.sin(th[..., 0]) / np.pi
        dzz = 2 * self.k * np.cos(th[..., 0])
        grad_q_dz = -2 * self.k * lz * c * np.cos(th) / lq
        return Derivatives(grad_q, dz, dzz, grad_q_dz)

    def curvature_bound(self):
        lq = self.domain.lq
        lz = self.domain.lz
        c2 = sum(c * c for c in self.xi)
        return (
            self.v.curvature_bound() + 2 * abs(self.k) * c2 * (lz / lq) ** 2,
            2 * abs(self.k),
        )

    def max_frequency(self):
        return max(self.v.max_frequency, max(abs(c) for c in self.xi), 1)

    def describe(self):
        return {"kind": self.kind, "v": self.v.terms, "k": self.k, "xi": self.xi}


class ZBiased(Potential):
    """A base potential plus a trigonometric term W(z) acting on z alone."""

    kind = "biased"

    def __init__(self, base, w_terms=()) -> None:
        super().__init__(base.domain)
        self.base = base
        self.w = TrigSeries(tuple(w_terms), self.domain.lz)

    def evaluate(self, q, z):
        return self.base.evaluate(q, z) + self.w.value(z)

    def derivatives(self, q, z):
        der = self.base.derivatives(q, z)
        return der._replace(dz=der.dz + self.w.d1(z), dzz=der.dzz + self.w.d2(z))

    def gradient(self, q, z):
        grad_q, dz = self.base.gradient(q, z)
        return grad_q, dz + self.w.d1(z)

    def curvature_bound(self):
        kappa_q, kappa_z = self.base.curvature_bound()
        return kappa_q, kappa_z + self.w.curvature_bound()

    def max_frequency(self):
        return max(self.base.max_frequency(), self.w.max_frequency)

    def describe(self):
        return {"kind": self.kind, "base": self.base.describe(), "w": self.w.terms}


POTENTIALS = {
    Separable.kind: Separable,
    TiltedCoupling.kind: TiltedCoupling,
    CollectiveVariable.kind: CollectiveVariable,
}


@dataclass(frozen=True)
class TamdParams:
    """Physical and artificial temperatures, acceleration and integrator knobs."""

    beta: float = 1.0
    beta_bar: float = 1.0
    delta: float = 1.0
    gamma: float = 1.0
    mass: float = 1.0
    dt: float = 1e-3
    n_steps: int = 10000
    stride: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in ("beta", "beta_bar", "gamma", "mass", "dt"):
            _check(name, getattr(self, name), _POSITIVE)
        _check("delta", self.delta, RangeValidator(minval=0, minexc=True, maxval=1))
        _check("n_steps", self.n_steps, RangeValidator(minval=0))
        _check("stride", self.stride, RangeValidator(minval=1))
        _check("seed", self.seed, RangeValidator(minval=0, maxval=2**64, maxexc=True))

    def with_delta(self, delta):
        return replace(self, delta=delta)

    def plain(self):
        """Plain Langevin at the physical temperature: delta = 1, beta_bar = beta."""
        return replace(self, delta=1.0, beta_bar=self.beta)


@dataclass
class State:
    """Positions q, optional momenta p, collective variable z."""

    q: np.ndarray
    z: float
    p: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        self.q = np.atleast_1d(np.asarray(self.q, dtype=float))
        self.z = float(self.z)
        if self.p is not None:
            self.p = np.atleast_1d(np.asarray(self.p, dtype=float))

    @property
    def inertial(self):
        return self.p is not None


def evaluate(pot, q, z):
    """U(q, z)."""
    return pot.evaluate(q, z)


def derivatives(pot, q, z):
    """(grad_q U, dz U, dzz U, grad_q dz U), analytically."""
    return pot.derivatives(q, z)


def wrap(domain, state):
    """Map positions into the fundamental domain; momenta untouched."""
    p = None if state.p is None else state.p.copy()
    return State(domain.wrap_q(state.q), domain.wrap_z(state.z), p)
