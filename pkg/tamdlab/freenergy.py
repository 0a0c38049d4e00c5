"""free energy, mean force and fluctuation fields by periodic quadrature"""

from dataclasses import dataclass

import numpy as np
from scipy import fft
from scipy.special import logsumexp

from helpers.csvio import write_csv
from tamdlab.errors import ConfigError, GuardError

DEFAULT_NODES = 64
MIN_NODES = 8
CONDITIONAL_MEAN_TOL = 1e-8


def periodic_nodes(n, length):
    """Uniform nodes on [0, length)."""
    return np.arange(n) * (length / n)


def q_mesh(domain, n_q):
    """Tensor grid of the q-torus as an (n_q**d, d) array of points."""
    nodes = periodic_nodes(n_q, domain.lq)
    axes = np.meshgrid(*([nodes] * domain.d), indexing="ij")
    return np.stack([ax.ravel() for ax in axes], axis=-1)


def _require_nodes(name, n):
    if n < MIN_NODES:
        raise ConfigError(f"{name} must be at least {MIN_NODES}, got {n}")


def conditional_weights(pot, beta, qs, z):
    """Normalized Gibbs weights exp(-beta U(., z)) over the q nodes, per z."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    energy = -beta * pot.evaluate(qs[None, :, :], z[:, None])
    log_norm = logsumexp(energy, axis=1, keepdims=True)
    return np.exp(energy - log_norm), log_norm[:, 0]


def conditional_mean(pot, beta, func, z, n_q=DEFAULT_NODES, block=4096):
    """Gibbs average of func(pot, q, z) over q at each z, in blocks of z points."""
    _require_nodes("n_q", n_q)
    z = np.asarray(z, dtype=float)
    flat = np.atleast_1d(z).ravel()
    qs = q_mesh(pot.domain, n_q)
    out = np.empty(flat.size)
    for start in range(0, flat.size, block):
        zb = flat[start:start + block]
        cond, _ = conditional_weights(pot, beta, qs, zb)
        values = func(pot, qs[None, :, :], zb[:, None])
        out[start:start + block] = (cond * values).sum(axis=1)
    return out.reshape(z.shape)


def log_partition(pot, beta, z, n_q=DEFAULT_NODES):
    """log Z(z) by the trapezoidal rule, shifted by the max exponent."""
    _require_nodes("n_q", n_q)
    qs = q_mesh(pot.domain, n_q)
    cell = (pot.domain.lq / n_q) ** pot.domain.d
    _, log_norm = conditional_weights(pot, beta, qs, z)
    out = log_norm + np.log(cell)
    return out if np.ndim(z) else float(out[0])


def partition(pot, beta, z, n_q=DEFAULT_NODES):
    """Z(z) = int exp(-beta U(q, z)) dq over the periodic q-domain."""
    log_z = log_partition(pot, beta, z, n_q)
    with np.errstate(over="ignore"):
        value = np.exp(log_z)
    if not np.all(np.isfinite(value)):
        raise GuardError(f"partition function overflows at beta = {beta}")
    return value


def trig_interpolate(values, period, x):
    """Evaluate the trigonometric interpolant of nodal values at points x."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x >= period):
        raise GuardError(f"interpolation point outside [0, {period})")
    n = len(values)
    coef = fft.rfft(values) / n
    kmax = len(coef)
    weights = np.full(kmax, 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
    theta = 2 * np.pi * np.multiply.outer(x, np.arange(kmax)) / period
    return (weights * (coef.real * np.cos(theta) - coef.imag * np.sin(theta))).sum(
        axis=-1
    )


def spectral_derivative(values, period, order=1):
    """Derivative of nodal periodic values through the FFT."""
    n = len(values)
    k = 2 * np.pi * fft.rfftfreq(n, d=period / n)
    mult = (1j * k) ** order
    if n % 2 == 0 and order % 2:
        mult[-1] = 0.0
    return fft.irfft(mult * fft.rfft(values), n=n)


@dataclass
class FreeEnergyProfile:
    """Tabulated A, A', A'', Z on the z-grid, with the normalization shift."""

    z_nodes: np.ndarray
    A: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    Zvals: np.ndarray
    shift: float
    beta: float
    beta_bar: float
    n_q: int
    lz: float

    @property
    def n_z(self):
        return len(self.z_nodes)

    def marginal(self):
        """Node probabilities of exp(-beta_bar A) dz; they sum to 1."""
        return np.exp(-self.beta_bar * self.A) * (self.lz / self.n_z)

    def mean_force(self, z):
        """A'(z) by trigonometric interpolation of the tabulated A1."""
        return trig_interpolate(self.A1, self.lz, z)

    def normalization(self):
        return float(self.marginal().sum())


def free_energy_profile(pot, beta, beta_bar, n_q=DEFAULT_NODES, n_z=DEFAULT_NODES):
    """A(z) = -log Z(z)/beta + shift, with A' and A'' from the Gibbs identities."""
    _require_nodes("n_q", n_q)
    _require_nodes("n_z", n_z)
    domain = pot.domain
    z_nodes = periodic_nodes(n_z, domain.lz)
    qs = q_mesh(domain, n_q)
    cond, log_norm = conditional_weights(pot, beta, qs, z_nodes)
    log_z = log_norm + domain.d * np.log(domain.lq / n_q)

    der = pot.derivatives(qs[None, :, :], z_nodes[:, None])
    A1 = (cond * der.dz).sum(axis=1)
    A2 = (cond * (der.dzz - beta * der.dz**2)).sum(axis=1) + beta * A1**2

    raw = -log_z / beta
    dz = domain.lz / n_z
    shift = float(logsumexp(-beta_bar * raw) + np.log(dz)) / beta_bar
    A = raw + shift
    with np.errstate(over="ignore"):
        Zvals = np.exp(log_z)
    if not np.all(np.isfinite(Zvals)):
        raise GuardError(f"partition function overflows at beta = {beta}")
    return FreeEnergyProfile(
        z_nodes, A, A1, A2, Zvals, shift, beta, beta_bar, n_q, domain.lz
    )


@dataclass
class FluctuationField:
    """W(q, z) and g1 = (beta/beta_bar - 1) W on the (z, q) tensor grid."""

    z_nodes: np.ndarray
    q_points: np.ndarray
    W: np.ndarray
    g1: np.ndarray
    conditional_mean: np.ndarray


def fluctuation_field(pot, profile, params):
    """Build W nodewise and check that its conditional mean vanishes."""
    if (params.beta, params.beta_bar) != (profile.beta, profile.beta_bar):
        raise ConfigError("profile temperatures differ from params")
    qs = q_mesh(pot.domain, profile.n_q)
    z = profile.z_nodes
    cond, _ = conditional_weights(pot, profile.beta, qs, z)
    der = pot.derivatives(qs[None, :, :], z[:, None])
    beta, beta_bar = profile.beta, profile.beta_bar
    A1 = profile.A1[:, None]
    A2 = profile.A2[:, None]
    W = -(der.dzz - A2) + (beta * der.dz + (beta_bar - beta) * A1) * (der.dz - A1)
    W = np.broadcast_to(W, cond.shape)
    cond_mean = (cond * W).sum(axis=1)
    scale = max(1.0, float(np.abs(W).max()))
    if np.abs(cond_mean).max() > CONDITIONAL_MEAN_TOL * scale:
        raise GuardError(
            "conditional mean of W is "
            f"{np.abs(cond_mean).max():.3e}; increase n_q or n_z"
        )
    g1 = (beta / beta_bar - 1.0) * W
    return FluctuationField(z, qs, W, g1, cond_mean)


def export_profile(profile, path):
    """Write the profile as CSV with columns z, A, A1, A2, Z."""
    rows = zip(profile.z_nodes, profile.A, profile.A1, profile.A2, profile.Zvals)
    return write_csv(path, ["z", "A", "A1", "A2", "Z"], rows)
