"""ergodic averages, batch-means variances, density checks and fits"""

from collections import namedtuple
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import fft, stats

from helpers.csvio import write_csv
from tamdlab.errors import ConfigError
from tamdlab.model import State
from tamdlab.sde import simulate

DEFAULT_BATCHES = 32
DEFAULT_BURN_IN = 0.1
MIN_BATCHES = 10
IAT_FLOOR = 0.5
MIN_DENSITY_SAMPLES = 10_000

DensityCheck = namedtuple("DensityCheck", ["ks_distance", "l2_w", "n_samples", "pvalue"])
Fit = namedtuple("Fit", ["value", "r2"])


@dataclass
class TrajectoryStats:
    """Per-observable ergodic averages with batch-means error bars."""

    mean: dict = field(default_factory=dict)
    se: dict = field(default_factory=dict)
    batch_variance: dict = field(default_factory=dict)
    iat: dict = field(default_factory=dict)
    n_effective: dict = field(default_factory=dict)
    n_samples: int = 0
    histogram_z: np.ndarray = None
    histogram_qz: np.ndarray = None

    @property
    def names(self):
        return list(self.mean)


def _burn(series, burn_in):
    if not 0 <= burn_in < 1:
        raise ConfigError(f"burn_in must lie in [0, 1), got {burn_in}")
    series = np.asarray(series, dtype=float)
    return series[int(np.floor(burn_in * len(series))):]


def _batch_means(chunks, n_batches):
    """Means of n_batches equal blocks of every series, pooled."""
    shortest = min(len(c) for c in chunks)
    if n_batches < MIN_BATCHES or n_batches > shortest // 10:
        raise ConfigError(
            f"n_batches = {n_batches} needs {MIN_BATCHES} <= n_batches <= "
            f"{shortest // 10} for {shortest} samples"
        )
    size = shortest // n_batches
    blocks = [c[: size * n_batches].reshape(n_batches, size) for c in chunks]
    return np.concatenate([b.mean(axis=1) for b in blocks]), size, np.concatenate(
        [b.ravel() for b in blocks]
    )


def batch_means(series, n_batches=DEFAULT_BATCHES, spacing=1.0):
    """(mean, sigma^2) where sigma^2 = lim T Var of the time average."""
    means, size, _ = _batch_means([np.asarray(series, dtype=float)], n_batches)
    return float(means.mean()), float(size * spacing * means.var(ddof=1))


def _summarize(stats_, name, chunks, n_batches, spacing):
    means, size, used = _batch_means(chunks, n_batches)
    n = used.size
    sigma2 = float(size * spacing * means.var(ddof=1))
    marginal = float(used.var())
    iat = sigma2 / (2 * spacing * marginal) if marginal > 0 else IAT_FLOOR
    iat = max(iat, IAT_FLOOR)
    stats_.mean[name] = float(means.mean())
    stats_.batch_variance[name] = sigma2
    stats_.se[name] = float(np.sqrt(sigma2 / (n * spacing)))
    stats_.iat[name] = iat
    stats_.n_effective[name] = n / (2 * iat)
    stats_.n_samples = n


def _histograms(stats_, trajectories, burn_in, domain, n_bins):
    z = np.concatenate([_burn(t.z, burn_in) for t in trajectories])
    q = np.concatenate([_burn(t.q[:, 0], burn_in) for t in trajectories])
    stats_.histogram_z, _ = np.histogram(z, bins=n_bins, range=(0, domain.lz))
    stats_.histogram_qz, _, _ = np.histogram2d(
        z, q, bins=n_bins, range=[[0, domain.lz], [0, domain.lq]]
    )


def pooled_stats(trajectories, burn_in=DEFAULT_BURN_IN, n_batches=DEFAULT_BATCHES,
                 domain=None, n_bins=64):
    """Batch means pooled over replicas, n_batches equal blocks per replica."""
    if not trajectories:
        raise ConfigError("no trajectories to analyse")
    spacing = trajectories[0].spacing
    if spacing <= 0:
        raise ConfigError("trajectory has fewer than two recorded states")
    out = TrajectoryStats()
    for name in trajectories[0].observable_series:
        chunks = [_burn(t.observable_series[name], burn_in) for t in trajectories]
        _summarize(out, name, chunks, n_batches, spacing)
    if domain is not None:
        _histograms(out, trajectories, burn_in, domain, n_bins)
    return out


def ergodic_stats(traj, burn_in=DEFAULT_BURN_IN, n_batches=DEFAULT_BATCHES,
                  domain=None, n_bins=64):
    return pooled_stats([traj], burn_in, n_batches, domain, n_bins)


def mean_force_estimate(pot, params, z_fixed, n_steps=None, burn_in=DEFAULT_BURN_IN,
                        n_batches=DEFAULT_BATCHES):
    """Time average of dz U along the q-dynamics at frozen z, with its SE."""
    if n_steps is not None:
        params = replace(params, n_steps=n_steps)
    start = State(np.full(pot.domain.d, 0.5 * pot.domain.lq), pot.domain.wrap_z(z_fixed))
    traj = simulate(start, "frozen", pot, params, ["dz_u"])
    result = ergodic_stats(traj, burn_in, n_batches)
    return result.mean["dz_u"], result.se["dz_u"]


def _z_marginal(target):
    target = np.asarray(target, dtype=float)
    masses = target.sum(axis=1) if target.ndim == 2 else target
    return masses / masses.sum()


def marginal_cdf(target, lz, refine=64):
    """CDF of the trigonometric interpolant of the z-marginal density.

    The integral is exact on a grid refine times finer than the nodes and
    linear in between."""
    masses = _z_marginal(target)
    n = len(masses)
    coef = fft.rfft(masses * n / lz) / n
    omega = 2 * np.pi * np.arange(1, len(coef)) / lz
    weights = np.full(len(omega), 2.0)
    if n % 2 == 0 and len(omega):
        weights[-1] = 1.0
    xs = np.linspace(0, lz, refine * n + 1)
    th = np.multiply.outer(xs, omega)
    terms = weights * (coef[1:].real * np.sin(th) - coef[1:].imag * (1 - np.cos(th)))
    values = coef[0].real * xs + (terms / omega).sum(axis=-1)
    values = np.clip(np.maximum.accumulate(values), 0.0, 1.0)
    values[-1] = 1.0

    def cdf(x):
        return np.interp(x, xs, values)

    cdf.nodes = xs
    cdf.values = values
    return cdf


def ks_critical(n, alpha=0.01):
    """Asymptotic Kolmogorov-Smirnov critical distance for n samples."""
    return float(stats.kstwobign.isf(alpha) / np.sqrt(n))


def sample_marginal(target, domain, n, rng):
    """Draw n values of z from the grid marginal by inverse CDF."""
    cdf = marginal_cdf(target, domain.lz)
    return np.interp(rng.uniform(size=n), cdf.values, cdf.nodes) % domain.lz


def _node_index(x, n, length):
    return np.floor(np.asarray(x) * n / length + 0.5).astype(int) % n


def density_check(trajectories, target, domain, burn_in=0.0):
    """KS distance of the z-marginal and weighted L2 distance of the (q, z) histogram."""
    if not trajectories:
        raise ConfigError("density check needs at least one trajectory")
    target = np.asarray(target, dtype=float)
    if target.ndim == 1:
        target = target[:, None]
    target = target / target.sum()
    z = np.concatenate([_burn(t.z, burn_in) for t in trajectories])
    if z.size < MIN_DENSITY_SAMPLES:
        raise ConfigError(f"density check needs {MIN_DENSITY_SAMPLES} samples, got {z.size}")
    ks = stats.kstest(z, marginal_cdf(target, domain.lz))

    n_z, n_q = target.shape
    counts = np.zeros(target.shape)
    jz = _node_index(z, n_z, domain.lz)
    if n_q == 1:
        np.add.at(counts, (jz, 0), 1)
    else:
        q = np.concatenate([_burn(t.q[:, 0], burn_in) for t in trajectories])
        np.add.at(counts, (jz, _node_index(q, n_q, domain.lq)), 1)
    empirical = counts / counts.sum()
    mask = target > 0
    l2 = float(np.sqrt(np.sum((empirical[mask] - target[mask]) ** 2 / target[mask])))
    return DensityCheck(float(ks.statistic), l2, int(z.size), float(ks.pvalue))


def z_score(estimate, se, reference, tol=1e-9):
    """|estimate - reference| in standard errors.

    A zero error bar only scores 0 when the estimate matches to tol; any other
    mismatch is infinite."""
    diff = abs(float(estimate) - float(reference))
    if se > 0:
        return diff / se
    return 0.0 if diff <= tol * max(1.0, abs(float(reference))) else np.inf


def _positive(name, values):
    values = np.asarray(values, dtype=float)
    if np.any(~np.isfinite(values)) or np.any(values <= 0):
        raise ConfigError(f"{name} must be positive and finite")
    return values


def slope_fit(xs, ys):
    """Least-squares slope of log y against log x, with r^2."""
    if len(xs) < 3 or len(xs) != len(ys):
        raise ConfigError("slope fit needs at least three (x, y) pairs")
    res = stats.linregress(np.log(_positive("xs", xs)), np.log(_positive("ys", ys)))
    return Fit(float(res.slope), float(res.rvalue**2))


def rate_fit(ts, ys):
    """Exponential decay rate fitted on log y against t, with r^2."""
    if len(ts) < 3 or len(ts) != len(ys):
        raise ConfigError("rate fit needs at least three (t, y) pairs")
    res = stats.linregress(np.asarray(ts, dtype=float), np.log(_positive("ys", ys)))
    return Fit(float(-res.slope), float(res.rvalue**2))


def export_stats(stats_, path):
    header = ["observable", "mean", "se", "batch_variance", "iat", "n_effective"]
    rows = (
        [name, stats_.mean[name], stats_.se[name], stats_.batch_variance[name],
         stats_.iat[name], stats_.n_effective[name]]
        for name in stats_.names
    )
    return write_csv(path, header, rows)
