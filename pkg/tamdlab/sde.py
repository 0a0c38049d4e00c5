"""integrators for the TAMD, plain, frozen and limiting dynamics"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from helpers.csvio import write_csv
from tamdlab.errors import ConfigError, EnsembleError, GuardError, LabError, SolverError
from tamdlab.model import Domain, Separable, State
from tamdlab.observables import ObservableRegistry

DYNAMICS = ("overdamped", "inertial", "limiting", "plain", "frozen")
STABILITY_FACTOR = 0.5
CHUNK = 1024


@dataclass(frozen=True)
class RngStream:
    """Counter-based Gaussian stream keyed by (seed, stream_id)."""

    seed: int
    stream_id: int = 0

    def generator(self):
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(seq))


@dataclass
class Trajectory:
    """States recorded every stride steps, with observable series."""

    times: np.ndarray
    q: np.ndarray
    z: np.ndarray
    p: Optional[np.ndarray] = None
    observable_series: dict = field(default_factory=dict)
    kind: str = "overdamped"
    stream_id: int = 0

    def __len__(self):
        return len(self.times)

    @property
    def spacing(self):
        return float(self.times[1] - self.times[0]) if len(self) > 1 else 0.0

    def states(self):
        p = self.p if self.p is not None else [None] * len(self)
        return [State(qi, zi, pi) for qi, zi, pi in zip(self.q, self.z, p)]


def noise_width(kind, d):
    """Gaussians drawn per step: q-block, then p-block, then z."""
    return {"overdamped": d + 1, "plain": d + 1, "inertial": d + 2,
            "limiting": 1, "frozen": d}[kind]


def check_stability(kind, pot, params, profile=None):
    """Reject steps beyond half the reciprocal curvature of the stiff line."""
    kappa_q, kappa_z = pot.curvature_bound()
    h = params.dt / params.delta
    if kind in ("overdamped", "plain", "frozen"):
        ratio = params.dt if kind == "frozen" else h
        label = "dt" if kind == "frozen" else "dt/delta"
        if kappa_q > 0 and ratio > STABILITY_FACTOR / kappa_q:
            raise GuardError(
                f"{label} = {ratio:.4g} exceeds {STABILITY_FACTOR}/kappa_q = "
                f"{STABILITY_FACTOR / kappa_q:.4g}"
            )
    if kind == "inertial":
        omega = np.sqrt(kappa_q / params.mass)
        if omega > 0 and h > STABILITY_FACTOR / omega:
            raise GuardError(
                f"dt/delta = {h:.4g} exceeds {STABILITY_FACTOR}*sqrt(mass/kappa_q) = "
                f"{STABILITY_FACTOR / omega:.4g}"
            )
    if kind == "limiting":
        if profile is None:
            raise ConfigError("limiting dynamics needs a free-energy profile")
        kappa_z = float(np.abs(profile.A2).max())
    if kind != "frozen" and kappa_z > 0 and params.dt > STABILITY_FACTOR / kappa_z:
        raise GuardError(
            f"dt = {params.dt:.4g} exceeds {STABILITY_FACTOR}/kappa_z = "
            f"{STABILITY_FACTOR / kappa_z:.4g}"
        )


def _overdamped(pot, params, q, z, p, xi, profile):
    d = q.shape[-1]
    grad, dz = pot.gradient(q, z)
    h = params.dt / params.delta
    q = q - h * grad + np.sqrt(2 * h / params.beta) * xi[..., :d]
    z = z - params.dt * dz + np.sqrt(2 * params.dt / params.beta_bar) * xi[..., d]
    return pot.domain.wrap_q(q), pot.domain.wrap_z(z), p


def _inertial(pot, params, q, z, p, xi, profile):
    d = q.shape[-1]
    half = 0.5 * params.dt
    h = params.dt / params.delta
    mass = params.mass
    z_noise = np.sqrt(2 * half / params.beta_bar)

    z = z - half * pot.gradient(q, z)[1] + z_noise * xi[..., d]
    p = p - 0.5 * h * pot.gradient(q, z)[0]
    q = q + 0.5 * h * p / mass
    decay = np.exp(-params.gamma * h / mass)
    p = decay * p + np.sqrt(mass / params.beta * (1 - decay**2)) * xi[..., :d]
    q = q + 0.5 * h * p / mass
    p = p - 0.5 * h * pot.gradient(q, z)[0]
    z = z - half * pot.gradient(q, z)[1] + z_noise * xi[..., d + 1]
    return pot.domain.wrap_q(q), pot.domain.wrap_z(z), p


def _limiting(pot, params, q, z, p, xi, profile):
    force = profile.mean_force(z)
    z = z - params.dt * force + np.sqrt(2 * params.dt / params.beta_bar) * xi[..., 0]
    return q, pot.domain.wrap_z(z), p


def _frozen(pot, params, q, z, p, xi, profile):
    grad, _ = pot.gradient(q, z)
    q = q - params.dt * grad + np.sqrt(2 * params.dt / params.beta) * xi
    return pot.domain.wrap_q(q), z, p


KERNELS = {
    "overdamped": _overdamped,
    "plain": _overdamped,
    "inertial": _inertial,
    "limiting": _limiting,
    "frozen": _frozen,
}


def _resolve(kind, params):
    if kind not in DYNAMICS:
        raise ConfigError(f"unknown dynamics '{kind}'")
    return params.plain() if kind == "plain" else params


def _single_step(kind, state, pot, params, rng, profile=None):
    params = _resolve(kind, params)
    if kind == "inertial" and not state.inertial:
        raise ConfigError("inertial step needs momenta")
    if kind != "inertial" and state.inertial:
        raise ConfigError(f"{kind} step got a state with momenta")
    check_stability(kind, pot, params, profile)
    xi = np.asarray(rng.standard_normal(noise_width(kind, pot.domain.d)), float)
    q, z, p = KERNELS[kind](pot, params, state.q, np.asarray(state.z), state.p, xi, profile)
    return State(q, float(z), p)


def step_overdamped(state, pot, params, rng):
    """One Euler-Maruyama step of the overdamped TAMD system."""
    return _single_step("overdamped", state, pot, params, rng)


def step_inertial(state, pot, params, rng):
    """z half-step, BAOAB step of (q, p) in the accelerated clock, z half-step."""
    return _single_step("inertial", state, pot, params, rng)


def step_limiting(zstate, profile, params, rng, pot=None):
    """One Euler-Maruyama step of the effective dynamics driven by A'."""
    pot = pot or Separable(domain=Domain(lz=profile.lz))
    check_stability("limiting", pot, params, profile)
    xi = np.asarray(rng.standard_normal(1), float)
    _, z, _ = _limiting(pot, params, None, np.asarray(zstate), None, xi, profile)
    return float(z)


def step_frozen(state, pot, params, rng):
    """One Euler-Maruyama step of the q-dynamics at fixed z."""
    return _single_step("frozen", state, pot, params, rng)


def _pack(initials, kind, pot):
    d = pot.domain.d
    for k, s in enumerate(initials):
        if s.q.shape != (d,):
            raise ConfigError(f"replica {k}: q must have {d} components")
        if kind == "inertial" and not s.inertial:
            raise ConfigError(f"replica {k}: inertial dynamics needs momenta")
    q = pot.domain.wrap_q(np.stack([s.q for s in initials]))
    z = pot.domain.wrap_z(np.array([s.z for s in initials]))
    p = np.stack([s.p for s in initials]) if kind == "inertial" else None
    return q, z, p


def _steps(kind, pot, params, q, z, p, gens, n_steps, profile):
    """Advance all replicas in lock-step, yielding after every step."""
    kernel = KERNELS[kind]
    width = noise_width(kind, pot.domain.d)
    step = 0
    while step < n_steps:
        block = min(CHUNK, n_steps - step)
        noise = np.stack([g.standard_normal((block, width)) for g in gens], axis=1)
        for xi in noise:
            try:
                q, z, p = kernel(pot, params, q, z, p, xi, profile)
            except LabError as err:
                raise SolverError(f"step {step + 1}: {err}") from err
            step += 1
            yield step, q, z, p


def _failures(step, z, stream_ids):
    bad = np.flatnonzero(~np.isfinite(z))
    return {stream_ids[k]: f"non-finite state at step {step}" for k in bad}


def _run(initials, kind, pot, params, observables, stream_ids, profile=None):
    params = _resolve(kind, params)
    check_stability(kind, pot, params, profile)
    obs = ObservableRegistry.resolve_all(observables)
    q, z, p = _pack(initials, kind, pot)
    gens = [RngStream(params.seed, sid).generator() for sid in stream_ids]
    n_rec = params.n_steps // params.stride + 1
    rec_q = np.empty((n_rec,) + q.shape)
    rec_z = np.empty((n_rec,) + z.shape)
    rec_p = None if p is None else np.empty((n_rec,) + p.shape)
    rec_q[0], rec_z[0] = q, z
    if p is not None:
        rec_p[0] = p
    for step, q, z, p in _steps(kind, pot, params, q, z, p, gens, params.n_steps, profile):
        if not np.isfinite(z).all():
            raise EnsembleError(_failures(step, z, stream_ids))
        if step % params.stride == 0:
            k = step // params.stride
            rec_q[k], rec_z[k] = q, z
            if p is not None:
                rec_p[k] = p
    times = np.arange(n_rec) * (params.stride * params.dt)
    out = []
    for r, sid in enumerate(stream_ids):
        series = {o.name: np.asarray(o(pot, rec_q[:, r], rec_z[:, r])) for o in obs}
        out.append(
            Trajectory(
                times.copy(),
                rec_q[:, r].copy(),
                rec_z[:, r].copy(),
                None if rec_p is None else rec_p[:, r].copy(),
                series,
                kind,
                sid,
            )
        )
    return out


def simulate(initial, kind, pot, params, observables=(), stream_id=0, profile=None):
    """Integrate one replica for n_steps, recording every stride steps."""
    return _run([initial], kind, pot, params, observables, [stream_id], profile)[0]


def _groups(n, threads):
    size = -(-n // max(1, threads))
    return [list(range(i, min(n, i + size))) for i in range(0, n, size)]


def ensemble(initials, kind, pot, params, observables=(), threads=1, profile=None):
    """One trajectory per replica; replica k draws from stream_id k."""
    if not initials:
        raise ConfigError("ensemble needs at least one replica")

    def job(idx):
        return _run([initials[k] for k in idx], kind, pot, params, observables, idx, profile)

    groups = _groups(len(initials), threads)
    results, failures = {}, {}
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        futures = [(idx, pool.submit(job, idx)) for idx in groups]
        for idx, fut in futures:
            try:
                for traj in fut.result():
                    results[traj.stream_id] = traj
            except EnsembleError as err:
                failures.update(err.failures)
            except SolverError as err:
                failures.update({k: str(err) for k in idx})
    if failures:
        raise EnsembleError(failures)
    return [results[k] for k in range(len(initials))]


def escape_times(initials, kind, pot, params, target, max_steps, stream_ids=None, profile=None):
    """Steps until each replica first satisfies target(z); NaN if it never does."""
    params = _resolve(kind, params)
    check_stability(kind, pot, params, profile)
    stream_ids = list(range(len(initials))) if stream_ids is None else list(stream_ids)
    q, z, p = _pack(initials, kind, pot)
    gens = [RngStream(params.seed, sid).generator() for sid in stream_ids]
    hit = np.full(len(initials), np.nan)
    for step, q, z, p in _steps(kind, pot, params, q, z, p, gens, max_steps, profile):
        if not np.isfinite(z).all():
            raise EnsembleError(_failures(step, z, stream_ids))
        fresh = np.isnan(hit) & np.asarray(target(z), dtype=bool)
        hit[fresh] = step
        if not np.isnan(hit).any():
            break
    return hit


def export_trajectory(traj, path, include_q=False):
    """Write t, z, [q_1..q_d], obs_<name>... as CSV."""
    header = ["t", "z"]
    columns = [traj.times, traj.z]
    if include_q:
        for j in range(traj.q.shape[1]):
            header.append(f"q_{j + 1}")
            columns.append(traj.q[:, j])
    for name, series in traj.observable_series.items():
        header.append(f"obs_{name}")
        columns.append(series)
    return write_csv(path, header, zip(*columns))
