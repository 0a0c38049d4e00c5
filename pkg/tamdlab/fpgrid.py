"""generators of the overdamped TAMD system on a periodic (q, z) grid

Nodes are stored z-major with q running fastest: node (j, i) sits at flat
index j * n_q + i, so the fast generator is block diagonal over z slices.
Every operator carries the reference quadrature weights; adjoints, norms
and projections are taken in the inner product those weights define.
"""

from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np
from scipy import fft, linalg, sparse
from scipy.sparse.linalg import ArpackNoConvergence, eigs, splu

from helpers.csvio import write_csv
from helpers.task import RangeValidator
from tamdlab.errors import ConfigError, GuardError, SolverError
from tamdlab.freenergy import conditional_weights, periodic_nodes, q_mesh
from tamdlab.model import _check

SCHEMES = ("spectral", "fd2")
MAX_DENSE = 16384
CONSTANT_TOL = 1e-10
ZERO_TOL = 1e-10
RESIDUAL_TOL = 1e-9
CROSS_CHECK_TOL = 1e-8
# residuals cannot beat eps * |L|_inf, which grows like 1/delta
ROUNDOFF_FACTOR = 50
MASS_TOL = 1e-10
LEAK_TOL = {"spectral": 1e-8, "fd2": 1e-2}
# leading Crank-Nicolson steps replaced by two implicit Euler half steps
DAMPING_STEPS = 2

Generators = namedtuple("Generators", ["L0", "L1", "Ldelta", "A_op"])
DecaySeries = namedtuple("DecaySeries", ["times", "distances"])


@dataclass(frozen=True)
class GridSpec:
    n_q: int = 64
    n_z: int = 64
    scheme: str = "spectral"

    def __post_init__(self):
        _check("n_q", self.n_q, RangeValidator(minval=8))
        _check("n_z", self.n_z, RangeValidator(minval=8))
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got '{self.scheme}'")
        if self.scheme == "spectral" and (self.n_q % 2 or self.n_z % 2):
            raise ConfigError("spectral scheme needs even n_q and n_z")
        if self.size > MAX_DENSE:
            raise GuardError(f"grid dimension {self.size} exceeds {MAX_DENSE}")

    @property
    def size(self):
        return self.n_q * self.n_z

    @property
    def leak_tol(self):
        return LEAK_TOL[self.scheme]


@dataclass
class GridOperator:
    """Sparse generator matrix with the reference weights of its nodes."""

    matrix: sparse.csr_matrix
    weights: np.ndarray
    acts_on: str = "full"
    grid: GridSpec = field(default_factory=GridSpec)
    q_nodes: np.ndarray = None
    z_nodes: np.ndarray = None

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def leak_tol(self):
        return self.grid.leak_tol

    def weight_grid(self):
        if self.acts_on == "z-only":
            return self.weights
        return self.weights.reshape(self.grid.n_z, self.grid.n_q)

    def norm_inf(self):
        return float(abs(self.matrix).sum(axis=1).max())

    def dense(self):
        return self.matrix.toarray()

    def __matmul__(self, values):
        return self.matrix @ np.asarray(values, dtype=float)

    def like(self, matrix):
        return GridOperator(
            sparse.csr_matrix(matrix), self.weights, self.acts_on, self.grid,
            self.q_nodes, self.z_nodes,
        )


def fourier_matrix(n, length, order=1):
    """Periodic Fourier differentiation matrix on n (even) uniform nodes."""
    col = 1j * np.tile(np.arange(n // 2), 2).astype(complex)
    col[n // 2 + 1:] = -np.flip(col[n // 2 + 1:])
    if order % 2 == 0:
        col[n // 2] = col[n // 2 + 1] - 1j
    col = col**order
    mat = fft.ifft(col * fft.fft(np.eye(n))).T.real
    return mat * (2 * np.pi / length) ** order


def fd2_matrix(n, length, order=1):
    """Second-order centered periodic difference matrix."""
    h = length / n
    up = sparse.eye(n, k=1) + sparse.eye(n, k=-(n - 1))
    down = up.T
    if order == 1:
        return sparse.csr_matrix((up - down) / (2 * h))
    return sparse.csr_matrix((up - 2 * sparse.identity(n) + down) / h**2)


def diff_matrix(scheme, n, length, order):
    if scheme == "spectral":
        return sparse.csr_matrix(fourier_matrix(n, length, order))
    return fd2_matrix(n, length, order)


def reference_weights(pot, profile, grid):
    """Node weights of the reference measure as an (n_z, n_q) array summing to 1."""
    qs = q_mesh(pot.domain, grid.n_q)
    cond, _ = conditional_weights(pot, profile.beta, qs, profile.z_nodes)
    weights = cond * profile.marginal()[:, None]
    return weights / weights.sum()


def _check_constants(name, op):
    residual = np.abs(op @ np.ones(op.n)).max()
    if residual > CONSTANT_TOL * max(1.0, op.norm_inf()):
        raise GuardError(f"{name} does not annihilate constants (residual {residual:.3e})")
    return op


def combine(L0, L1, delta):
    """L_delta = L0/delta + L1."""
    _check("delta", delta, RangeValidator(minval=0, minexc=True, maxval=1))
    if L0.matrix.shape != L1.matrix.shape:
        raise ConfigError("L0 and L1 live on different grids")
    return L0.like(L0.matrix / delta + L1.matrix)


def build_generators(pot, profile, params, grid):
    """Assemble L0, L1, L_delta on the full grid and the limiting generator on z."""
    domain = pot.domain
    if domain.d != 1:
        raise ConfigError(f"grid solves need d = 1, got d = {domain.d}")
    if (profile.n_q, profile.n_z) != (grid.n_q, grid.n_z):
        raise ConfigError(
            f"profile grid {profile.n_q}x{profile.n_z} does not match "
            f"{grid.n_q}x{grid.n_z}"
        )
    if (params.beta, params.beta_bar) != (profile.beta, profile.beta_bar):
        raise ConfigError("profile temperatures differ from params")

    q_nodes = periodic_nodes(grid.n_q, domain.lq)
    z_nodes = profile.z_nodes
    der = pot.derivatives(q_nodes[None, :, None], z_nodes[:, None])
    weights = reference_weights(pot, profile, grid)
    shape = (grid.n_z, grid.n_q)

    dq = diff_matrix(grid.scheme, grid.n_q, domain.lq, 1)
    dqq = diff_matrix(grid.scheme, grid.n_q, domain.lq, 2)
    dz = diff_matrix(grid.scheme, grid.n_z, domain.lz, 1)
    dzz = diff_matrix(grid.scheme, grid.n_z, domain.lz, 2)
    eye_q = sparse.identity(grid.n_q, format="csr")
    eye_z = sparse.identity(grid.n_z, format="csr")

    def full(matrix):
        return GridOperator(
            sparse.csr_matrix(matrix), weights.ravel(), "full", grid, q_nodes, z_nodes
        )

    L0 = full(
        sparse.diags(-np.broadcast_to(der.grad_q[..., 0], shape).ravel()) @ sparse.kron(eye_z, dq)
        + sparse.kron(eye_z, dqq) / params.beta
    )
    L1 = full(
        sparse.diags(-np.broadcast_to(der.dz, shape).ravel()) @ sparse.kron(dz, eye_q)
        + sparse.kron(dzz, eye_q) / params.beta_bar
    )
    Ldelta = combine(L0, L1, params.delta)
    A_op = GridOperator(
        sparse.csr_matrix(sparse.diags(-profile.A1) @ dz + dzz / params.beta_bar),
        weights.sum(axis=1),
        "z-only",
        grid,
        q_nodes,
        z_nodes,
    )
    for name, op in zip(Generators._fields, (L0, L1, Ldelta, A_op)):
        _check_constants(name, op)
    return Generators(L0, L1, Ldelta, A_op)


def adjoint(op):
    """T* = D^-1 T^T D in the weighted inner product."""
    w = op.weights
    return op.like(sparse.diags(1.0 / w) @ op.matrix.T @ sparse.diags(w))


def weighted_inner(f, g, weights):
    return float(np.sum(np.ravel(weights) * np.ravel(f) * np.ravel(g)))


def weighted_norm(f, weights):
    return float(np.sqrt(weighted_inner(f, f, weights)))


def project_z(values, weights):
    """Conditional average over q at every z node."""
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 2:
        raise ConfigError("project_z needs (n_z, n_q) weights")
    f = np.asarray(values, dtype=float).reshape(weights.shape)
    return (weights * f).sum(axis=1) / weights.sum(axis=1)


def lift(z_values, n_q):
    """Extend a z-node function to the full grid."""
    return np.repeat(np.asarray(z_values, dtype=float), n_q)


def _bordered_solve(matrix, rhs, border, constraint, tol, stage):
    """Solve matrix x + border mu = rhs, constraint^T x = 0, guarding mu."""
    n, k = border.shape
    system = sparse.bmat(
        [[sparse.csr_matrix(matrix), border], [constraint.T, None]], format="csc"
    )
    try:
        sol = splu(system).solve(np.concatenate([rhs, np.zeros(k)]))
    except RuntimeError as err:
        raise SolverError(f"{stage}: singular bordered system") from err
    if not np.all(np.isfinite(sol)):
        raise SolverError(f"{stage}: non-finite solution")
    x, mu = sol[:n], sol[n:]
    leak = float(np.abs(mu).max())
    if leak > tol * max(1.0, float(np.abs(rhs).max())):
        raise GuardError(f"{stage}: solvability leakage {leak:.3e} exceeds {tol:g}")
    return x


def mean_zero_solve(op, rhs, stage="solve"):
    """Solve op x = rhs with weighted mean of x equal to zero."""
    w = op.weights
    border = sparse.csr_matrix(np.ones((op.n, 1)))
    constraint = sparse.csr_matrix((w / w.max())[:, None])
    return _bordered_solve(op.matrix, np.asarray(rhs, float), border, constraint,
                           op.leak_tol, stage)


def slice_solve(op, rhs, stage="slice solve"):
    """Solve a block-diagonal op x = rhs with zero conditional mean per z slice."""
    n_z, n_q = op.grid.n_z, op.grid.n_q
    border = sparse.kron(sparse.identity(n_z), np.ones((n_q, 1)), format="csr")
    w = op.weights
    constraint = sparse.csr_matrix(sparse.diags(w / w.max()) @ border)
    return _bordered_solve(op.matrix, np.asarray(rhs, float), border, constraint,
                           op.leak_tol, stage)


@dataclass
class StationarySolution:
    h_delta: np.ndarray
    residual_norm: float
    normalization: float
    iterations: int = 0


def _zero_tol(op):
    return ZERO_TOL * max(1.0, op.norm_inf())


def residual_tol(op):
    return max(RESIDUAL_TOL, ROUNDOFF_FACTOR * np.finfo(float).eps * op.norm_inf())


def _check_simple_kernel(op):
    shift = _zero_tol(op)
    try:
        vals = eigs(op.matrix.T.tocsc(), k=2, sigma=shift, which="LM",
                    return_eigenvectors=False)
    except ArpackNoConvergence as err:
        raise SolverError("kernel check: eigensolver did not converge") from err
    zeros = int(np.sum(np.abs(vals) <= shift))
    if zeros != 1:
        raise GuardError(f"generator kernel has dimension {zeros}, expected 1")


def stationary_density(Ldelta, max_iter=50):
    """h_delta = d nu_delta / d nu_ref by shifted inverse iteration.

    L* = D^-1 L^T D, so the iteration runs on the similar matrix L^T for the
    node masses rho = w h and divides by w at the end."""
    _check_simple_kernel(Ldelta)
    w = Ldelta.weights
    lt = Ldelta.matrix.T.tocsc()
    shift = _zero_tol(Ldelta)
    try:
        lu = splu((lt - shift * sparse.identity(Ldelta.n, format="csc")).tocsc())
    except RuntimeError as err:
        raise SolverError("stationary density: singular shifted system") from err
    rho = w.copy()
    for it in range(1, max_iter + 1):
        nxt = lu.solve(rho)
        nxt /= nxt.sum()
        done = np.abs(nxt - rho).max() <= 1e-13 * np.abs(nxt).max()
        rho = nxt
        if done:
            break
    h = rho / w
    residual = float(np.sqrt(np.sum((lt @ rho) ** 2 / w)))
    tol = residual_tol(Ldelta)
    if residual > tol:
        raise SolverError(
            f"stationary density residual {residual:.3e} above {tol:.1e}"
        )
    if np.any(h <= 0):
        k = int(np.argmin(h))
        raise GuardError(f"stationary density not positive at node {k}; refine the grid")
    return StationarySolution(h, residual, float(np.sum(w * h)), it)


@dataclass
class SpectralReport:
    gap: float
    lambda_ref: float
    R2_marginal: float
    eigen_count: int
    zero_multiplicity: int
    eigenvalues: np.ndarray = None
    marginal_gap: float = 0.0


def _symmetrized_eigvals(op):
    if op.n > MAX_DENSE:
        raise GuardError(f"dense eigensolve of dimension {op.n} exceeds {MAX_DENSE}")
    s = np.sqrt(op.weights)
    mat = s[:, None] * op.dense() / s[None, :]
    try:
        return linalg.eigvals(mat)
    except linalg.LinAlgError as err:
        raise SolverError(f"eigensolver failed: {err}") from err


def _split_kernel(vals, tol):
    zero = np.abs(vals) <= tol
    if zero.sum() != 1:
        raise GuardError(
            f"ambiguous zero cluster: {int(zero.sum())} eigenvalues within {tol:.1e} of 0"
        )
    return int(zero.sum()), vals[~zero]


def marginal_gap(A_op):
    """Gap of -A on mean-zero functions of z."""
    vals = _symmetrized_eigvals(A_op)
    _, rest = _split_kernel(vals, _zero_tol(A_op))
    return float(np.min(-rest.real))


def spectral_report(Ldelta, A_op, beta_bar):
    """Full spectrum of L_delta* against the Poincare rate of the limiting dynamics."""
    vals = _symmetrized_eigvals(Ldelta)
    zeros, rest = _split_kernel(vals, _zero_tol(Ldelta))
    gap_a = marginal_gap(A_op)
    r2 = beta_bar * gap_a
    order = np.lexsort((vals.imag, -vals.real))
    return SpectralReport(
        gap=float(np.min(-rest.real)),
        lambda_ref=r2 / beta_bar,
        R2_marginal=r2,
        eigen_count=len(vals),
        zero_multiplicity=zeros,
        eigenvalues=vals[order],
        marginal_gap=gap_a,
    )


@dataclass
class CorrectionFields:
    h_frak: np.ndarray
    h_bar: np.ndarray
    h_tilde: np.ndarray
    G: np.ndarray
    u: np.ndarray = None
    h_frak_closed: np.ndarray = None
    construction_gap: float = 0.0


def _first_order(L0s, L1s, zdyn, weights, source, stage):
    """-u + h_bar with u = (L0*)^-1 (1 - Pi_z) source and zdyn h_bar = Pi_z L1* u."""
    n_q = weights.shape[1]
    u = slice_solve(L0s, source - lift(project_z(source, weights), n_q), f"{stage}: u")
    G = project_z(L1s @ u, weights)
    h_bar = mean_zero_solve(zdyn, G, f"{stage}: h_bar")
    return u, G, h_bar, -u + lift(h_bar, n_q)


def correction_fields(L0, L1, A_op, g1):
    """First and second order corrections of the invariant density."""
    weights = L0.weight_grid()
    n_z, n_q = weights.shape
    source = np.asarray(g1.g1 if hasattr(g1, "g1") else g1, dtype=float).ravel()
    if source.size != L0.n:
        raise ConfigError(f"g1 has {source.size} nodes, grid has {L0.n}")
    scale = max(1.0, float(np.abs(source).max()))
    leak = float(np.abs(project_z(source, weights)).max())
    if leak > CROSS_CHECK_TOL * scale:
        raise GuardError(f"solvability violated: max |Pi_z g1| = {leak:.3e}")

    L0s, L1s = adjoint(L0), adjoint(L1)
    # Pi_z L1* restricted to functions of z
    lifter = sparse.kron(sparse.identity(n_z), np.ones((n_q, 1)), format="csr")
    proj = sparse.csr_matrix(
        sparse.diags(1.0 / weights.sum(axis=1)) @ lifter.T @ sparse.diags(L0.weights)
    )
    zdyn = A_op.like(proj @ L1s.matrix @ lifter)
    u, G, h_bar, h_frak = _first_order(L0s, L1s, zdyn, weights, source, "hierarchy")

    # closed form from the discrete L1* 1 and the limiting generator
    closed_source = L1s @ np.ones(L0.n)
    _, _, _, h_closed = _first_order(
        L0s, L1s, adjoint(A_op), weights, closed_source, "closed form"
    )
    gap = weighted_norm(h_frak - h_closed, L0.weights)
    if L0.grid.scheme == "spectral" and gap > CROSS_CHECK_TOL * scale:
        raise GuardError(f"first-order constructions disagree by {gap:.3e}")

    rhs = L1s @ h_frak
    rhs = rhs - lift(project_z(rhs, weights), n_q)
    h_tilde = -slice_solve(L0s, rhs, "h_tilde")
    return CorrectionFields(h_frak, h_bar, h_tilde, G, u, h_closed, gap)


def asymptotic_residual(Ldelta, L1, fields, delta):
    """|| L_delta* (1 + delta h + delta^2 h~) - delta^2 L1* h~ ||_w."""
    f = 1.0 + delta * fields.h_frak + delta**2 * fields.h_tilde
    r = adjoint(Ldelta) @ f - delta**2 * (adjoint(L1) @ fields.h_tilde)
    return weighted_norm(r, Ldelta.weights)


def grid_expectation(h_delta, weights, phi):
    """Integral of phi against nu_delta = h_delta nu_ref."""
    return weighted_inner(h_delta, phi, weights)


def propagate(Ldelta, f0, t_final, dt_pde, h_delta=None):
    """Crank-Nicolson for d f/dt = L_delta* f, recording ||f(t) - h_delta||_w.

    The first DAMPING_STEPS steps are taken as implicit Euler half steps so
    stiff fast modes are damped instead of left oscillating."""
    _check("t_final", t_final, RangeValidator(minval=0, minexc=True))
    _check("dt_pde", dt_pde, RangeValidator(minval=0, minexc=True))
    w = Ldelta.weights
    f0 = np.asarray(f0, dtype=float)
    if abs(float(np.sum(w * f0)) - 1.0) > MASS_TOL:
        raise ConfigError("initial density must have weighted mean 1")
    if h_delta is None:
        h_delta = stationary_density(Ldelta).h_delta

    n_steps = max(1, int(round(t_final / dt_pde)))
    lt = Ldelta.matrix.T.tocsc()
    eye = sparse.identity(Ldelta.n, format="csc")
    try:
        lu = splu((eye - 0.5 * dt_pde * lt).tocsc())
    except RuntimeError as err:
        raise SolverError(f"propagate: step {dt_pde:g} rejected") from err
    explicit = (eye + 0.5 * dt_pde * lt).tocsr()

    rho = w * f0
    mass = float(rho.sum())
    times = np.arange(n_steps + 1) * dt_pde
    dist = np.empty(n_steps + 1)
    dist[0] = weighted_norm(f0 - h_delta, w)
    for k in range(1, n_steps + 1):
        if k <= DAMPING_STEPS:
            rho = lu.solve(lu.solve(rho))
        else:
            rho = lu.solve(explicit @ rho)
        prev, mass = mass, float(rho.sum())
        if not np.isfinite(mass) or abs(mass - prev) > MASS_TOL:
            raise SolverError(f"propagate: mass drifted to {mass!r} at step {k}")
        dist[k] = weighted_norm(rho / w - h_delta, w)
    return DecaySeries(times, dist)


def poisson_solve(Ldelta, h_delta, phi):
    """Phi_delta solving -L_delta Phi = P_delta phi, and sigma^2 of phi."""
    w = Ldelta.weights
    h_delta = np.asarray(h_delta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    centered = phi - grid_expectation(h_delta, w, phi)
    Phi = mean_zero_solve(Ldelta.like(-Ldelta.matrix), centered, "poisson")
    sigma2 = 2.0 * float(np.sum(centered * Phi * h_delta * w))
    if sigma2 < -RESIDUAL_TOL * max(1.0, float(np.abs(centered).max())):
        raise GuardError(f"negative asymptotic variance {sigma2:.3e}")
    return Phi, max(sigma2, 0.0)


def _projected_centered(phi, weights):
    phi = np.asarray(phi, dtype=float).ravel()
    centered = phi - weighted_inner(phi, np.ones_like(phi), weights)
    return centered, project_z(centered, weights)


def reference_variance(A_op, phi, weights):
    """Asymptotic variance of phi once the fast variables are equilibrated."""
    weights = np.asarray(weights, dtype=float)
    _, b = _projected_centered(phi, weights)
    Psi = mean_zero_solve(A_op.like(-A_op.matrix), b, "reference variance")
    sigma2 = 2.0 * float(np.sum(weights.sum(axis=1) * b * Psi))
    if sigma2 < -RESIDUAL_TOL:
        raise GuardError(f"negative reference variance {sigma2:.3e}")
    return max(sigma2, 0.0)


def approx_poisson(A_op, L0, L1, phi):
    """Leading terms Psi(z) and psi(q, z) of Phi_delta = Psi + delta psi + ..."""
    weights = L0.weight_grid()
    n_q = weights.shape[1]
    centered, b = _projected_centered(phi, weights)
    Psi = mean_zero_solve(A_op.like(-A_op.matrix), b, "approx poisson: Psi")
    rhs = -(L1 @ lift(Psi, n_q)) - centered
    rhs = rhs - lift(project_z(rhs, weights), n_q)
    psi = slice_solve(L0, rhs, "approx poisson: psi")
    return Psi, psi


def node_values(pot, op, observable):
    """Observable evaluated at every grid node, flat in node order."""
    q = op.q_nodes[None, :, None]
    z = op.z_nodes[:, None]
    return np.asarray(observable(pot, q, z), dtype=float).ravel()


def export_field(path, op, values):
    """Write a grid field as CSV rows q, z, value (z, value for z-only fields)."""
    values = np.ravel(values)
    if values.size == op.grid.n_z:
        return write_csv(path, ["z", "value"], zip(op.z_nodes, values))
    zz, qq = np.meshgrid(op.z_nodes, op.q_nodes, indexing="ij")
    return write_csv(path, ["q", "z", "value"], zip(qq.ravel(), zz.ravel(), values))


def export_spectrum(path, report):
    return write_csv(
        path, ["re", "im"], zip(report.eigenvalues.real, report.eigenvalues.imag)
    )
