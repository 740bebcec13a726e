# confinement/kinetic.py

"""
Finite-volume solver for the kinetic equation
    df/dt + v df/dx = int K(x, v') f(v') dv' - K(x, v) f(v)
on a box [-L, L] with specular walls, plus relaxation measurements.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .exceptions import BlowUpError, CFLError, ConfigError, PositivityError
from .fitting import loglinear_fit

logger = logging.getLogger(__name__)

SCHEMES = ('strang', 'euler', 'heun')
INITIAL_CONDITIONS = ('uniform', 'gaussian', 'equilibrium', 'twobump')
MIN_FIT_POINTS = 4


@dataclass(eq=False)
class KineticField:
    f: np.ndarray
    time: float
    mesh: object
    kernel: object

    @property
    def grid(self):
        return self.kernel.grid

    def density(self):
        return macroscopic_density(self.f, self.grid)

    def mass(self):
        return phase_space_mass(self.f, self.mesh, self.grid)


@dataclass(eq=False)
class RelaxationReport:
    times: np.ndarray
    mass: np.ndarray
    distance: np.ndarray
    distance_scheme: np.ndarray
    lambda_fit: float
    fit_r2: float
    fit_points: int
    fit_series: str
    mass_drift: float
    steps: int
    dt: float
    snapshots: list = field(default_factory=list)

    def as_frame_columns(self):
        return {'t': self.times, 'mass': self.mass, 'd': self.distance, 'd_scheme': self.distance_scheme}


def macroscopic_density(f, grid):
    """ rho_f(x_i) = sum_j w_j f_ij. """
    return f @ grid.weights


def phase_space_mass(f, mesh, grid):
    return float(mesh.dx * np.sum(f @ grid.weights))


def turning_rhs(f, kernel, mesh):
    """ Q(f)_ij = sum_j' w_j' K_ij' f_ij' - K_ij f_ij, K taken on the side of x_i. """
    Kf = kernel.rates(mesh.centers) * f
    return (Kf @ kernel.grid.weights)[:, None] - Kf


def stable_dt(mesh, kernel, cfl):
    if not 0.0 < cfl <= 1.0:
        raise CFLError(f"CFL number must lie in (0, 1], got {cfl!r}")
    vmax = float(np.max(np.abs(kernel.grid.nodes)))
    return min(cfl * mesh.dx / vmax, 0.5 / kernel.kmax)


def _fluxes(f, grid):
    """ Upwind face fluxes; wall faces take the mirrored velocity (specular). """
    v = grid.nodes
    pos, neg = grid.positive, grid.negative
    mirrored = f[:, grid.pair]
    F = np.empty((f.shape[0] + 1, f.shape[1]))
    F[1:, pos] = v[pos] * f[:, pos]
    F[0, pos] = v[pos] * mirrored[0, pos]
    F[:-1, neg] = v[neg] * f[:, neg]
    F[-1, neg] = v[neg] * mirrored[-1, neg]
    return F


def face_mass_flux(f, grid):
    """ sum_j w_j F_j on every face, walls included; zero on every face at a steady state. """
    return _fluxes(f, grid) @ grid.weights


def transport_rhs(f, mesh, grid):
    F = _fluxes(f, grid)
    return -(F[1:] - F[:-1]) / mesh.dx


def transport_step(f, dt, mesh, grid, cfl_max=1.0):
    vmax = float(np.max(np.abs(grid.nodes)))
    if dt * vmax > cfl_max * mesh.dx * (1.0 + 1e-12):
        raise CFLError(f"dt={dt:.4g} violates the CFL limit dx/max|v| = {mesh.dx / vmax:.4g}")
    return f + dt * transport_rhs(f, mesh, grid)


def _turning_step(f, dt, kernel, mesh):
    return f + dt * turning_rhs(f, kernel, mesh)


def advance(f, dt, kernel, mesh, scheme='strang'):
    grid = kernel.grid
    if scheme == 'strang':
        f = _turning_step(f, 0.5 * dt, kernel, mesh)
        f = transport_step(f, dt, mesh, grid)
        return _turning_step(f, 0.5 * dt, kernel, mesh)
    rhs = lambda h: transport_rhs(h, mesh, grid) + turning_rhs(h, kernel, mesh)
    if scheme == 'euler':
        return f + dt * rhs(f)
    if scheme == 'heun':
        f1 = f + dt * rhs(f)
        return 0.5 * (f + f1 + dt * rhs(f1))
    raise ConfigError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


class _Triplets:

    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []

    def add(self, r, c, val):
        self.rows.append(np.ravel(r))
        self.cols.append(np.ravel(c))
        self.vals.append(np.ravel(np.broadcast_to(val, np.shape(r))))

    def matrix(self, N):
        data = (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols)))
        return sparse.csr_matrix(data, shape=(N, N))


def transport_matrix(mesh, grid):
    """ f -> -v df/dx, upwind with specular walls, on f flattened row-major (cell, velocity). """
    nx, nv = mesh.size, grid.size
    idx = np.arange(nx * nv).reshape(nx, nv)
    out = _Triplets()
    v = grid.nodes
    for j in range(nv):
        s = abs(v[j]) / mesh.dx
        jm = grid.pair[j]
        out.add(idx[:, j], idx[:, j], -s)
        if v[j] > 0:
            out.add(idx[1:, j], idx[:-1, j], s)
            out.add(idx[0, j], idx[0, jm], s)
        else:
            out.add(idx[:-1, j], idx[1:, j], s)
            out.add(idx[-1, j], idx[-1, jm], s)
    return out.matrix(nx * nv)


def turning_matrix(mesh, kernel):
    grid = kernel.grid
    nx, nv = mesh.size, grid.size
    idx = np.arange(nx * nv).reshape(nx, nv)
    out = _Triplets()
    K = kernel.rates(mesh.centers)
    for i in range(nx):
        out.add(np.repeat(idx[i], nv), np.tile(idx[i], nv), np.tile(grid.weights * K[i], nv))
        out.add(idx[i], idx[i], -K[i])
    return out.matrix(nx * nv)


def generator_matrix(mesh, kernel):
    """ Sparse matrix of f -> -v df/dx + Q(f). """
    return (transport_matrix(mesh, kernel.grid) + turning_matrix(mesh, kernel)).tocsr()


def step_matrix(mesh, kernel, dt, scheme='strang'):
    """ The one-step map of `advance` as a sparse matrix. """
    T = transport_matrix(mesh, kernel.grid)
    Q = turning_matrix(mesh, kernel)
    I = sparse.identity(T.shape[0], format='csr')
    if scheme == 'strang':
        half = I + 0.5 * dt * Q
        return (half @ (I + dt * T) @ half).tocsr()
    G = T + Q
    if scheme == 'euler':
        return (I + dt * G).tocsr()
    if scheme == 'heun':
        return (I + dt * G + 0.5 * dt * dt * (G @ G)).tocsr()
    raise ConfigError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def _null_vector(A, mesh, grid, mass):
    A = A.tolil()
    A[0, :] = np.tile(mesh.dx * grid.weights, mesh.size)
    rhs = np.zeros(A.shape[0])
    rhs[0] = mass
    f = spsolve(A.tocsc(), rhs).reshape(mesh.size, grid.size)
    if np.any(f <= 0):
        raise PositivityError("discrete equilibrium of the kinetic scheme is not positive")
    return f


def discrete_equilibrium(mesh, kernel, mass=1.0):
    """ Null vector of the generator with prescribed mass. """
    return _null_vector(generator_matrix(mesh, kernel), mesh, kernel.grid, mass)


def scheme_equilibrium(mesh, kernel, dt, scheme='strang', mass=1.0):
    """
    Fixed point of one time step. Euler and Heun share it with the
    generator; the Strang splitting moves it by O(dt).
    """
    if scheme in ('euler', 'heun'):
        return discrete_equilibrium(mesh, kernel, mass)
    S = step_matrix(mesh, kernel, dt, scheme)
    return _null_vector(S - sparse.identity(S.shape[0], format='csr'), mesh, kernel.grid, mass)


def equilibrium_residual(g, mesh, kernel):
    """ max |v dg/dx + K g - int K' g'| under the solver's own stencil. """
    r = generator_matrix(mesh, kernel) @ np.ravel(g)
    return float(np.max(np.abs(r)))


def make_initial(kind, mesh, grid, g=None, mass=1.0):
    x = mesh.centers
    if kind == 'uniform':
        f = np.ones((mesh.size, grid.size))
    elif kind == 'gaussian':
        width = mesh.length / 4.0
        f = np.exp(-0.5 * (x / width) ** 2)[:, None] * np.ones(grid.size)
    elif kind == 'equilibrium':
        if g is None:
            raise ConfigError("the equilibrium initial condition needs a stationary state")
        f = np.array(g, dtype=float)
    elif kind == 'twobump':
        width = mesh.length / 10.0
        centre = mesh.length / 2.0
        bumps = np.exp(-0.5 * ((x - centre) / width) ** 2) + np.exp(-0.5 * ((x + centre) / width) ** 2)
        f = bumps[:, None] * (1.0 + grid.nodes)
    else:
        raise ConfigError(f"unknown initial condition {kind!r}; expected one of {INITIAL_CONDITIONS}")
    return f * (mass / phase_space_mass(f, mesh, grid))


def weighted_distance(f, ref, g, mesh, grid):
    """ ||f - ref|| in L^2(dv dx / g). """
    return float(math.sqrt(mesh.dx * np.sum(((f - ref) ** 2 / g) @ grid.weights)))


def evolve(f0, t_end, g, kernel, mesh, cfl=0.9, scheme='strang', samples=400, snapshot_times=(),
           equilibrium=None):
    """
    March f0 to t_end and record mass and the weighted distance d(t) to
    f_inf = g mass(f0) / mass(g), with g the Milne stationary state on `mesh`.
    The time step's own fixed point sits O(dx) away from f_inf, so d(t)
    levels off at that floor; the distance to the fixed point is recorded
    alongside and carries the rate fit whenever the floor leaves too short
    a window on d(t).
    """
    grid = kernel.grid
    f = np.array(f0, dtype=float)
    if f.shape != (mesh.size, grid.size):
        raise ConfigError(f"initial field has shape {f.shape}, expected {(mesh.size, grid.size)}")
    if np.any(f < 0) or not np.all(np.isfinite(f)):
        raise ConfigError("initial data must be finite and nonnegative")
    if t_end <= 0:
        raise ConfigError(f"t_end must be positive, got {t_end!r}")
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")

    dt = stable_dt(mesh, kernel, cfl)
    steps = int(math.ceil(t_end / dt))
    dt = t_end / steps
    every = max(1, steps // max(1, samples))

    mass0 = phase_space_mass(f, mesh, grid)
    f_inf = g * (mass0 / phase_space_mass(g, mesh, grid))
    if equilibrium is not None:
        f_scheme = equilibrium * (mass0 / phase_space_mass(equilibrium, mesh, grid))
    else:
        f_scheme = scheme_equilibrium(mesh, kernel, dt, scheme, mass0)

    pending = sorted(snapshot_times)
    times, masses, dist, dist_scheme, snaps = [], [], [], [], []

    def record(t, h):
        times.append(t)
        masses.append(phase_space_mass(h, mesh, grid))
        dist.append(weighted_distance(h, f_inf, g, mesh, grid))
        dist_scheme.append(weighted_distance(h, f_scheme, g, mesh, grid))

    record(0.0, f)
    floor = -1e-12 * float(np.max(f))
    for n in range(1, steps + 1):
        f = advance(f, dt, kernel, mesh, scheme)
        t = n * dt
        if not np.all(np.isfinite(f)) or f.min() < floor:
            raise BlowUpError(f"kinetic solver blew up at step {n} (t={t:.4g}): "
                              f"min f = {np.nanmin(f):.3e}", step=n, time=t)
        while pending and pending[0] <= t + 0.5 * dt:
            snaps.append((t, f.copy()))
            pending.pop(0)
        if n % every == 0 or n == steps:
            record(t, f)

    times, masses = np.array(times), np.array(masses)
    dist, dist_scheme = np.array(dist), np.array(dist_scheme)
    drift = float(np.max(np.abs(masses - mass0)) / mass0)
    if masses.min() <= 0:
        raise BlowUpError("mass became nonpositive", step=steps, time=t_end)

    lam, r2, npts = relaxation_rate(times, dist)
    fit_series = 'milne'
    if npts < MIN_FIT_POINTS:
        logger.info("d(t) reaches its O(dx) floor %.3e early; fitting the distance to the scheme's fixed point",
                    dist[-1])
        lam, r2, npts = relaxation_rate(times, dist_scheme)
        fit_series = 'scheme'
    if npts < MIN_FIT_POINTS:
        logger.warning("relaxation window too short (%d points); extend t_end", npts)
    logger.info("evolve: %d steps, dt=%.3g, mass drift %.2e, lambda_fit=%.4g (R2=%.4f, %s)",
                steps, dt, drift, lam, r2, fit_series)
    report = RelaxationReport(times=times, mass=masses, distance=dist, distance_scheme=dist_scheme,
                              lambda_fit=lam, fit_r2=r2, fit_points=npts, fit_series=fit_series,
                              mass_drift=drift, steps=steps, dt=dt, snapshots=snaps)
    return KineticField(f=f, time=t_end, mesh=mesh, kernel=kernel), report


def relaxation_rate(times, dist):
    """
    Fit log d(t) on the window 1e-8 d0 <= d <= 1e-2 d0, kept clear of the
    final floor. Returns (rate, R^2, points); nan when the window is empty.
    """
    d0 = dist[0]
    if d0 <= 0:
        return float('nan'), float('nan'), 0
    lower = max(1e-8 * d0, 10.0 * dist[-1])
    window = (dist <= 1e-2 * d0) & (dist >= lower)
    if window.sum() < MIN_FIT_POINTS:
        logger.debug("relaxation window too short (%d points)", int(window.sum()))
        return float('nan'), float('nan'), int(window.sum())
    fit = loglinear_fit(times, dist, mask=window)
    return fit.rate, fit.r2, fit.n


def profile_similarity(f, dispersion, index):
    """ Cosine similarity (weight w) of f(x_index, .) with G(v) or G(-v) by the sign of x. """
    grid, G = dispersion.grid, dispersion.G
    x = f.mesh.centers[index]
    target = G if x > 0 else G[grid.pair]
    profile = f.f[index]
    w = grid.weights
    return float(np.sum(w * profile * target) /
                 math.sqrt(np.sum(w * profile ** 2) * np.sum(w * target ** 2)))
