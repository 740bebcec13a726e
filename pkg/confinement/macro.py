# confinement/macro.py

"""
Macroscopic models next to the kinetic stationary state: the drift-diffusion
limit obtained from the modified entropy, the weak-bias limit, and the
two-speed (Cattaneo) system, with their tail rates side by side.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from scipy.linalg import solve_banded

from .exceptions import CFLError, ConfigError, ConvergenceError, NumericalError, PositivityError
from .fitting import loglinear_fit
from .grids import make_box_mesh, make_custom_kernel, make_two_speed_grid
from .hypo import pseudo_inverse
from .kinetic import advance, discrete_equilibrium, face_mass_flux, phase_space_mass, stable_dt

logger = logging.getLogger(__name__)

VARIANTS = ('modified-entropy-limit', 'weak-bias', 'cattaneo')

# weak-bias coefficients for V = [-1/2, 1/2] and K = 1 + chi sign(xv)
WEAK_BIAS_DIFFUSION = 1.0 / 12.0
WEAK_BIAS_DRIFT = 0.25


# --- Diffusivity ---

@dataclass(eq=False)
class Diffusivity:
    x: np.ndarray
    D: np.ndarray
    D_variance: np.ndarray
    m_g: np.ndarray
    flux_velocity: np.ndarray

    @property
    def formula_gap(self):
        return float(np.max(np.abs(self.D - self.D_variance)) / np.max(np.abs(self.D)))

    @property
    def symmetry_gap(self):
        return float(np.max(np.abs(self.D - self.D[::-1])) / np.max(np.abs(self.D)))

    def tail_ratio(self):
        """ D / m_g averaged over the outer quarter of the box. """
        outer = np.abs(self.x) >= 0.75 * np.abs(self.x).max()
        return float(np.mean(self.D[outer] / self.m_g[outer]))


def diffusivity_profile(g, K, grid):
    """
    Per cell, with lambda = sum w g K and b = 1/(K g + lambda):
    D = 2 sum w h^2 b - 2 (sum w h b)^2 / sum w b for h = (v - c) g, where
    c = sum w v g / sum w g removes any residual flux of g (c = 0 for an
    exactly flux-free state, giving the textbook formula with h = v g).
    """
    w, v = grid.weights, grid.nodes
    rho = g @ w
    c = (g @ (w * v)) / rho
    h = (v[None, :] - c[:, None]) * g
    lam = (g * K) @ w
    b = 1.0 / (K * g + lam[:, None])
    Z = b @ w
    D = 2.0 * ((h ** 2 * b) @ w) - 2.0 * ((h * b) @ w) ** 2 / Z

    p = b / Z[:, None]
    mean = (h * p) @ w
    var = ((h - mean[:, None]) ** 2 * p) @ w
    D_var = 2.0 * Z * var
    m_g = g @ (w * v ** 2)
    return D, D_var, m_g, c


def diffusivity(state):
    mesh, grid = state.mesh, state.grid
    K = state.kernel.rates(mesh.centers)
    D, D_var, m_g, c = diffusivity_profile(state.g, K, grid)
    if np.any(D <= 0):
        raise NumericalError("diffusivity is not positive")
    result = Diffusivity(x=mesh.centers, D=D, D_variance=D_var, m_g=m_g, flux_velocity=c)
    logger.info("diffusivity: formula gap %.2e, symmetry gap %.2e, D/m_g tail %.5f",
                result.formula_gap, result.symmetry_gap, result.tail_ratio())
    return result


def reconstructed_diffusivity(state):
    """ -sum w v f with f the zero-average solution of L f = (1 - Pi)(v g). """
    grid = state.grid
    g = state.g
    w, v = grid.weights, grid.nodes
    h = v[None, :] * g - ((g @ (w * v)) / (g @ w))[:, None] * g
    K = state.kernel.rates(state.mesh.centers)
    f = pseudo_inverse(h, g, K, w)
    return -(f @ (w * v))


# --- Drift-diffusion problems ---

@dataclass(eq=False)
class DriftDiffusionProblem:
    """
    Conservative finite volumes on a box mesh. Modified-entropy limit:
    F = D d/dx(rho / rho_ref) at faces. Weak bias: F = (1/12) drho/dx +
    bias sign(x) rho / 4, with sign 0 on the face at x = 0.
    """
    variant: str
    mesh: object
    D: np.ndarray
    rho_ref: np.ndarray
    chi: float
    bias: float = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS[:2]:
            raise ConfigError(f"drift-diffusion variant must be one of {VARIANTS[:2]}, got {self.variant!r}")
        if np.any(self.D <= 0) or np.any(self.rho_ref <= 0):
            raise ConfigError("diffusivity and reference density must be positive")
        if not np.allclose(self.rho_ref, self.rho_ref[::-1], rtol=1e-10, atol=0.0):
            raise ConfigError("reference density must be even in x")
        if self.variant == 'weak-bias' and 1.5 * self.bias * self.mesh.dx >= 1.0:
            raise ConfigError(f"mesh too coarse for the weak-bias drift: dx={self.mesh.dx:.3g}")


def modified_entropy_problem(state, profile=None):
    profile = diffusivity(state) if profile is None else profile
    return DriftDiffusionProblem(variant='modified-entropy-limit', mesh=state.mesh, D=profile.D,
                                 rho_ref=state.density(), chi=state.kernel.chi or 0.0)


def weak_bias_problem(mesh, chi, rescaled=False):
    """
    rescaled=True works in x/chi, t/chi^2 (steady state e^{-3|x|});
    otherwise in the original variables (steady state e^{-3 chi |x|}).
    """
    bias = 1.0 if rescaled else float(chi)
    x = mesh.centers
    return DriftDiffusionProblem(variant='weak-bias', mesh=mesh, D=np.full(mesh.size, WEAK_BIAS_DIFFUSION),
                                 rho_ref=np.exp(-3.0 * bias * np.abs(x)), chi=float(chi), bias=bias)


def face_coefficients(problem):
    """ F at interior face k (between cells k, k+1) = cp[k] rho[k+1] + cm[k] rho[k]. """
    dx = problem.mesh.dx
    if problem.variant == 'modified-entropy-limit':
        Df = 0.5 * (problem.D[1:] + problem.D[:-1])
        r = problem.rho_ref
        return Df / (dx * r[1:]), -Df / (dx * r[:-1])
    s = np.sign(problem.mesh.edges[1:-1])
    drift = problem.bias * WEAK_BIAS_DRIFT * s / 2.0
    return WEAK_BIAS_DIFFUSION / dx + drift, -WEAK_BIAS_DIFFUSION / dx + drift


def face_fluxes(problem, rho):
    """ Interior face fluxes; the walls carry none. """
    cp, cm = face_coefficients(problem)
    return cp * rho[1:] + cm * rho[:-1]


def generator_bands(problem):
    """ d rho/dt = A rho as (upper, diagonal, lower) bands of the tridiagonal A. """
    cp, cm = face_coefficients(problem)
    dx = problem.mesh.dx
    n = problem.mesh.size
    upper = cp / dx
    lower = -cm / dx
    diag = np.zeros(n)
    diag[:-1] += cm / dx
    diag[1:] -= cp / dx
    return upper, diag, lower


def generator_dense(problem):
    upper, diag, lower = generator_bands(problem)
    return np.diag(diag) + np.diag(upper, 1) + np.diag(lower, -1)


def generator_symmetry(problem):
    """ Relative asymmetry of A in the product sum a b / rho_ref. """
    S = generator_dense(problem) / problem.rho_ref[:, None]
    return float(np.max(np.abs(S - S.T)) / np.max(np.abs(S)))


@dataclass(eq=False)
class DriftDiffusionRun:
    times: np.ndarray
    rho: np.ndarray
    mass_drift: float
    flux_residual: float
    steps: int

    @property
    def final(self):
        return self.rho[-1]


def _implicit_step(bands, rho, dt):
    upper, diag, lower = bands
    ab = np.zeros((3, rho.size))
    ab[0, 1:] = -dt * upper
    ab[1] = 1.0 - dt * diag
    ab[2, :-1] = -dt * lower
    return solve_banded((1, 1), ab, rho)


def solve_drift_diffusion(problem, rho0, t_end, dt, method='implicit', samples=50):
    rho = np.array(rho0, dtype=float)
    if rho.shape != (problem.mesh.size,) or np.any(rho < 0):
        raise ConfigError("initial density must be non-negative on every cell")
    if dt <= 0 or t_end <= 0:
        raise ConfigError("time step and final time must be positive")
    bands = generator_bands(problem)
    if method == 'explicit':
        limit = 1.0 / np.max(np.abs(bands[1]))
        if dt > limit:
            raise CFLError(f"explicit drift-diffusion needs dt <= {limit:.4g}, got {dt:.4g}")
    elif method != 'implicit':
        raise ConfigError(f"unknown time discretization {method!r}")

    dx = problem.mesh.dx
    mass0 = dx * rho.sum()
    steps = int(np.ceil(t_end / dt))
    dt = t_end / steps
    every = max(1, steps // samples)
    times, history = [0.0], [rho.copy()]
    upper, diag, lower = bands
    for n in range(1, steps + 1):
        if method == 'implicit':
            rho = _implicit_step(bands, rho, dt)
        else:
            Arho = diag * rho
            Arho[:-1] += upper * rho[1:]
            Arho[1:] += lower * rho[:-1]
            rho = rho + dt * Arho
            if rho.min() < -1e-12 * np.abs(rho).max():
                raise PositivityError(f"negative density at step {n}")
        if n % every == 0 or n == steps:
            times.append(n * dt)
            history.append(rho.copy())

    drift = abs(dx * rho.sum() - mass0) / mass0
    residual = float(np.max(np.abs(face_fluxes(problem, rho)))) if rho.size > 1 else 0.0
    logger.info("%s: t=%.4g in %d steps, mass drift %.2e, max face flux %.2e",
                problem.variant, t_end, steps, drift, residual)
    return DriftDiffusionRun(times=np.array(times), rho=np.array(history), mass_drift=float(drift),
                             flux_residual=residual, steps=steps)


def steady_state(problem, rho0=None, tol=1e-10, dt0=1.0, dt_max=1e4, max_steps=500):
    """
    March with implicit Euler, doubling dt up to dt_max, until every face
    flux is below tol * mass / L and no cell density moves by more than
    tol relative to itself in one step, so the tails settle as well.
    """
    mesh = problem.mesh
    rho = np.ones(mesh.size) if rho0 is None else np.array(rho0, dtype=float)
    rho = rho / (mesh.dx * rho.sum())
    bands = generator_bands(problem)
    threshold = tol / mesh.length
    dt = dt0
    for step in range(1, max_steps + 1):
        new = _implicit_step(bands, rho, dt)
        change = float(np.max(np.abs(new - rho) / np.abs(new)))
        rho = new
        residual = float(np.max(np.abs(face_fluxes(problem, rho))))
        logger.debug("steady march %d: dt=%.3g flux %.3e change %.3e", step, dt, residual, change)
        if residual <= threshold and change <= tol:
            logger.info("%s steady state after %d steps (flux %.2e)", problem.variant, step, residual)
            return rho
        dt = min(2.0 * dt, dt_max)
    raise ConvergenceError(f"{problem.variant} did not reach a steady state", max_steps, residual)


# --- Two-speed system ---

def cattaneo_kernel(chi):
    """
    Speeds +-1. Tumbling at rate 2(1 + chi sign(xv)) into a uniformly drawn
    direction reverses f+ at rate 1 + chi sign(x) and f- at 1 - chi sign(x).
    """
    chi = float(chi)
    if not 0.0 < chi < 1.0:
        raise ConfigError(f"chi must lie in (0, 1), got {chi!r}")
    grid = make_two_speed_grid()
    return make_custom_kernel(grid, 2.0 * (1.0 + chi * np.sign(grid.nodes)))


@dataclass(eq=False)
class CattaneoRun:
    mesh: object
    f: np.ndarray
    time: float
    steps: int
    mass_drift: float
    flux_residual: float = np.nan

    @property
    def f_plus(self):
        return self.f[:, 1]

    @property
    def f_minus(self):
        return self.f[:, 0]


def cattaneo_solve(chi, mesh, f0_plus, f0_minus, t_end, cfl=0.9, scheme='euler'):
    """ Upwind transport with reflecting walls; the exchange is the turning operator on two speeds. """
    kernel = cattaneo_kernel(chi)
    f = np.stack([np.asarray(f0_minus, dtype=float), np.asarray(f0_plus, dtype=float)], axis=1)
    if f.shape != (mesh.size, 2) or np.any(f < 0):
        raise ConfigError("two-speed initial data must be non-negative on every cell")
    dt = stable_dt(mesh, kernel, cfl)
    steps = max(1, int(np.ceil(t_end / dt)))
    dt = t_end / steps

    mass0 = phase_space_mass(f, mesh, kernel.grid)
    for _ in range(steps):
        f = advance(f, dt, kernel, mesh, scheme)
    drift = abs(phase_space_mass(f, mesh, kernel.grid) - mass0) / mass0
    logger.info("two-speed run chi=%.3f: %d steps to t=%.4g, mass drift %.2e", chi, steps, t_end, drift)
    return CattaneoRun(mesh=mesh, f=f, time=float(t_end), steps=steps, mass_drift=float(drift),
                       flux_residual=cattaneo_flux_residual(f, kernel.grid))


def cattaneo_flux_residual(f, grid):
    """ Largest face mass flux over the largest density. """
    return float(np.max(np.abs(face_mass_flux(f, grid))) / np.max(f @ grid.weights))


def cattaneo_relax(chi, mesh, f0_plus, f0_minus, tol=1e-10, chunk=25.0, t_max=1e4, cfl=0.9, scheme='euler'):
    """
    March the two-speed system in chunks of `chunk` time units until the
    face flux residual drops below tol.
    """
    grid = make_two_speed_grid()
    run = CattaneoRun(mesh=mesh, f=np.stack([np.asarray(f0_minus, dtype=float), np.asarray(f0_plus, dtype=float)],
                                            axis=1), time=0.0, steps=0, mass_drift=0.0)
    mass0 = phase_space_mass(run.f, mesh, grid)
    time, steps = 0.0, 0
    while True:
        run = cattaneo_solve(chi, mesh, run.f_plus, run.f_minus, chunk, cfl=cfl, scheme=scheme)
        time += chunk
        steps += run.steps
        logger.debug("two-speed relaxation t=%.4g: flux residual %.3e", time, run.flux_residual)
        if run.flux_residual < tol:
            break
        if time >= t_max:
            raise ConvergenceError(f"two-speed system still moving at t={time:.4g}", steps, run.flux_residual)
    drift = abs(phase_space_mass(run.f, mesh, grid) - mass0) / mass0
    logger.info("two-speed relaxation chi=%.3f: t=%.4g, flux residual %.2e, mass drift %.2e",
                chi, time, run.flux_residual, drift)
    return CattaneoRun(mesh=mesh, f=run.f, time=time, steps=steps, mass_drift=float(drift),
                       flux_residual=run.flux_residual)


def cattaneo_gap(run, direct):
    """ max |f - f_direct| / max f_direct, with f_direct rescaled to the mass of f. """
    scaled = direct.f * (run.f.sum() / direct.f.sum())
    return float(np.max(np.abs(run.f - scaled)) / np.max(scaled))


def cattaneo_steady(chi, mesh):
    """ Null vector of the two-speed generator with unit mass. """
    kernel = cattaneo_kernel(chi)
    f = discrete_equilibrium(mesh, kernel, 1.0)
    return CattaneoRun(mesh=mesh, f=f, time=np.inf, steps=0, mass_drift=0.0,
                       flux_residual=cattaneo_flux_residual(f, kernel.grid))


# --- Tail comparison ---

def tail_slope(x, values):
    """ Slope of log(values) against x on the outer half of x > 0. """
    x = np.asarray(x)
    window = x >= 0.5 * x.max()
    return loglinear_fit(x, values, mask=window)


@dataclass(frozen=True)
class TailReport:
    chi: float
    alpha: float
    kinetic: float
    modified_entropy: float
    weak_bias: float
    weak_bias_rescaled: float
    cattaneo: float
    fit_r2: dict

    @property
    def ratio(self):
        """ alpha / (3 chi): the kinetic rate over the weak-bias one. """
        return self.alpha / (3.0 * self.chi)

    def rows(self):
        return [
            ('kinetic', -self.alpha, self.kinetic),
            ('modified-entropy-limit', -self.alpha, self.modified_entropy),
            ('weak-bias', -3.0 * self.chi, self.weak_bias),
            ('weak-bias-rescaled', -3.0, self.weak_bias_rescaled),
            ('cattaneo', -2.0 * self.chi, self.cattaneo),
        ]


def _variant_slope(variant, state, chi, mesh):
    if variant == 'modified-entropy-limit':
        problem = modified_entropy_problem(state)
        rho = steady_state(problem)
        return tail_slope(problem.mesh.centers, rho)
    if variant == 'weak-bias':
        problem = weak_bias_problem(mesh, chi)
        return tail_slope(mesh.centers, steady_state(problem))
    if variant == 'weak-bias-rescaled':
        scaled = make_box_mesh(mesh.length * chi, mesh.size)
        problem = weak_bias_problem(scaled, chi, rescaled=True)
        return tail_slope(scaled.centers, steady_state(problem))
    if variant == 'cattaneo':
        run = cattaneo_relax(chi, mesh, np.ones(mesh.size), np.ones(mesh.size))
        return tail_slope(mesh.centers, run.f_plus)
    raise ConfigError(f"unknown variant {variant!r}")


def tail_compare(state, n_jobs=1):
    """ Fitted log-density slopes of the kinetic state and every macroscopic model. """
    chi = state.kernel.chi
    if chi is None:
        raise ConfigError("tail comparison needs the sign kernel (chi)")
    mesh = state.mesh
    kinetic = tail_slope(mesh.centers, state.density())
    names = ('modified-entropy-limit', 'weak-bias', 'weak-bias-rescaled', 'cattaneo')
    fits = Parallel(n_jobs=n_jobs)(delayed(_variant_slope)(name, state, chi, mesh) for name in names)
    fits = dict(zip(names, fits))
    report = TailReport(chi=float(chi), alpha=float(state.alpha), kinetic=kinetic.slope,
                        modified_entropy=fits['modified-entropy-limit'].slope,
                        weak_bias=fits['weak-bias'].slope,
                        weak_bias_rescaled=fits['weak-bias-rescaled'].slope,
                        cattaneo=fits['cattaneo'].slope,
                        fit_r2={'kinetic': kinetic.r2, **{k: v.r2 for k, v in fits.items()}})
    logger.info("tail slopes chi=%.3f: kinetic %.5f, limit %.5f, weak bias %.5f, two-speed %.5f; alpha/3chi %.5f",
                chi, report.kinetic, report.modified_entropy, report.weak_bias, report.cattaneo, report.ratio)
    return report


def weak_bias_error(rho, mesh, bias=1.0):
    """ Normalized sup-norm distance between rho and e^{-3 bias |x|}. """
    ref = np.exp(-3.0 * bias * np.abs(mesh.centers))
    ref = ref / ref.max()
    return float(np.max(np.abs(rho / rho.max() - ref)))
