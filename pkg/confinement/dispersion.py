# confinement/dispersion.py

"""
The dispersion relation J(alpha) = 1 fixing the spatial decay exponent of
the stationary state, the asymptotic velocity profile G, and the decay
constants kappa and beta of the Milne problem.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from scipy.optimize import brentq

from .exceptions import BracketError, ConfigError, NumericalError
from .grids import KernelSpec, make_kernel

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DispersionResult:
    alpha: float
    G: np.ndarray
    alpha_max: float
    kappa: float
    beta: float
    kernel: KernelSpec
    J_residual: float = 0.0

    @property
    def grid(self):
        return self.kernel.grid


def admissible_alpha_max(kernel):
    """
    inf_{v>0} K+(v)/v. The continuum infimum sits at v = 1/2 for the kernels
    handled here; K+(1/2) is taken from the outermost node. The node-wise
    minimum is folded in so that K+ - alpha v > 0 holds at every node.
    """
    grid = kernel.grid
    pos = grid.positive
    node_bound = np.min(kernel.kplus[pos] / grid.nodes[pos])
    edge_bound = kernel.kplus[pos][-1] / 0.5
    return float(min(node_bound, edge_bound))


def dispersion_function(alpha, kernel, grid=None):
    """ J(alpha) = sum_j w_j K+_j / (K+_j - alpha v_j). """
    grid = grid or kernel.grid
    alpha_max = admissible_alpha_max(kernel)
    if not 0.0 <= alpha < alpha_max:
        raise ConfigError(f"alpha={alpha!r} outside the admissible range [0, {alpha_max:.6g})")
    k = kernel.kplus
    return float(np.sum(grid.weights * k / (k - alpha * grid.nodes)))


def dispersion_slope(alpha, kernel, grid=None):
    grid = grid or kernel.grid
    k = kernel.kplus
    return float(np.sum(grid.weights * k * grid.nodes / (k - alpha * grid.nodes) ** 2))


def _bracket(kernel, grid, alpha_max):
    J = lambda a: dispersion_function(a, kernel, grid)

    lo = alpha_max / 2.0
    for _ in range(200):
        if J(lo) < 1.0:
            break
        lo /= 2.0
    else:
        raise BracketError("J stays >= 1 near alpha = 0; J'(0) is not negative on this grid")

    hi = alpha_max / 2.0
    k = 1
    while J(hi) <= 1.0:
        k += 1
        if k > 60:
            raise BracketError(
                f"J stays below 1 up to alpha_max={alpha_max:.6g}; the kernel is not confining enough on this grid"
            )
        hi = alpha_max * (1.0 - 2.0 ** (-k))
    if hi <= lo:
        lo = hi / 2.0
        while J(lo) >= 1.0:
            lo /= 2.0
    return lo, hi


def solve_alpha(kernel, grid=None, tol=1e-13):
    grid = grid or kernel.grid
    alpha_max = admissible_alpha_max(kernel)
    lo, hi = _bracket(kernel, grid, alpha_max)

    f = lambda a: dispersion_function(a, kernel, grid) - 1.0
    alpha = brentq(f, lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=500)
    # one Newton polish
    step = f(alpha) / dispersion_slope(alpha, kernel, grid)
    if lo < alpha - step < hi:
        alpha -= step

    residual = abs(f(alpha))
    if residual >= max(tol, 1e-15):
        raise NumericalError(f"dispersion root not resolved: |J(alpha)-1| = {residual:.3e} > {tol:.1e}")

    delta = 10.0 * tol
    if alpha + delta < alpha_max and not (f(alpha - delta) < 0.0 < f(alpha + delta)):
        raise NumericalError(f"root at alpha={alpha:.15g} does not change sign within +-{delta:.1e}")

    k = kernel.kplus
    G = 1.0 / (k - alpha * grid.nodes)
    G = G / np.sum(grid.weights * k * G)
    G.setflags(write=False)

    v2 = grid.nodes ** 2
    # inf over V approximated by the node minimum; it sits at |v| -> 1/2
    ratio = np.min(k / (v2 * G))
    kappa = float(ratio ** 2 * np.sum(grid.weights * v2 * G ** 2))
    beta = -alpha + math.sqrt(alpha ** 2 + 4.0 * kappa)

    logger.info("dispersion solved: alpha=%.15g kappa=%.6g beta=%.6g", alpha, kappa, beta)
    return DispersionResult(alpha=float(alpha), G=G, alpha_max=alpha_max,
                            kappa=kappa, beta=float(beta), kernel=kernel, J_residual=residual)


def profile_identity_residual(result, kernel=None, grid=None):
    """ max_j |(K+_j - alpha v_j) G_j - sum w K+ G|. """
    kernel = kernel or result.kernel
    grid = grid or kernel.grid
    k = kernel.kplus
    mass = np.sum(grid.weights * k * result.G)
    return float(np.max(np.abs((k - result.alpha * grid.nodes) * result.G - mass)))


def zero_mean_flux(result):
    grid = result.grid
    return float(np.sum(grid.weights * grid.nodes * result.G))


def beta_quadratic_residual(result):
    b, a = result.beta, result.alpha
    return 0.5 * b * b + a * b - 2.0 * result.kappa


# --- Closed form for the sign kernel ---

def closed_form_dispersion(alpha, chi):
    """ J(alpha) for K = 1 + chi sign(xv) integrated exactly over V. """
    if alpha == 0.0:
        return 1.0
    up = (1.0 + chi) / alpha * -math.log1p(-alpha / (2.0 * (1.0 + chi)))
    down = (1.0 - chi) / alpha * math.log1p(alpha / (2.0 * (1.0 - chi)))
    return up + down


def closed_form_alpha(chi):
    alpha_max = 2.0 * (1.0 + chi)
    lo = alpha_max * 1e-6
    hi = alpha_max * (1.0 - 1e-12)
    f = lambda a: closed_form_dispersion(a, chi) - 1.0
    if not f(lo) < 0.0 < f(hi):
        raise BracketError(f"closed-form dispersion relation not bracketed for chi={chi}")
    return brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def dispersion_sweep(chis, grid, tol=1e-13, n_jobs=1):
    """ Solve the sign-kernel dispersion relation for several chi values. """

    def one(chi):
        res = solve_alpha(make_kernel(chi, grid), grid, tol)
        return {'chi': chi, 'alpha': res.alpha, 'kappa': res.kappa, 'beta': res.beta,
                'alpha_over_3chi': res.alpha / (3.0 * chi)}

    return Parallel(n_jobs=n_jobs)(delayed(one)(chi) for chi in chis)
