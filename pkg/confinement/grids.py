# confinement/grids.py

"""
Discretization primitives: the velocity quadrature on V = [-1/2, 1/2],
spatial meshes for the Milne half-line and the reflecting box, and the
turning kernel with its hypothesis checks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .exceptions import ConfigError, HypothesisError

logger = logging.getLogger(__name__)

RULES = ('gauss', 'midpoint')

# Largest relative jump tolerated between neighbouring nodes of one half.
INTERIOR_JUMP_TOL = 0.25


@dataclass(frozen=True, eq=False)
class VelocityGrid:
    """
    Symmetric quadrature split at v = 0. Nodes are ordered so that the
    negative half comes first, mirrored: nodes[pair[j]] == -nodes[j].
    """
    nodes: np.ndarray
    weights: np.ndarray
    n_half: int
    rule: str

    @property
    def size(self):
        return self.nodes.size

    @property
    def pair(self):
        return np.arange(self.size)[::-1]

    @property
    def positive(self):
        return self.nodes > 0

    @property
    def negative(self):
        return self.nodes < 0

    def integrate(self, values, axis=-1):
        """ Sum of w_j * values along the velocity axis. """
        return np.tensordot(values, self.weights, axes=([axis], [0]))


def make_velocity_grid(n_half, rule='gauss'):
    if int(n_half) != n_half or n_half < 1:
        raise ConfigError(f"n_half must be a positive integer, got {n_half!r}")
    if rule not in RULES:
        raise ConfigError(f"unknown quadrature rule {rule!r}; expected one of {RULES}")
    n_half = int(n_half)

    if rule == 'gauss':
        t, w = leggauss(n_half)
        # [-1, 1] -> [0, 1/2]
        pos = (t + 1.0) / 4.0
        wpos = w / 4.0
    else:
        pos = (np.arange(n_half) + 0.5) / (2.0 * n_half)
        wpos = np.full(n_half, 1.0 / (2.0 * n_half))

    nodes = np.concatenate([-pos[::-1], pos])
    weights = np.concatenate([wpos[::-1], wpos])
    weights = weights / weights.sum()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return VelocityGrid(nodes=nodes, weights=weights, n_half=n_half, rule=rule)


def make_two_speed_grid():
    """ Velocities -1 and +1, each with weight 1/2. """
    nodes = np.array([-1.0, 1.0])
    weights = np.full(2, 0.5)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return VelocityGrid(nodes=nodes, weights=weights, n_half=1, rule='two-speed')


@dataclass(frozen=True, eq=False)
class SpatialMesh:
    """ Uniform cell-centred mesh on a half-line [0, L] or a box [-L, L]. """
    centers: np.ndarray
    edges: np.ndarray
    dx: float
    kind: str
    length: float

    @property
    def size(self):
        return self.centers.size

    @property
    def mirror(self):
        """ Index of the cell at -x (box meshes only). """
        if self.kind != 'box':
            raise ConfigError("mirror indices exist only on a box mesh")
        return np.arange(self.size)[::-1]


def _check_extent(length, nx):
    if not np.isfinite(length) or length <= 0:
        raise ConfigError(f"domain length must be finite and positive, got {length!r}")
    if int(nx) != nx or nx < 2:
        raise ConfigError(f"cell count must be an integer >= 2, got {nx!r}")


def make_half_line_mesh(length, nx):
    _check_extent(length, nx)
    nx = int(nx)
    edges = np.linspace(0.0, length, nx + 1)
    dx = length / nx
    centers = (np.arange(nx) + 0.5) * dx
    return SpatialMesh(centers=centers, edges=edges, dx=dx, kind='half', length=float(length))


def make_box_mesh(length, nx):
    _check_extent(length, nx)
    nx = int(nx)
    edges = np.linspace(-length, length, nx + 1)
    edges = 0.5 * (edges - edges[::-1])
    centers = 0.5 * (edges[:-1] + edges[1:])
    # exact mirror symmetry (and an exact 0 when nx is odd)
    centers = 0.5 * (centers - centers[::-1])
    return SpatialMesh(centers=centers, edges=edges, dx=2.0 * length / nx, kind='box', length=float(length))


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """
    K(x, v) = kplus(v) for x > 0 and kminus(v) = kplus(-v) for x < 0,
    stored at the nodes of `grid`. `chi` is set for the sign kernel only.
    """
    grid: VelocityGrid
    kplus: np.ndarray
    kminus: np.ndarray
    kmin: float
    kmax: float
    chi: float | None = None
    h3_integral: float = field(default=0.0)

    def rates(self, x):
        """
        K at cell centres x (any shape) times nodes -> shape x.shape + (nv,).
        A centre exactly at x = 0 gets the mean of both sides.
        """
        s = np.sign(np.asarray(x, dtype=float))[..., None]
        return np.where(s > 0, self.kplus, np.where(s < 0, self.kminus, 0.5 * (self.kplus + self.kminus)))


def _validate(grid, kplus, chi=None):
    kplus = np.asarray(kplus, dtype=float)
    if kplus.shape != (grid.size,):
        raise ConfigError(f"kernel needs {grid.size} values, got shape {kplus.shape}")
    if not np.all(np.isfinite(kplus)) or np.any(kplus <= 0):
        raise HypothesisError('H1', "kernel values must be finite and strictly positive")

    # H4: piecewise continuous with a jump allowed only across v = 0
    for half in (kplus[grid.negative], kplus[grid.positive]):
        if half.size > 1:
            jumps = np.abs(np.diff(half)) / np.maximum(1.0, np.abs(half[:-1]))
            if jumps.max() > INTERIOR_JUMP_TOL:
                raise HypothesisError('H4', f"interior jump of relative size {jumps.max():.3g} inside a half-interval")

    kminus = kplus[grid.pair]
    h3 = float(np.sum(grid.weights * grid.nodes / kplus))
    if not h3 < 0:
        raise HypothesisError('H3', f"kernel is not confining: sum w v / K+ = {h3:.3e} must be negative")

    kplus = kplus.copy()
    kplus.setflags(write=False)
    kminus.setflags(write=False)
    spec = KernelSpec(grid=grid, kplus=kplus, kminus=kminus,
                      kmin=float(kplus.min()), kmax=float(kplus.max()),
                      chi=chi, h3_integral=h3)
    logger.debug("kernel validated: kmin=%g kmax=%g H3 integral=%.6e", spec.kmin, spec.kmax, h3)
    return spec


def make_kernel(chi, grid):
    """ The sign kernel K = 1 + chi*sign(x v). """
    chi = float(chi)
    if not 0.0 < chi < 1.0:
        raise ConfigError(f"chi must lie in (0, 1), got {chi!r}")
    kplus = 1.0 + chi * np.sign(grid.nodes)
    return _validate(grid, kplus, chi=chi)


def make_custom_kernel(grid, values):
    """ Kernel from its x > 0 values at the grid nodes; kminus follows from symmetry. """
    values = np.asarray(values, dtype=float)
    if values.shape == (grid.size,) and np.any(values <= 0):
        raise ConfigError("custom kernel values must all be positive")
    return _validate(grid, values)
