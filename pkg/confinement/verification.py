# confinement/verification.py

"""
The acceptance suite behind `verify_all`. Each check returns the measured
value, the threshold it is held to and a verdict; the suite collects them
into one table. A numerical abort inside a check fails that check and the
suite carries on; an invalid configuration stops everything.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import pandas as pd

from . import artifacts
from .dispersion import closed_form_alpha, profile_identity_residual, zero_mean_flux
from .exceptions import NumericalError
from .grids import make_box_mesh
from .hypo import (entropy_probe, entropy_trajectory, equilibrium_gap, identity_checks,
                   macroscopic_coercivity_estimate, microscopic_coercivity_check)
from .kinetic import evolve, make_initial
from .macro import (cattaneo_gap, cattaneo_relax, cattaneo_steady, diffusivity, reconstructed_diffusivity,
                    steady_state, tail_slope, weak_bias_error, weak_bias_problem)
from .milne import BOUNDARY_FLUX_TOL, decay_diagnostics, defect_improves, maximum_principle_battery
from .pipelines import (CATTANEO_DX, CATTANEO_FLUX_TOL, CATTANEO_GAP_TOL, build_dispersion, build_operators,
                        build_stationary, pseudo_inverse_residual, refine_stationary)

logger = logging.getLogger(__name__)

COLUMNS = ['number', 'check', 'value', 'threshold', 'passed', 'seconds', 'note']


@dataclass(frozen=True)
class CheckResult:
    number: int
    name: str
    value: float
    threshold: float
    passed: bool
    seconds: float = 0.0
    note: str = ''

    def row(self):
        return [self.number, self.name, self.value, self.threshold, self.passed, self.seconds, self.note]


class SuiteContext:
    """ Objects shared between checks, built on first use. """

    def __init__(self, config):
        self.config = config

    @cached_property
    def dispersion(self):
        return build_dispersion(self.config)

    @cached_property
    def stationary(self):
        return build_stationary(self.config, self.dispersion)

    @cached_property
    def operators(self):
        return build_operators(self.config)

    @cached_property
    def lambda_M(self):
        return macroscopic_coercivity_estimate(self.operators)


# --- Checks: each returns (value, threshold, passed[, note]) ---

def check_dispersion_oracle(ctx):
    result = ctx.dispersion
    gap = abs(result.alpha - closed_form_alpha(ctx.config.chi))
    return gap, 1e-10, gap <= 1e-10


def check_small_chi(ctx):
    result = build_dispersion(ctx.config.replace(chi=0.01))
    ratio = result.alpha / 0.03
    return ratio, 0.02, abs(ratio - 1.0) <= 0.02


def check_profile_identities(ctx):
    result = ctx.dispersion
    value = max(profile_identity_residual(result), abs(zero_mean_flux(result)))
    return value, 1e-12, value <= 1e-12


def check_krein_rutman(ctx):
    solver, eigen, state = ctx.stationary
    nx, n_half, length, fine = refine_stationary(ctx.config, solver)
    flux_ok = abs(state.boundary_flux) < BOUNDARY_FLUX_TOL
    passed = eigen.defect < 1e-4 and defect_improves(eigen, fine) and flux_ok
    note = (f"refined (nx={nx}, n_half={n_half}, L={length:.4g}) defect {fine.defect:.3e}; "
            f"boundary flux {state.boundary_flux:.3e}")
    return eigen.defect, 1e-4, passed, note


def check_maximum_principle(ctx):
    solver, _, _ = ctx.stationary
    rows = maximum_principle_battery(solver, count=10, seed=ctx.config.seed, n_jobs=ctx.config.n_jobs)
    slack = 1e-10 * rows[:, 1].max()
    overshoot = float(max(np.max(rows[:, 0] - rows[:, 2]), np.max(rows[:, 3] - rows[:, 1]), 0.0))
    return overshoot, slack, overshoot <= slack, f"{len(rows)} inflows"


def check_milne_decay(ctx):
    _, _, state = ctx.stationary
    beta = ctx.dispersion.beta
    decay = decay_diagnostics(state.milne, ctx.dispersion)
    if decay.degenerate:
        return 0.0, beta, True, "E(x) at round-off on the whole window"
    passed = decay.fitted_rate >= beta and decay.r2 > 0.99 and decay.bounded
    return decay.fitted_rate, beta, passed, f"R2 {decay.r2:.5f}, C0 {decay.C0:.4e}"


def check_cattaneo(ctx):
    worst = gap = 0.0
    for chi in (0.25, 0.5):
        mesh = make_box_mesh(ctx.config.box_L, int(np.ceil(2.0 * ctx.config.box_L / CATTANEO_DX)))
        run = cattaneo_relax(chi, mesh, np.ones(mesh.size), np.ones(mesh.size), tol=CATTANEO_FLUX_TOL)
        fit = tail_slope(mesh.centers, run.f_plus)
        worst = max(worst, abs(fit.slope / (-2.0 * chi) - 1.0))
        gap = max(gap, cattaneo_gap(run, cattaneo_steady(chi, mesh)))
    note = f"gap to the direct steady state {gap:.2e}"
    return worst, 0.02, worst <= 0.02 and gap <= CATTANEO_GAP_TOL, note


def check_weak_bias(ctx):
    mesh = make_box_mesh(ctx.config.box_L, ctx.config.nx)
    rho = steady_state(weak_bias_problem(mesh, ctx.config.chi, rescaled=True))
    error = weak_bias_error(rho, mesh)
    return error, 5.0 * mesh.dx, error <= 5.0 * mesh.dx


def check_kinetic_relaxation(ctx):
    config = ctx.config
    _, _, state = ctx.stationary
    dispersion = ctx.dispersion
    mesh = make_box_mesh(config.box_L, config.nx)
    g = state.on_mesh(mesh).g
    f0 = make_initial('uniform', mesh, dispersion.grid, g=g)
    _, relax = evolve(f0, config.t_end, g, dispersion.kernel, mesh, cfl=config.cfl, scheme=config.scheme)
    passed = (relax.mass_drift < 1e-11 and np.isfinite(relax.lambda_fit) and relax.lambda_fit > 0
              and relax.fit_r2 > 0.99)
    note = (f"lambda {relax.lambda_fit:.4e}, R2 {relax.fit_r2:.5f}, fitted on d_{relax.fit_series}, "
            f"floor {relax.distance[-1]:.3e}")
    return relax.mass_drift, 1e-11, passed, note


def check_operator_identities(ctx):
    ops = ctx.operators
    rng = np.random.default_rng(ctx.config.seed)
    failed = [c.name for c in identity_checks(ops, rng=rng) if not c.passed]
    micro = microscopic_coercivity_check(ops)
    if not micro.passed:
        failed.append('microscopic_coercivity')
    pinv = pseudo_inverse_residual(ops, rng)
    if pinv > 1e-10:
        failed.append('pseudo_inverse')
    refined = equilibrium_gap(ops.state, make_box_mesh(ctx.config.hypo_L, 2 * ctx.config.hypo_nx))
    if not refined < ops.equilibrium_gap:
        failed.append('equilibrium_gap')
    note = ', '.join(failed) if failed else f"coercivity ratio {micro.ratio:.4f}"
    return float(len(failed)), 0.0, not failed, note


def check_diffusivity(ctx):
    _, _, state = ctx.stationary
    profile = diffusivity(state)
    recon = reconstructed_diffusivity(state)
    gap = float(np.max(np.abs(recon - profile.D)) / np.max(profile.D))
    passed = gap <= 1e-9 and profile.formula_gap <= 1e-12
    return gap, 1e-9, passed, f"variance-form gap {profile.formula_gap:.3e}"


def check_modified_entropy(ctx):
    ops = ctx.operators
    rng = np.random.default_rng(ctx.config.seed)
    probe = entropy_probe(ops, ctx.config.entropy_epsilon, lambda_M=ctx.lambda_M, rng=rng, n_random=20)
    f0 = make_initial('twobump', ops.mesh, ops.grid).ravel()
    trajectory = entropy_trajectory(ops, probe, f0, np.linspace(0.0, 40.0, 81))
    passed = trajectory.monotone and probe.atpi_passed
    note = f"<ATPi f,f>/|Pi f|^2 >= {probe.atpi_ratio:.4e}, bound {probe.atpi_bound:.4e}"
    return float(np.max(np.diff(trajectory.H))), 0.0, passed, note


CHECKS = [
    (1, 'dispersion_oracle', check_dispersion_oracle),
    (2, 'small_chi_asymptotics', check_small_chi),
    (3, 'profile_identities', check_profile_identities),
    (4, 'krein_rutman_eigenvalue', check_krein_rutman),
    (5, 'milne_maximum_principle', check_maximum_principle),
    (6, 'milne_decay', check_milne_decay),
    (7, 'cattaneo_oracle', check_cattaneo),
    (8, 'weak_bias_oracle', check_weak_bias),
    (9, 'kinetic_relaxation', check_kinetic_relaxation),
    (10, 'operator_identities', check_operator_identities),
    (11, 'diffusivity_cross_check', check_diffusivity),
    (12, 'modified_entropy', check_modified_entropy),
]


def run_check(number, name, check, ctx):
    start = time.perf_counter()
    try:
        value, threshold, passed, *rest = check(ctx)
        note = rest[0] if rest else ''
    except NumericalError as exc:
        logger.error("check %d (%s) aborted: %s", number, name, exc)
        value, threshold, passed, note = np.nan, np.nan, False, f"{type(exc).__name__}: {exc}"
    seconds = time.perf_counter() - start
    result = CheckResult(number=number, name=name, value=float(value), threshold=float(threshold),
                         passed=bool(passed), seconds=seconds, note=note)
    logger.info("[%2d] %-26s %s (%.3e vs %.3e, %.1fs)", number, name, 'PASS' if result.passed else 'FAIL',
                result.value, result.threshold, seconds)
    return result


def run_suite(config, only=None):
    """ Run the checks (all of them, or the numbers in `only`) and return them as a DataFrame. """
    ctx = SuiteContext(config)
    selected = [entry for entry in CHECKS if only is None or entry[0] in only]
    results = [run_check(number, name, check, ctx) for number, name, check in selected]
    return pd.DataFrame([r.row() for r in results], columns=COLUMNS)


def run_verify_all(config, directory, only=None):
    table = run_suite(config, only=only)
    # wall-clock timings stay out of the CSV
    artifacts.write_csv(directory / 'acceptance.csv', table.drop(columns=['seconds']), config, 'verify_all')
    report = {f"{row.number:02d}_{row.check}": 'PASS' if row.passed else 'FAIL' for row in table.itertuples()}
    report['passed'] = int(table['passed'].sum())
    report['total'] = len(table)
    return report, bool(table['passed'].all())
