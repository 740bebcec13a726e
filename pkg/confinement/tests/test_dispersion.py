import numpy as np
from django.test import SimpleTestCase

from confinement.dispersion import (beta_quadratic_residual, closed_form_alpha, closed_form_dispersion,
                                    dispersion_function, dispersion_slope, dispersion_sweep,
                                    profile_identity_residual, solve_alpha, zero_mean_flux)
from confinement.exceptions import ConfigError
from confinement.grids import make_custom_kernel, make_kernel, make_velocity_grid


class DispersionTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.grid = make_velocity_grid(16)
        cls.result = solve_alpha(make_kernel(0.5, cls.grid))

    def test_matches_closed_form_root(self):
        self.assertLess(abs(self.result.alpha - closed_form_alpha(0.5)), 1e-10)

    def test_alpha_is_a_root(self):
        self.assertLess(abs(dispersion_function(self.result.alpha, self.result.kernel) - 1.0), 1e-13)
        self.assertLess(self.result.alpha, self.result.alpha_max)

    def test_profile_identities(self):
        self.assertLess(profile_identity_residual(self.result), 1e-12)
        self.assertLess(abs(zero_mean_flux(self.result)), 1e-12)
        k = self.result.kernel.kplus
        self.assertAlmostEqual(np.sum(self.grid.weights * k * self.result.G), 1.0, places=13)
        self.assertTrue(np.all(self.result.G > 0))

    def test_beta_solves_its_quadratic(self):
        self.assertGreater(self.result.beta, 0.0)
        self.assertGreater(self.result.kappa, 0.0)
        self.assertLess(abs(beta_quadratic_residual(self.result)), 1e-12)

    def test_small_chi_approaches_weak_bias_rate(self):
        alpha = solve_alpha(make_kernel(0.01, self.grid)).alpha
        self.assertLessEqual(abs(alpha / 0.03 - 1.0), 0.02)

    def test_alpha_outside_admissible_range(self):
        with self.assertRaises(ConfigError):
            dispersion_function(self.result.alpha_max, self.result.kernel)
        with self.assertRaises(ConfigError):
            dispersion_function(-0.1, self.result.kernel)

    def test_closed_form_at_zero(self):
        self.assertEqual(closed_form_dispersion(0.0, 0.3), 1.0)

    def test_sweep_keeps_order(self):
        rows = dispersion_sweep([0.1, 0.3, 0.5], self.grid)
        self.assertEqual([row['chi'] for row in rows], [0.1, 0.3, 0.5])
        alphas = [row['alpha'] for row in rows]
        self.assertEqual(alphas, sorted(alphas))
        self.assertAlmostEqual(rows[-1]['alpha'], self.result.alpha, places=12)


class DispersionFunctionOracleTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.kernel = make_kernel(0.5, make_velocity_grid(16))

    def test_slope_at_zero(self):
        h = 1e-5
        J = lambda a: dispersion_function(a, self.kernel)
        slope = (-3.0 * J(0.0) + 4.0 * J(h) - J(2.0 * h)) / (2.0 * h)
        self.assertAlmostEqual(slope, -1.0 / 6.0, delta=1e-8)
        self.assertAlmostEqual(dispersion_slope(0.0, self.kernel), -1.0 / 6.0, delta=1e-12)

    def test_value_at_alpha_one_matches_closed_form(self):
        value = dispersion_function(1.0, self.kernel)
        self.assertAlmostEqual(value, closed_form_dispersion(1.0, 0.5), places=10)
        self.assertAlmostEqual(value, 0.955, places=3)

    def test_profile_jumps_across_zero_velocity(self):
        errors = []
        for n_half in (8, 16, 32):
            result = solve_alpha(make_kernel(0.5, make_velocity_grid(n_half)))
            ratio = result.G[n_half] / result.G[n_half - 1]
            errors.append(abs(ratio - 0.5 / 1.5))
        self.assertEqual(errors, sorted(errors, reverse=True))
        self.assertLess(errors[-1], 1e-2)


class MidpointConvergenceTests(SimpleTestCase):

    def test_alpha_converges_under_refinement(self):
        exact = closed_form_alpha(0.5)
        errors = [abs(solve_alpha(make_kernel(0.5, make_velocity_grid(n, rule='midpoint'))).alpha - exact)
                  for n in (4, 8, 16)]
        self.assertEqual(errors, sorted(errors, reverse=True))
        self.assertGreater(errors[1] / errors[2], 2.5)

    def test_biased_kernel_moment_is_cauchy(self):
        moments = []
        for n in (2, 4, 8, 16):
            grid = make_velocity_grid(n, rule='midpoint')
            values = 1.0 + 0.3 * np.sign(grid.nodes) + 0.1 * grid.nodes
            moments.append(make_custom_kernel(grid, values).h3_integral)
        steps = np.abs(np.diff(moments))
        self.assertTrue(np.all(steps[1:] < steps[:-1]))
        self.assertGreater(steps[-2] / steps[-1], 3.0)
        self.assertLess(moments[-1], 0.0)
