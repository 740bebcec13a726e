import numpy as np
from django.test import SimpleTestCase

from confinement.exceptions import ConfigError, HypothesisError
from confinement.grids import (make_box_mesh, make_custom_kernel, make_half_line_mesh, make_kernel,
                               make_two_speed_grid, make_velocity_grid)


class VelocityGridTests(SimpleTestCase):

    def test_gauss_grid_is_mirrored_and_normalized(self):
        grid = make_velocity_grid(8)
        self.assertEqual(grid.size, 16)
        self.assertAlmostEqual(grid.weights.sum(), 1.0, places=14)
        np.testing.assert_array_equal(grid.nodes[grid.pair], -grid.nodes)
        np.testing.assert_array_equal(grid.weights[grid.pair], grid.weights)
        self.assertTrue(np.all(np.abs(grid.nodes) < 0.5))
        self.assertTrue(np.all(grid.nodes[:8] < 0))

    def test_gauss_rule_integrates_even_polynomials_exactly(self):
        grid = make_velocity_grid(6)
        # mean of v^2 and v^4 over [-1/2, 1/2]
        self.assertAlmostEqual(grid.integrate(grid.nodes ** 2), 1.0 / 12.0, places=14)
        self.assertAlmostEqual(grid.integrate(grid.nodes ** 4), 1.0 / 80.0, places=14)
        self.assertAlmostEqual(grid.integrate(np.abs(grid.nodes)), 0.25, places=14)

    def test_midpoint_rule_has_uniform_weights(self):
        grid = make_velocity_grid(5, rule='midpoint')
        np.testing.assert_allclose(grid.weights, 0.1)

    def test_bad_grid_arguments(self):
        with self.assertRaises(ConfigError):
            make_velocity_grid(0)
        with self.assertRaises(ConfigError):
            make_velocity_grid(4, rule='simpson')

    def test_two_speed_grid(self):
        grid = make_two_speed_grid()
        np.testing.assert_array_equal(grid.nodes, [-1.0, 1.0])
        self.assertEqual(grid.weights.sum(), 1.0)


class MeshTests(SimpleTestCase):

    def test_box_mesh_is_mirror_symmetric(self):
        mesh = make_box_mesh(3.0, 30)
        np.testing.assert_array_equal(mesh.centers, -mesh.centers[mesh.mirror])
        self.assertAlmostEqual(mesh.dx, 0.2)
        self.assertEqual(mesh.edges[0], -3.0)
        self.assertEqual(mesh.edges[-1], 3.0)

    def test_half_line_mesh(self):
        mesh = make_half_line_mesh(2.0, 8)
        self.assertEqual(mesh.kind, 'half')
        self.assertAlmostEqual(mesh.centers[0], 0.125)
        with self.assertRaises(ConfigError):
            mesh.mirror

    def test_bad_extent(self):
        with self.assertRaises(ConfigError):
            make_box_mesh(-1.0, 10)
        with self.assertRaises(ConfigError):
            make_half_line_mesh(1.0, 1)


class KernelTests(SimpleTestCase):

    def setUp(self):
        self.grid = make_velocity_grid(4)

    def test_sign_kernel_values(self):
        kernel = make_kernel(0.5, self.grid)
        np.testing.assert_allclose(kernel.kplus, np.where(self.grid.nodes > 0, 1.5, 0.5))
        np.testing.assert_array_equal(kernel.kminus, kernel.kplus[self.grid.pair])
        self.assertEqual((kernel.kmin, kernel.kmax), (0.5, 1.5))
        self.assertLess(kernel.h3_integral, 0.0)

    def test_rates_pick_the_side_of_x(self):
        kernel = make_kernel(0.25, self.grid)
        rates = kernel.rates(np.array([-1.0, 0.0, 2.0]))
        np.testing.assert_array_equal(rates[0], kernel.kminus)
        np.testing.assert_allclose(rates[1], 1.0)
        np.testing.assert_array_equal(rates[2], kernel.kplus)

    def test_chi_outside_unit_interval(self):
        for chi in (0.0, 1.0, -0.2):
            with self.assertRaises(ConfigError):
                make_kernel(chi, self.grid)

    def test_anti_confining_kernel_fails_h3(self):
        values = 1.0 - 0.5 * np.sign(self.grid.nodes)
        with self.assertRaises(HypothesisError) as cm:
            make_custom_kernel(self.grid, values)
        self.assertEqual(cm.exception.hypothesis, 'H3')

    def test_interior_jump_fails_h4(self):
        values = 1.0 + 0.5 * np.sign(self.grid.nodes)
        values[-1] = 5.0
        with self.assertRaises(HypothesisError) as cm:
            make_custom_kernel(self.grid, values)
        self.assertEqual(cm.exception.hypothesis, 'H4')

    def test_nonpositive_kernel(self):
        values = np.where(self.grid.nodes > 0, 1.0, 0.0)
        with self.assertRaises(ConfigError):
            make_custom_kernel(self.grid, values)

    def test_custom_kernel_reproduces_the_sign_kernel(self):
        grid = make_velocity_grid(16)
        sign = make_kernel(0.5, grid)
        custom = make_custom_kernel(grid, sign.kplus)
        np.testing.assert_array_equal(custom.kplus, sign.kplus)
        np.testing.assert_array_equal(custom.kminus, sign.kminus)
        self.assertIsNone(custom.chi)
        # sum w v / K+ = -chi / (4 (1 - chi^2))
        self.assertAlmostEqual(custom.h3_integral, -1.0 / 6.0, delta=1e-12)

    def test_smooth_biased_kernel_is_accepted(self):
        values = 1.0 + 0.3 * np.sign(self.grid.nodes) + 0.1 * self.grid.nodes
        kernel = make_custom_kernel(self.grid, values)
        np.testing.assert_allclose(kernel.kplus, values)
        np.testing.assert_allclose(kernel.kminus, 1.0 - 0.3 * np.sign(self.grid.nodes) - 0.1 * self.grid.nodes)
        self.assertLess(kernel.h3_integral, 0.0)
