import numpy as np
from django.test import SimpleTestCase

from confinement.dispersion import solve_alpha
from confinement.exceptions import ConfigError
from confinement.grids import make_box_mesh, make_kernel, make_velocity_grid
from confinement.hypo import (assemble, entropy_probe, entropy_trajectory, equilibrium_gap, identity_checks,
                              kernel_dimension, macroscopic_coercivity_estimate, microscopic_coercivity_check, pseudo_inverse,
                              rho_tf_residual, second_moment, simplified_macro_generator, solve_collision)
from confinement.kinetic import make_initial
from confinement.milne import compute_stationary


class OperatorLabTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        dispersion = solve_alpha(make_kernel(0.5, make_velocity_grid(3)))
        cls.state, _ = compute_stationary(dispersion, nx=60)
        cls.ops = assemble(cls.state, make_box_mesh(3.0, 20))
        cls.rng = np.random.default_rng(7)

    def test_dimensions(self):
        self.assertEqual(self.ops.dimension, 120)
        for M in (self.ops.L, self.ops.T, self.ops.Pi, self.ops.generator):
            self.assertEqual(M.shape, (120, 120))

    def test_identity_suite_passes(self):
        checks = identity_checks(self.ops, rng=3)
        failed = [(c.name, c.residual) for c in checks if not c.passed]
        self.assertEqual(failed, [])
        names = {c.name for c in checks}
        self.assertIn('PiTPi', names)
        self.assertIn('rho_Tf_flux_divergence', names)

    def test_generator_splits_into_symmetric_part_and_minus_t(self):
        ops = self.ops
        S = ops.generator + ops.T
        np.testing.assert_allclose(ops.adjoint(S), S, atol=1e-10 * np.abs(S).max())

    def test_equilibrium_is_the_milne_state(self):
        np.testing.assert_array_equal(self.ops.g, self.state.on_mesh(self.ops.mesh).g)

    def test_velocity_average_of_t_is_the_centred_flux_divergence(self):
        for _ in range(3):
            f = self.ops.random_field(self.rng, mass_zero=False)
            self.assertLess(rho_tf_residual(self.ops, f), 1e-9)

    def test_transport_of_a_macroscopic_field(self):
        ops = self.ops
        x, dx = ops.mesh.centers, ops.mesh.dx
        c = 1.0 + 0.3 * np.sin(x)
        f = (c[:, None] * ops.g).ravel()
        padded = np.concatenate([[c[0]], c, [c[-1]]])
        dc = (padded[2:] - padded[:-2]) / (2.0 * dx)
        expected = ops.grid.nodes[None, :] * ops.g * dc[:, None]
        Tf = np.reshape(ops.T @ f, ops.g.shape)
        np.testing.assert_allclose(Tf, expected, atol=1e-9 * np.abs(expected).max())

    def test_generator_conserves_mass_and_dissipates_the_weighted_norm(self):
        ops = self.ops
        for _ in range(3):
            f = ops.random_field(self.rng, mass_zero=False)
            Gf = ops.generator @ f
            self.assertLess(abs(ops.mass(Gf)), 1e-10 * abs(ops.mass(np.abs(f))))
            self.assertLessEqual(ops.inner(Gf, f), 1e-12 * ops.inner(f, f))

    def test_kernel_of_l_is_one_per_cell(self):
        self.assertEqual(kernel_dimension(self.ops), 20)

    def test_microscopic_coercivity(self):
        micro = microscopic_coercivity_check(self.ops)
        self.assertTrue(micro.passed)
        self.assertGreaterEqual(micro.min_eigenvalue, -1e-10)

    def test_macroscopic_coercivity_is_positive(self):
        self.assertGreater(macroscopic_coercivity_estimate(self.ops), 0.0)

    def test_pseudo_inverse_solves_l(self):
        ops = self.ops
        h = ops.random_field(self.rng, mass_zero=False)
        h = h - ops.Pi @ h
        f = solve_collision(ops, h)
        self.assertLess(ops.norm(ops.L @ f - h), 1e-10 * ops.norm(h))
        avg = np.reshape(f, ops.g.shape) @ ops.grid.weights
        self.assertLess(np.abs(avg).max(), 1e-12 * np.abs(f).max())

    def test_pseudo_inverse_rejects_inadmissible_data(self):
        ops = self.ops
        K = ops.kernel.rates(ops.mesh.centers)
        with self.assertRaises(ConfigError):
            pseudo_inverse(ops.g, ops.g, K, ops.grid.weights)

    def test_auxiliary_operator_bounds(self):
        probe = entropy_probe(self.ops, 0.1, rng=5)
        self.assertLessEqual(probe.norms['A'], 0.5 + 1e-9)
        self.assertLessEqual(probe.norms['TA'], 1.0 + 1e-9)
        self.assertTrue(probe.atpi_passed)

    def test_entropy_epsilon_range(self):
        for eps in (0.0, 1.0):
            with self.assertRaises(ConfigError):
                entropy_probe(self.ops, eps)

    def test_entropy_decreases_along_the_flow(self):
        ops = self.ops
        probe = entropy_probe(ops, 0.1, rng=5)
        f0 = make_initial('twobump', ops.mesh, ops.grid).ravel()
        trajectory = entropy_trajectory(ops, probe, f0, np.linspace(0.0, 20.0, 41))
        self.assertTrue(trajectory.monotone)
        self.assertLess(trajectory.H[-1], trajectory.H[0])
        self.assertGreater(trajectory.rate, 0.0)

    def test_trajectory_needs_uniform_times(self):
        ops = self.ops
        probe = entropy_probe(ops, 0.1, rng=5)
        with self.assertRaises(ConfigError):
            entropy_trajectory(ops, probe, ops.g_flat, [0.0, 1.0, 3.0])

    def test_macro_generator_conserves_mass(self):
        M = simplified_macro_generator(self.ops)
        self.assertEqual(M.shape, (20, 20))
        self.assertLess(np.abs(M.sum(axis=0)).max(), 1e-8 * np.abs(M).max())
        self.assertTrue(np.all(second_moment(self.ops) > 0))

    def test_refuses_oversized_problems(self):
        with self.assertRaises(ConfigError):
            assemble(self.state, make_box_mesh(3.0, 5000))


class EquilibriumGapTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        dispersion = solve_alpha(make_kernel(0.5, make_velocity_grid(3)))
        cls.state, _ = compute_stationary(dispersion, nx=100)

    def test_upwind_equilibrium_approaches_the_milne_state_at_first_order(self):
        gaps = [equilibrium_gap(self.state, make_box_mesh(6.0, nx)) for nx in (30, 60, 120)]
        self.assertTrue(np.all(np.diff(gaps) < 0))
        # halving dx at least roughly halves the first-order part on top of the wall layer
        self.assertLess(gaps[2], 0.75 * gaps[0])
