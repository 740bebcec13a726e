import numpy as np
from django.test import SimpleTestCase

from confinement.dispersion import solve_alpha
from confinement.exceptions import ConfigError
from confinement.grids import make_box_mesh, make_half_line_mesh, make_kernel, make_velocity_grid
from confinement.milne import (MilneSolver, assemble_stationary, barrier_residual, compute_stationary,
                               conservation_profiles, decay_diagnostics, default_milne_length, defect_improves,
                               krein_rutman, maximum_principle_battery, solve_milne, solve_milne_continuation,
                               trace_diagnostics)


def small_dispersion(chi=0.5, n_half=6):
    return solve_alpha(make_kernel(chi, make_velocity_grid(n_half)))


class MilneSolverTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.dispersion = small_dispersion()
        cls.mesh = make_half_line_mesh(default_milne_length(cls.dispersion), 80)
        cls.solver = MilneSolver(cls.dispersion, cls.mesh)

    def test_constant_inflow_stays_inside_bounds(self):
        phi = np.full(6, 0.7)
        solution = self.solver.solve(phi)
        self.assertLessEqual(solution.u.max(), 0.7 + 1e-10)
        self.assertGreaterEqual(solution.u.min(), 0.7 - 1e-10)

    def test_maximum_principle_battery(self):
        rows = maximum_principle_battery(self.solver, count=5, seed=3)
        self.assertEqual(rows.shape, (5, 4))
        self.assertTrue(np.all(rows[:, 2] >= rows[:, 0] - 1e-10))
        self.assertTrue(np.all(rows[:, 3] <= rows[:, 1] + 1e-10))

    def test_direct_and_iterated_solves_agree_with_absorption(self):
        solver = MilneSolver(self.dispersion, self.mesh, epsilon=0.3)
        phi = np.linspace(0.5, 1.5, 6)
        direct = solver.solve(phi, method='direct')
        iterated = solver.solve(phi, method='iterate', tol=1e-13)
        np.testing.assert_allclose(iterated.u, direct.u, atol=1e-10)

    def test_continuation_reaches_the_conservative_solution(self):
        mesh = make_half_line_mesh(3.0, 30)
        phi = np.linspace(0.5, 1.5, 6)
        direct = solve_milne(self.dispersion, mesh, phi)
        continued = solve_milne_continuation(self.dispersion, mesh, phi, epsilon0=0.5, steps=4, tol=1e-12,
                                             max_iter=200000)
        self.assertEqual(continued.epsilon, 0.0)
        np.testing.assert_allclose(continued.u, direct.u, atol=1e-7)

    def test_moment_is_a_fixed_point(self):
        for closure in ('balanced', 'collocation'):
            solver = MilneSolver(self.dispersion, self.mesh, closure=closure)
            solution = solver.solve(np.linspace(0.2, 1.0, 6))
            self.assertEqual(solution.closure, closure)
            self.assertEqual(solution.A.shape, (solver.n_moment,))
            self.assertLess(solution.residual, 1e-10)
            np.testing.assert_array_equal(solution.u[0, solver.positive], solution.inflow)

    def test_albedo_is_positive(self):
        out = self.solver.albedo(np.ones(6))
        self.assertEqual(out.shape, (6,))
        self.assertTrue(np.all(out > 0))

    def test_rejects_box_mesh_and_bad_inflow(self):
        with self.assertRaises(ConfigError):
            MilneSolver(self.dispersion, make_box_mesh(2.0, 10))
        with self.assertRaises(ConfigError):
            MilneSolver(self.dispersion, self.mesh, epsilon=-1.0)
        with self.assertRaises(ConfigError):
            MilneSolver(self.dispersion, self.mesh, closure='upwind')
        with self.assertRaises(ConfigError):
            self.solver.solve(np.ones(5))
        with self.assertRaises(ConfigError):
            self.solver.solve(np.ones(6), method='multigrid')

    def test_barrier_function_solves_the_milne_equation(self):
        self.assertLess(barrier_residual(self.dispersion), 1e-10)


class DuhamelSweepTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.dispersion = small_dispersion()
        cls.mesh = make_half_line_mesh(4.0, 40)

    def test_pure_attenuation_without_moment(self):
        eps = 0.4
        grid, G = self.dispersion.grid, self.dispersion.G
        phi = np.linspace(0.5, 1.5, 6)
        for closure in ('balanced', 'collocation'):
            solver = MilneSolver(self.dispersion, self.mesh, epsilon=eps, closure=closure)
            u = solver.sweep(np.zeros(solver.n_moment), phi)
            pos = grid.positive
            v = grid.nodes[pos]
            expected = np.exp(-np.outer(self.mesh.edges, (1.0 / G[pos] + eps) / v)) * phi
            np.testing.assert_allclose(u[:, pos], expected, rtol=1e-12, atol=1e-300)
            np.testing.assert_array_equal(u[:, grid.negative], 0.0)

    def test_constant_moment_and_inflow_give_a_constant_solution(self):
        for closure in ('balanced', 'collocation'):
            solver = MilneSolver(self.dispersion, self.mesh, closure=closure)
            u = solver.sweep(np.full(solver.n_moment, 0.7), np.full(6, 0.7))
            np.testing.assert_allclose(u, 0.7, rtol=1e-13)

    def test_single_sweep_moment_at_the_boundary(self):
        solver = MilneSolver(self.dispersion, self.mesh)
        u = solver.sweep(np.zeros(solver.n_moment), np.ones(6))
        expected = np.sum(solver.moment_weights[solver.positive])
        self.assertAlmostEqual(solver.moment(u)[0], expected, places=14)


class ConservationTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.dispersion = small_dispersion()
        cls.mesh = make_half_line_mesh(default_milne_length(cls.dispersion), 80)
        cls.solution = solve_milne(cls.dispersion, cls.mesh, np.linspace(0.2, 1.0, 6))
        cls.profiles = conservation_profiles(cls.solution, cls.dispersion)

    def test_damped_flux_is_the_same_on_every_edge(self):
        damped = self.profiles['damped_flux']
        self.assertLess(np.ptp(damped), 1e-13)
        self.assertLess(abs(self.profiles['zero_flux'][0]), 1e-10)

    def test_weighted_flux_is_alpha_times_the_second_moment(self):
        p = self.profiles
        np.testing.assert_allclose(p['weighted_flux'] - p['second_moment'], p['zero_flux'], atol=1e-13)

    def test_weighted_flux_is_nearly_constant(self):
        spread = np.ptp(self.profiles['weighted_flux'])
        self.assertLessEqual(spread, 10.0 * self.mesh.dx * np.abs(self.solution.u).max())

    def test_boundary_flux_vanishes_for_any_inflow(self):
        _, flux, _ = trace_diagnostics(self.solution, self.dispersion)
        self.assertLess(abs(flux), 1e-10)


class StationaryStateTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.dispersion = small_dispersion()
        cls.length = default_milne_length(cls.dispersion)
        cls.coarse = MilneSolver(cls.dispersion, make_half_line_mesh(cls.length, 60))
        cls.eigen = krein_rutman(cls.coarse)
        cls.state = assemble_stationary(cls.coarse, cls.eigen)

    def test_eigenvalue_close_to_one_and_does_not_degrade_under_refinement(self):
        self.assertLess(self.eigen.defect, 1e-6)
        fine = MilneSolver(small_dispersion(n_half=12), make_half_line_mesh(1.5 * self.length, 180))
        self.assertTrue(defect_improves(self.eigen, krein_rutman(fine)))

    def test_collocation_closure_carries_a_first_order_defect(self):
        solver = MilneSolver(self.dispersion, self.coarse.mesh, closure='collocation')
        defect = krein_rutman(solver).defect
        self.assertGreater(defect, 1e-3)
        self.assertGreater(defect, 100.0 * self.eigen.defect)

    def test_boundary_flux_vanishes_and_trace_is_reflection_symmetric(self):
        self.assertLess(abs(self.state.boundary_flux), 1e-10)
        self.assertLess(self.state.trace_asymmetry, 1e-8)

    def test_wrong_inflow_shows_in_the_trace_mismatch(self):
        milne = self.coarse.solve(np.linspace(0.1, 1.0, 6))
        _, _, asymmetry = trace_diagnostics(milne, self.dispersion)
        self.assertGreater(asymmetry, 1e-2)

    def test_eigenvector_is_reproduced_by_the_reflection_operator(self):
        image = self.coarse.b_operator(self.eigen.phi)
        np.testing.assert_allclose(image, self.eigen.eigenvalue * self.eigen.phi, rtol=1e-8)

    def test_eigenvector_is_positive(self):
        self.assertTrue(np.all(self.eigen.phi > 0))
        self.assertAlmostEqual(self.eigen.phi.max(), 1.0)

    def test_random_start_reaches_the_same_eigenvalue(self):
        other = krein_rutman(self.coarse, seed=11)
        self.assertAlmostEqual(other.eigenvalue, self.eigen.eigenvalue, places=8)

    def test_state_is_positive_and_reflection_symmetric(self):
        g = self.state.g
        self.assertTrue(np.all(g > 0))
        np.testing.assert_allclose(g[::-1, ::-1], g, rtol=1e-13)
        self.assertEqual(self.state.mesh.size, 120)
        self.assertGreaterEqual(self.state.sandwich, 1.0)

    def test_trace_constant_agrees_with_the_conserved_second_moment(self):
        decay = decay_diagnostics(self.state.milne, self.dispersion)
        self.assertAlmostEqual(self.state.H, decay.H_of_u, delta=self.coarse.mesh.dx * abs(self.state.H))

    def test_density_decays_away_from_the_origin(self):
        rho = self.state.density()
        half = rho[rho.size // 2:]
        self.assertTrue(np.all(np.diff(half[5:]) < 0))

    def test_resampling_on_another_box(self):
        other = self.state.on_mesh(make_box_mesh(3.0, 31))
        self.assertEqual(other.g.shape, (31, self.dispersion.grid.size))
        np.testing.assert_allclose(other.g[15], other.g[15, ::-1])

    def test_power_iteration_needs_positive_start(self):
        with self.assertRaises(ConfigError):
            krein_rutman(self.coarse, phi0=-np.ones(6))


class AcceptanceResolutionTests(SimpleTestCase):

    def test_eigenvalue_meets_the_acceptance_bound_on_the_default_grid(self):
        dispersion = small_dispersion(n_half=16)
        state, eigen = compute_stationary(dispersion, nx=400)
        self.assertAlmostEqual(state.milne.x[-1], 10.0 / dispersion.beta, delta=1e-9 / dispersion.beta)
        self.assertLess(eigen.defect, 1e-4)
        self.assertLess(abs(state.boundary_flux), 1e-10)
        self.assertLess(state.trace_asymmetry, 1e-6)


class DecayTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.dispersion = small_dispersion(n_half=8)
        solver = MilneSolver(cls.dispersion, make_half_line_mesh(default_milne_length(cls.dispersion), 200))
        cls.state = assemble_stationary(solver, krein_rutman(solver))
        cls.decay = decay_diagnostics(cls.state.milne, cls.dispersion)

    def test_fitted_rate_is_at_least_beta(self):
        self.assertFalse(self.decay.degenerate)
        self.assertGreaterEqual(self.decay.fitted_rate, self.dispersion.beta)
        self.assertGreater(self.decay.r2, 0.99)

    def test_prefactor_comes_from_the_fit_and_bounds_the_profile(self):
        decay = self.decay
        window = decay.window
        self.assertTrue(decay.bounded)
        self.assertTrue(np.all(decay.E[window] <= decay.envelope(self.dispersion.beta)[window] * (1 + 1e-12)))
        # the lifted fit touches E somewhere on the window
        ratio = decay.E[window] * np.exp(decay.fitted_rate * decay.x[window]) / decay.C0
        self.assertAlmostEqual(ratio.max(), 1.0, places=10)

    def test_energy_identity(self):
        decay = self.decay
        window = decay.window
        scale = np.max(np.abs(2.0 * self.dispersion.alpha * decay.E[window]))
        self.assertLess(np.max(np.abs(decay.identity_residual[window])), 5e-2 * scale)
