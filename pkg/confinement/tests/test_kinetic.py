import numpy as np
from django.test import SimpleTestCase

from confinement.dispersion import solve_alpha
from confinement.exceptions import CFLError, ConfigError
from confinement.grids import make_box_mesh, make_kernel, make_velocity_grid
from confinement.kinetic import (SCHEMES, advance, discrete_equilibrium, equilibrium_residual, evolve,
                                 generator_matrix, make_initial, phase_space_mass, relaxation_rate,
                                 scheme_equilibrium, stable_dt, step_matrix, transport_step, turning_rhs,
                                 weighted_distance)
from confinement.milne import compute_stationary


class KineticSchemeTests(SimpleTestCase):

    def setUp(self):
        self.grid = make_velocity_grid(4)
        self.kernel = make_kernel(0.5, self.grid)
        self.mesh = make_box_mesh(3.0, 40)

    def test_generator_conserves_mass(self):
        A = generator_matrix(self.mesh, self.kernel)
        mass_row = np.tile(self.mesh.dx * self.grid.weights, self.mesh.size)
        self.assertLess(np.abs(A.T @ mass_row).max(), 1e-13)

    def test_turning_operator_conserves_density(self):
        f = make_initial('twobump', self.mesh, self.grid)
        Q = turning_rhs(f, self.kernel, self.mesh)
        self.assertLess(np.abs(Q @ self.grid.weights).max(), 1e-14)

    def test_discrete_equilibrium(self):
        g = discrete_equilibrium(self.mesh, self.kernel, mass=2.0)
        self.assertTrue(np.all(g > 0))
        self.assertAlmostEqual(phase_space_mass(g, self.mesh, self.grid), 2.0, places=12)
        self.assertLess(equilibrium_residual(g, self.mesh, self.kernel), 1e-10)
        np.testing.assert_allclose(g[::-1, ::-1], g, rtol=1e-9)

    def test_every_scheme_conserves_mass(self):
        f0 = make_initial('gaussian', self.mesh, self.grid)
        dt = stable_dt(self.mesh, self.kernel, 0.9)
        for scheme in SCHEMES:
            f = f0
            for _ in range(20):
                f = advance(f, dt, self.kernel, self.mesh, scheme)
            self.assertAlmostEqual(phase_space_mass(f, self.mesh, self.grid), 1.0, places=13, msg=scheme)

    def test_step_matrix_matches_advance(self):
        f = make_initial('twobump', self.mesh, self.grid)
        dt = stable_dt(self.mesh, self.kernel, 0.8)
        for scheme in SCHEMES:
            S = step_matrix(self.mesh, self.kernel, dt, scheme)
            np.testing.assert_allclose((S @ f.ravel()).reshape(f.shape), advance(f, dt, self.kernel, self.mesh, scheme),
                                       rtol=1e-12, atol=1e-14, err_msg=scheme)

    def test_strang_keeps_its_own_fixed_point(self):
        dt = stable_dt(self.mesh, self.kernel, 0.9)
        g = scheme_equilibrium(self.mesh, self.kernel, dt, 'strang')
        self.assertTrue(np.all(g > 0))
        np.testing.assert_allclose(advance(g, dt, self.kernel, self.mesh, 'strang'), g, rtol=1e-9)

    def test_strang_step_stays_nonnegative(self):
        f = make_initial('twobump', self.mesh, self.grid)
        dt = stable_dt(self.mesh, self.kernel, 1.0)
        for _ in range(50):
            f = advance(f, dt, self.kernel, self.mesh)
        self.assertGreaterEqual(f.min(), 0.0)

    def test_unsplit_schemes_keep_the_discrete_equilibrium(self):
        g = discrete_equilibrium(self.mesh, self.kernel)
        dt = stable_dt(self.mesh, self.kernel, 0.9)
        for scheme in ('euler', 'heun'):
            np.testing.assert_allclose(advance(g, dt, self.kernel, self.mesh, scheme), g, rtol=1e-9)

    def test_cfl_limits(self):
        with self.assertRaises(CFLError):
            stable_dt(self.mesh, self.kernel, 1.5)
        with self.assertRaises(CFLError):
            transport_step(np.ones((40, 8)), 10.0 * self.mesh.dx, self.mesh, self.grid)
        with self.assertRaises(ConfigError):
            advance(np.ones((40, 8)), 0.01, self.kernel, self.mesh, 'leapfrog')

    def test_initial_conditions(self):
        for kind in ('uniform', 'gaussian', 'twobump'):
            f = make_initial(kind, self.mesh, self.grid, mass=3.0)
            self.assertAlmostEqual(phase_space_mass(f, self.mesh, self.grid), 3.0, places=12)
        with self.assertRaises(ConfigError):
            make_initial('equilibrium', self.mesh, self.grid)
        with self.assertRaises(ConfigError):
            make_initial('delta', self.mesh, self.grid)


class EvolveTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.grid = make_velocity_grid(3)
        cls.kernel = make_kernel(0.5, cls.grid)
        cls.mesh = make_box_mesh(2.0, 24)
        cls.g = discrete_equilibrium(cls.mesh, cls.kernel)

    def test_relaxation_from_uniform_data(self):
        f0 = make_initial('uniform', self.mesh, self.grid)
        field, report = evolve(f0, 400.0, self.g, self.kernel, self.mesh, scheme='euler', samples=400)
        self.assertLess(report.mass_drift, 1e-11)
        self.assertLess(report.distance[-1], 1e-4 * report.distance[0])
        self.assertEqual(report.fit_series, 'milne')
        self.assertGreater(report.lambda_fit, 0.0)
        self.assertGreater(report.fit_r2, 0.99)
        self.assertEqual(field.f.shape, (24, 6))

    def test_equilibrium_initial_data_stays_put(self):
        f0 = make_initial('equilibrium', self.mesh, self.grid, g=self.g)
        _, report = evolve(f0, 5.0, self.g, self.kernel, self.mesh, scheme='heun', samples=10)
        self.assertLess(report.distance.max(), 1e-10)

    def test_snapshots_are_recorded_in_order(self):
        f0 = make_initial('twobump', self.mesh, self.grid)
        _, report = evolve(f0, 2.0, self.g, self.kernel, self.mesh, snapshot_times=(1.5, 0.5))
        self.assertEqual(len(report.snapshots), 2)
        self.assertLess(report.snapshots[0][0], report.snapshots[1][0])

    def test_rejects_bad_initial_data(self):
        with self.assertRaises(ConfigError):
            evolve(-np.ones((24, 6)), 1.0, self.g, self.kernel, self.mesh)
        with self.assertRaises(ConfigError):
            evolve(np.ones((24, 5)), 1.0, self.g, self.kernel, self.mesh)
        with self.assertRaises(ConfigError):
            evolve(np.ones((24, 6)), 0.0, self.g, self.kernel, self.mesh)

    def test_relaxation_rate_of_an_exact_exponential(self):
        t = np.linspace(0.0, 50.0, 101)
        rate, r2, n = relaxation_rate(t, np.exp(-0.4 * t))
        self.assertAlmostEqual(rate, 0.4, places=10)
        self.assertGreater(r2, 0.999999)
        self.assertGreaterEqual(n, 4)


class MilneReferenceTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        dispersion = solve_alpha(make_kernel(0.5, make_velocity_grid(3)))
        state, _ = compute_stationary(dispersion, nx=80)
        cls.kernel = dispersion.kernel
        cls.grid = dispersion.grid
        cls.mesh = make_box_mesh(2.0, 24)
        cls.g = state.on_mesh(cls.mesh).g

    def test_distance_to_the_milne_state_levels_off_at_the_scheme_gap(self):
        f0 = make_initial('uniform', self.mesh, self.grid)
        _, report = evolve(f0, 400.0, self.g, self.kernel, self.mesh, samples=400)
        gap = weighted_distance(scheme_equilibrium(self.mesh, self.kernel, report.dt, mass=1.0),
                                self.g / phase_space_mass(self.g, self.mesh, self.grid), self.g, self.mesh, self.grid)
        self.assertLess(report.distance_scheme[-1], 1e-4 * report.distance_scheme[0])
        self.assertAlmostEqual(report.distance[-1], gap, delta=1.001 * report.distance_scheme[-1] + 1e-14)
        self.assertIn(report.fit_series, ('milne', 'scheme'))
        self.assertGreater(report.lambda_fit, 0.0)
        self.assertGreater(report.fit_r2, 0.99)

    def test_milne_initial_data_stays_within_the_gap(self):
        f0 = make_initial('equilibrium', self.mesh, self.grid, g=self.g)
        _, report = evolve(f0, 5.0, self.g, self.kernel, self.mesh, samples=20)
        self.assertLess(report.distance[0], 1e-12)
        self.assertLessEqual(report.distance.max(), 2.5 * report.distance_scheme[0])

    def test_equal_mass_data_share_the_long_time_state(self):
        finals, reports = [], []
        for kind in ('uniform', 'twobump'):
            f0 = make_initial(kind, self.mesh, self.grid, mass=2.0)
            field, report = evolve(f0, 400.0, self.g, self.kernel, self.mesh, scheme='euler', samples=50)
            self.assertLess(report.distance_scheme[-1], 1e-4 * report.distance_scheme[0])
            finals.append(field.f)
            reports.append(report)
        apart = weighted_distance(finals[0], finals[1], self.g, self.mesh, self.grid)
        start = weighted_distance(make_initial('uniform', self.mesh, self.grid, mass=2.0),
                                  make_initial('twobump', self.mesh, self.grid, mass=2.0), self.g, self.mesh, self.grid)
        self.assertLessEqual(apart, reports[0].distance_scheme[-1] + reports[1].distance_scheme[-1] + 1e-14)
        self.assertLess(apart, 1e-3 * start)
