import numpy as np
from django.test import SimpleTestCase
from scipy.linalg import solve_continuous_are

from roaplan.baselines import (
    LinearModel, MpcConfig, MpcController, lqr_baseline, lqr_synthesize, linearize, mpc_shoot, stabilizable,
)
from roaplan.dynamics.toy import planar_mode, scalar_linear_mode
from roaplan.exceptions import RiccatiError


def model(A, B):
    A, B = np.atleast_2d(A).astype(float), np.atleast_2d(B).astype(float)
    return LinearModel(A, B, np.zeros(len(A)), np.zeros(B.shape[1]), np.zeros(1))


class LinearizeTests(SimpleTestCase):
    def test_scalar_linear_flow(self):
        m = linearize(lambda x, u, p: -x + u, [0.3], [0.0], [0.0])
        self.assertAlmostEqual(float(m.A[0, 0]), -1.0, delta=1e-8)
        self.assertAlmostEqual(float(m.B[0, 0]), 1.0, delta=1e-8)

    def test_control_free_flow_has_zero_input_matrix(self):
        m = linearize(lambda x, u, p: -2.0 * x, [1.0, 2.0], [0.5], [0.0])
        np.testing.assert_array_equal(m.B, np.zeros((2, 1)))
        np.testing.assert_allclose(m.A, -2.0 * np.eye(2), atol=1e-8)

    def test_planar_mode_recovers_its_matrices(self):
        mode = planar_mode()
        p = np.array([[0.2]])
        m = linearize(mode.flow, mode.equilibrium(p)[0], mode.nominal(p)[0], p)
        np.testing.assert_allclose(m.A, [[0.0, 1.0], [-1.0, -0.5]], atol=1e-8)
        np.testing.assert_allclose(m.B, [[0.0], [1.0]], atol=1e-8)


class LqrTests(SimpleTestCase):
    def test_scalar_closed_form(self):
        gain = lqr_synthesize(model(0.0, 1.0), 1.0, 1.0)
        self.assertAlmostEqual(float(gain.P[0, 0]), 1.0, places=10)
        self.assertAlmostEqual(float(gain.K[0, 0]), 1.0, places=10)
        self.assertLess(gain.residual, 1e-8)

    def test_stable_uncontrolled_system_gets_zero_gain(self):
        gain = lqr_synthesize(model(-1.0, 0.0), 1.0, 1.0)
        self.assertAlmostEqual(float(gain.K[0, 0]), 0.0, places=12)
        self.assertAlmostEqual(float(gain.P[0, 0]), 0.5, places=10)

    def test_unstable_uncontrolled_system_is_rejected(self):
        self.assertFalse(stabilizable(np.array([[1.0]]), np.array([[0.0]])))
        with self.assertRaises(RiccatiError):
            lqr_synthesize(model(1.0, 0.0), 1.0, 1.0)

    def test_indefinite_input_weight_is_rejected(self):
        with self.assertRaises(RiccatiError):
            lqr_synthesize(model(0.0, 1.0), 1.0, 0.0)

    def test_double_integrator_matches_an_independent_solver(self):
        A = np.array([[0.0, 1.0], [0.0, 0.0]])
        B = np.array([[0.0], [1.0]])
        gain = lqr_synthesize(model(A, B), np.eye(2), np.eye(1))
        P_ref = solve_continuous_are(A, B, np.eye(2), np.eye(1))
        np.testing.assert_allclose(gain.P, P_ref, rtol=1e-7, atol=1e-9)
        closed = np.sort_complex(np.linalg.eigvals(A - B @ gain.K))
        reference = np.sort_complex(np.linalg.eigvals(A - B @ (B.T @ P_ref)))
        np.testing.assert_allclose(closed, reference, atol=1e-7)
        self.assertLess(np.max(closed.real), 0.0)

    def test_baseline_controller_and_certificate(self):
        mode = scalar_linear_mode()
        controller, certificate = lqr_baseline(mode)
        P = np.sqrt(2.0) - 1.0
        p = np.array([[0.4]])
        u = controller(np.array([[1.4]]), p)
        self.assertAlmostEqual(float(u[0, 0]), -P * 1.0, places=7)
        self.assertAlmostEqual(float(certificate.value(np.array([[1.4]]), p)[0]), np.sqrt(P), places=7)
        self.assertEqual(len(controller.gains), 1)

    def test_controller_output_is_clipped(self):
        controller, _ = lqr_baseline(scalar_linear_mode(control_bound=0.1))
        u = controller(np.array([[100.0]]), np.array([[0.0]]))
        self.assertEqual(float(u[0, 0]), -0.1)


class MpcTests(SimpleTestCase):
    def setUp(self):
        self.mode = scalar_linear_mode()
        self.dt = 0.1

    def test_matches_the_finite_horizon_optimum(self):
        # x_{k+1} = a·x_k + b·u_k; mínimo de Σ x_k² + Σ u_k² por mínimos quadrados
        horizon, x0 = 20, 1.0
        a, b = 1.0 - self.dt, self.dt
        F = a ** np.arange(1, horizon + 1)
        G = np.zeros((horizon, horizon))
        for k in range(horizon):
            for j in range(k + 1):
                G[k, j] = a ** (k - j) * b
        u_opt = -np.linalg.solve(G.T @ G + np.eye(horizon), G.T @ F * x0)
        config = MpcConfig(horizon=horizon, iterations=500, learning_rate=0.1)
        solution = mpc_shoot(self.mode, [x0], [0.0], config, dt=self.dt)
        np.testing.assert_allclose(solution.controls[:, 0], u_opt, atol=1e-3)

    def test_zero_iterations_return_zero_sequence(self):
        solution = mpc_shoot(self.mode, [1.0], [0.0], MpcConfig(horizon=5, iterations=0), dt=self.dt)
        np.testing.assert_array_equal(solution.controls, np.zeros((5, 1)))
        self.assertEqual(len(solution.history), 1)

    def test_control_independent_cost_leaves_sequence_unchanged(self):
        u0 = np.full((4, 1), 0.3)
        cost = lambda states, controls, p: 0.0 * controls[0].sum() + 1.0
        solution = mpc_shoot(self.mode, [1.0], [0.0], MpcConfig(horizon=4, iterations=10), cost=cost,
                             dt=self.dt, u0=u0)
        np.testing.assert_array_equal(solution.controls, u0)

    def test_cost_never_increases(self):
        solution = mpc_shoot(self.mode, [1.5], [0.0], MpcConfig(horizon=10, iterations=50, learning_rate=1.0),
                             dt=self.dt)
        history = np.array(solution.history)
        self.assertTrue(np.all(np.diff(history) <= 0.0))
        self.assertLess(history[-1], history[0])

    def test_receding_horizon_applies_the_first_control(self):
        config = MpcConfig(horizon=5, iterations=20)
        controller = MpcController(self.mode, config, dt=self.dt, replan_every=2)
        u = controller(np.array([[1.0]]), np.array([[0.0]]))
        expected = mpc_shoot(self.mode, [1.0], [0.0], config, dt=self.dt).controls[0]
        np.testing.assert_allclose(u[0], expected)
        self.assertEqual(controller.age, 1)
        controller.reset()
        self.assertIsNone(controller.plan)

    def test_replanning_period_longer_than_the_horizon(self):
        config = MpcConfig(horizon=5, iterations=2)
        controller = MpcController(self.mode, config, dt=self.dt, replan_every=25)
        for _ in range(12):
            u = controller(np.array([[1.0]]), np.array([[0.0]]))
            self.assertEqual(u.shape, (1, 1))
        self.assertEqual(controller.age, 2)
