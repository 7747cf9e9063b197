import tempfile

import numpy as np
from django.test import SimpleTestCase, tag

from roaplan.autodiff import Tensor, data_of
from roaplan.certificates import (
    ControllerNet, LyapunovNet, clf_loss, clf_terms, estimate_norm_bounds, init_certificate, train_mode,
)
from roaplan.conf import ClfConfig
from roaplan.dynamics.hybrid import simulate_batch
from roaplan.dynamics.toy import linear_mode, scalar_linear_mode
from roaplan.exceptions import CertificateDefectError, ShapeError
from roaplan.tests.helpers import norm_certificate, zero_controller


class LyapunovValueTests(SimpleTestCase):
    def setUp(self):
        self.mode = linear_mode("cube", -np.eye(3), np.ones((3, 1)))

    def test_zero_at_equilibrium(self):
        lyap, _ = init_certificate(self.mode, (16, 16), np.random.default_rng(0))
        p = np.array([[0.4], [-0.2]])
        np.testing.assert_array_equal(data_of(lyap.value(self.mode.equilibrium(p), p)), [0.0, 0.0])

    def test_identity_matrix_gives_euclidean_norm(self):
        lyap = norm_certificate(self.mode)
        p = np.array([[0.3]])
        x = self.mode.equilibrium(p) + np.array([[3.0, 4.0, 0.0]])
        self.assertAlmostEqual(float(data_of(lyap.value(x, p))[0]), 5.0, places=12)

    def test_positive_away_from_equilibrium(self):
        lyap, _ = init_certificate(self.mode, (16, 16), np.random.default_rng(1))
        rng = np.random.default_rng(2)
        p = self.mode.sample_configs(rng, 50)
        x = self.mode.sample_states(rng, p)
        self.assertTrue(np.all(data_of(lyap.value(x, p)) > 0.0))

    def test_single_configuration_is_broadcast(self):
        lyap = norm_certificate(self.mode)
        x = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
        np.testing.assert_allclose(data_of(lyap.value(x, np.array([[0.0]]))), [1.0, 2.0])

    def test_mismatched_batches_are_rejected(self):
        lyap = norm_certificate(self.mode)
        with self.assertRaises(ShapeError):
            lyap.value(np.zeros((3, 3)), np.zeros((2, 1)))

    def test_save_and_load(self):
        lyap, _ = init_certificate(self.mode, (8,), np.random.default_rng(3))
        x, p = np.array([[0.5, -0.1, 0.2]]), np.array([[0.1]])
        with tempfile.TemporaryDirectory() as tmp:
            lyap.save(tmp)
            loaded = LyapunovNet.load(tmp, self.mode)
        np.testing.assert_array_equal(data_of(loaded.value(x, p)), data_of(lyap.value(x, p)))


class ControllerTests(SimpleTestCase):
    def setUp(self):
        self.mode = scalar_linear_mode(control_bound=5.0)
        _, self.controller = init_certificate(self.mode, (16, 16), np.random.default_rng(4))

    def test_anchored_controller_returns_nominal_input_at_equilibrium(self):
        self.assertTrue(self.controller.anchored)
        p = np.array([[-0.5], [0.0], [0.7]])
        u = data_of(self.controller(self.mode.equilibrium(p), p))
        np.testing.assert_allclose(u, np.zeros((3, 1)), atol=1e-12)

    def test_output_stays_in_control_box(self):
        p = np.zeros((200, 1))
        x = np.linspace(-1e3, 1e3, 200).reshape(-1, 1)
        u = data_of(self.controller(x, p))
        self.assertTrue(np.all(np.abs(u) <= 5.0))

    def test_save_and_load_keep_anchoring(self):
        with tempfile.TemporaryDirectory() as tmp:
            self.controller.save(tmp)
            loaded = ControllerNet.load(tmp, self.mode)
        self.assertTrue(loaded.anchored)
        x, p = np.array([[0.3]]), np.array([[0.1]])
        np.testing.assert_array_equal(data_of(loaded(x, p)), data_of(self.controller(x, p)))


class ClfLossTests(SimpleTestCase):
    def setUp(self):
        self.mode = scalar_linear_mode()
        self.lyap = norm_certificate(self.mode)
        self.p = np.array([[0.2]])
        self.x = Tensor(self.mode.equilibrium(self.p) + 1.0)

    def test_stalled_state_pays_the_decay_term(self):
        stay = lambda x, u, p, dt: x
        loss = clf_loss(self.lyap, zero_controller, self.x, self.p, 0.1, 0.1, step=stay)
        self.assertAlmostEqual(float(data_of(loss)), 0.1, places=12)

    def test_fast_decrease_has_no_violation(self):
        halve = lambda x, u, p, dt: self.mode.equilibrium(p) + 0.5 * (x - self.mode.equilibrium(p))
        terms = data_of(clf_terms(self.lyap, zero_controller, self.x, self.p, 0.1, 0.1, step=halve))
        np.testing.assert_array_equal(terms, [0.0])

    def test_sums_over_the_batch(self):
        stay = lambda x, u, p, dt: x
        x = Tensor(np.array([[1.2], [2.2]]))
        loss = clf_loss(self.lyap, zero_controller, x, self.p, 0.5, 0.1, step=stay)
        self.assertAlmostEqual(float(data_of(loss)), 0.5 * 1.0 + 0.5 * 2.0, places=12)


class NormBoundsTests(SimpleTestCase):
    def test_euclidean_certificate_bounds(self):
        mode = linear_mode("cube", -np.eye(3), np.ones((3, 1)))
        bounds = estimate_norm_bounds(norm_certificate(mode), np.array([0.1]), 500, 0.5,
                                      np.random.default_rng(0))
        self.assertAlmostEqual(bounds.alpha, 0.95, places=9)
        self.assertAlmostEqual(bounds.beta, 1.05, places=9)
        self.assertAlmostEqual(bounds.alpha_raw, 1.0, places=9)

    def test_scaled_certificate_brackets_the_scale(self):
        mode = scalar_linear_mode()
        bounds = estimate_norm_bounds(norm_certificate(mode, scale=2.0), np.array([0.0]), 200, 1.0,
                                      np.random.default_rng(0))
        self.assertLessEqual(bounds.alpha, 2.0)
        self.assertGreaterEqual(bounds.beta, 2.0)

    def test_degenerate_certificate_is_a_defect(self):
        mode = scalar_linear_mode()
        with self.assertRaises(CertificateDefectError):
            estimate_norm_bounds(norm_certificate(mode, scale=0.0), np.array([0.0]), 100, 1.0,
                                 np.random.default_rng(0))


class TrainModeTests(SimpleTestCase):
    def test_zero_epoch_budget_returns_initial_networks(self):
        mode = scalar_linear_mode()
        init = init_certificate(mode, (8,), np.random.default_rng(0))
        result = train_mode(mode, ClfConfig(max_epochs=0), np.random.default_rng(0), init=init)
        self.assertIs(result.lyapunov, init[0])
        self.assertIs(result.controller, init[1])
        self.assertEqual(len(result.log), 0)

    @tag("slow")
    def test_short_training_on_scalar_mode(self):
        mode = scalar_linear_mode()
        config = ClfConfig(hidden=(8, 8), n_states=40, max_epochs=3, updates_per_epoch=5, batch_size=64,
                           learning_rate=1e-3, rollout_steps=10, patience=5)
        result = train_mode(mode, config, np.random.default_rng(0))
        frame = result.log.to_frame()
        self.assertTrue(1 <= len(frame) <= 3)
        self.assertTrue({"epoch", "train_loss", "val_loss", "violation_rate"} <= set(frame.columns))
        self.assertTrue(np.all(np.isfinite(frame["val_loss"])))
        bounds = estimate_norm_bounds(result.lyapunov, np.array([0.0]), 200, 1.0, np.random.default_rng(1))
        self.assertGreater(bounds.alpha, 0.0)

    @tag("slow")
    def test_toy_mode_training_certifies_and_stabilizes(self):
        mode = scalar_linear_mode()
        config = ClfConfig(hidden=(16, 16), n_states=100, max_epochs=60, updates_per_epoch=20, batch_size=512,
                           learning_rate=2e-3, gamma=0.5, rollout_steps=50, patience=60)
        result = train_mode(mode, config, np.random.default_rng(0))

        rng = np.random.default_rng(1)
        configs = mode.sample_configs(rng, 1000)
        states = mode.sample_states(rng, configs)
        terms = data_of(clf_terms(result.lyapunov, result.controller, states, configs, config.gamma, config.dt))
        self.assertLess((terms > 0).mean(), 0.01)

        configs, states = configs[:100], states[:100]
        rollout = simulate_batch(mode, result.controller, states, configs, 2000, config.dt)
        self.assertTrue(rollout.valid.all())
        distance = np.abs(rollout.final - mode.equilibrium(configs))[:, 0]
        self.assertLess(distance.max(), 1e-2)
