import dataclasses
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from roaplan.dynamics.car import (
    CarParams, car_coeffs, car_flow, car_handover, car_jump, car_mode, car_pose, car_system, heading,
)
from roaplan.dynamics.hybrid import HybridSystem, Trajectory, euler_step, localize_crossing, rollout, simulate_batch
from roaplan.dynamics.pogo import (
    FLIGHT, STANCE, PogoParams, pogo_events, pogo_flow, simulate_hop,
)
from roaplan.dynamics.toy import cubic_mode, scalar_linear_mode, setpoint_system
from roaplan.dynamics.walker import (
    WalkerParams, kinetic_energy, walker_flow, walker_guard, walker_jump, walker_matrices, walker_relabel,
)
from roaplan.exceptions import ConfigError, LowSpeedSingularityError, RoaPlanError, SingularLegError

G = 9.81


def car_p(v_ref=5.0, mu=1.0, start=(0.0, 0.0), end=(30.0, 0.0)):
    return np.array([[start[0], start[1], end[0], end[1], v_ref, mu]])


class EulerStepTests(SimpleTestCase):
    def test_zero_field_keeps_state(self):
        x = np.array([[1.0, -2.0]])
        out = euler_step(lambda x, u, p: np.zeros_like(x), x, None, None, 0.1)
        np.testing.assert_array_equal(out, x)

    def test_pogo_flight_step(self):
        x = np.array([[0.0, 1.0, 2.0, 0.0]])
        out = euler_step(lambda x, u, p: pogo_flow(x, FLIGHT, None, PogoParams()), x, None, None, 0.01)
        np.testing.assert_allclose(out, [[0.01, 1.0, 2.0, -0.0981]], atol=1e-15)

    def test_car_equilibrium_is_a_fixed_point(self):
        mode = car_mode(1.0)
        p = car_p()
        u = mode.nominal(p)
        x = np.zeros((1, 7))
        np.testing.assert_allclose(euler_step(mode.flow, x, u, p, 0.01), x, atol=1e-12)


def car_coeffs_oracle(params, mu, v):
    m, iz, lf, lr, g = params.mass, params.yaw_inertia, params.lf, params.lr, params.g
    csf, csr = params.csf, params.csr
    wb = lf + lr
    return (
        -mu * m / (v * iz * wb) * (lf * lf * csf * g * lr + lr * lr * csr * g * lf),
        mu * m / (iz * wb) * (lr * csr * g * lf - lf * csf * g * lr),
        mu * m / (iz * wb) * (lf * csf * g * lr),
        mu / (v * v * wb) * (csr * g * lf * lr - csf * g * lr * lf) - 1.0,
        -mu / (v * wb) * (csr * g * lf + csf * g * lr),
        mu / (v * wb) * (csf * g * lr),
    )


class CarTests(SimpleTestCase):
    def test_zero_friction_coefficients(self):
        np.testing.assert_allclose(car_coeffs(CarParams(), 0.0, 10.0), [0, 0, 0, -1, 0, 0], atol=0)

    def test_coefficients_are_linear_in_friction(self):
        params = CarParams()
        one = np.array(car_coeffs(params, 0.5, 8.0))
        two = np.array(car_coeffs(params, 1.0, 8.0))
        np.testing.assert_allclose(two[[0, 1, 2, 4, 5]], 2 * one[[0, 1, 2, 4, 5]], rtol=1e-12)
        self.assertAlmostEqual(two[3] + 1.0, 2 * (one[3] + 1.0), places=12)

    def test_coefficients_match_direct_formulas(self):
        params = CarParams(mass=1500, lf=1.2, lr=1.6, csf=20, csr=20, yaw_inertia=2500, g=9.81)
        np.testing.assert_allclose(car_coeffs(params, 1.0, 10.0), car_coeffs_oracle(params, 1.0, 10.0),
                                   rtol=1e-12)

    def test_low_speed_is_rejected(self):
        with self.assertRaises(LowSpeedSingularityError):
            car_coeffs(CarParams(), 1.0, 0.1)

    def test_zero_error_state_has_zero_derivative(self):
        out = car_flow(np.zeros((1, 7)), np.zeros((1, 2)), car_p(), CarParams())
        np.testing.assert_allclose(out, 0.0, atol=1e-14)

    def test_position_rows_with_reference_yaw_rate(self):
        x = np.zeros((1, 7))
        x[0, 0], x[0, 1] = 0.4, 0.7
        out = car_flow(x, np.zeros((1, 2)), car_p(), CarParams(), omega_ref=0.3)
        self.assertAlmostEqual(out[0, 0], 0.3 * 0.7, places=12)
        self.assertAlmostEqual(out[0, 1], -0.3 * 0.4, places=12)

    def test_flow_matches_straight_line_reevaluation(self):
        rng = np.random.default_rng(0)
        params = CarParams()
        for _ in range(1000):
            x = rng.uniform(-1, 1, size=(1, 7))
            u = rng.uniform(-1, 1, size=(1, 2))
            v_ref, mu = rng.uniform(3, 10), rng.choice([0.1, 1.0])
            p = car_p(v_ref, mu)
            xe, ye, delta, ve, psie, dpsie, beta = x[0]
            v = v_ref + ve
            c1, c2, c3, c4, c5, c6 = car_coeffs_oracle(params, mu, v)
            expected = [v * np.cos(psie) - v_ref, v * np.sin(psie), u[0, 1], u[0, 0], dpsie,
                        c1 * dpsie + c2 * beta + c3 * delta, c4 * dpsie + c5 * beta + c6 * delta]
            np.testing.assert_allclose(car_flow(x, u, p, params)[0], expected, rtol=1e-12, atol=1e-12)

    def test_identical_segments_jump_is_identity(self):
        x = np.random.default_rng(1).normal(size=(1, 7))
        p = car_p()
        np.testing.assert_allclose(car_jump(x, p, p), x, atol=1e-15)

    def test_heading_change_on_zero_error(self):
        turn = np.pi / 6
        p_i = car_p(end=(30.0, 0.0))
        p_j = car_p(start=(30.0, 0.0), end=(30.0 + np.cos(turn), np.sin(turn)))
        out = car_jump(np.zeros((1, 7)), p_i, p_j)
        self.assertAlmostEqual(out[0, 4], -turn, places=12)
        np.testing.assert_allclose(out[0, :2], 0.0, atol=1e-15)

    def test_jump_agrees_with_global_frame(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            turn = rng.uniform(-np.pi / 4, np.pi / 4)
            p_i = car_p(v_ref=6.0, end=(20.0, 0.0))
            p_j = car_p(v_ref=6.0, start=(20.0, 0.0), end=(20.0 + 25 * np.cos(turn), 25 * np.sin(turn)))
            x = np.zeros((1, 7))
            x[0, :2] = rng.uniform(-1, 1, size=2)
            x[0, 4] = rng.uniform(-0.3, 0.3)
            clock_i = 20.0 / 6.0
            X, Y, yaw = car_pose(x, p_i, np.array([clock_i]))
            jumped = car_jump(x, p_i, p_j)
            Xj, Yj, yawj = car_pose(jumped, p_j, np.array([0.0]))
            np.testing.assert_allclose([Xj[0], Yj[0]], [X[0], Y[0]], atol=1e-10)
            self.assertAlmostEqual(np.cos(yawj[0] - yaw[0]), 1.0, places=10)

    def test_handover_keeps_the_global_position(self):
        p_i = car_p(v_ref=5.0, end=(10.0, 0.0))
        p_j = car_p(v_ref=7.0, start=(10.0, 0.0), end=(10.0, 15.0))
        x = np.array([[0.2, -0.3, 0.0, 0.1, 0.05, 0.0, 0.0]])
        excess = 0.004
        X, Y, _ = car_pose(x, p_i, np.array([2.0 + excess]))
        jumped = car_handover(x, p_i, p_j, excess)
        Xj, Yj, _ = car_pose(jumped, p_j, np.array([excess]))
        np.testing.assert_allclose([Xj[0], Yj[0]], [X[0], Y[0]], atol=1e-10)

    def test_heading_of_segment(self):
        self.assertAlmostEqual(float(heading(car_p(end=(0.0, 5.0)))[0]), np.pi / 2)


class PogoTests(SimpleTestCase):
    def test_flight_field(self):
        out = pogo_flow(np.array([0.0, 2.0, 1.0, 0.5]), FLIGHT, None, PogoParams())
        np.testing.assert_allclose(out[0], [2.0, 0.0, 0.5, -G])

    def test_stance_at_rest_length_is_gravity_only(self):
        params = PogoParams()
        x = np.array([0.0, 0.3, params.l0, -1.0])
        out = pogo_flow(x, STANCE, (0.0, 0.0), params, [[0.0, 0.0]])
        np.testing.assert_allclose(out[0], [0.3, 0.0, -1.0, -G], atol=1e-12)

    def test_compressed_leg_pushes_the_body_away_from_the_foot(self):
        params = PogoParams()
        x = np.array([0.0, 0.0, 0.5 * params.l0, 0.0])
        out = pogo_flow(x, STANCE, (0.0, 0.0), params, [[0.0, 0.0]])
        self.assertAlmostEqual(out[0, 1], 0.0, places=12)
        self.assertAlmostEqual(out[0, 3], params.k * 0.5 * params.l0 - params.g, places=9)
        self.assertGreater(out[0, 3] + params.g, 0.0)

    def test_stance_matches_straight_line_reevaluation(self):
        rng = np.random.default_rng(3)
        params = PogoParams()
        for _ in range(1000):
            x = rng.uniform([-1, -2, 0.2, -2], [1, 2, 0.6, 2])
            foot = rng.uniform([-0.3, -0.1], [0.3, 0.1])
            force = rng.uniform(-10, 10)
            dx, dy = x[0] - foot[0], x[2] - foot[1]
            length = np.sqrt(dx * dx + dy * dy)
            push = (params.k * (params.l0 - length) + force) / length
            expected = [x[1], push * dx, x[3], push * dy - params.g]
            np.testing.assert_allclose(pogo_flow(x, STANCE, foot, params, [[force, 0.0]])[0], expected,
                                       rtol=1e-12, atol=1e-12)

    def test_collapsed_leg_is_singular(self):
        with self.assertRaises(SingularLegError):
            pogo_flow(np.array([0.0, 0.0, 0.0, 0.0]), STANCE, (0.0, 0.0), PogoParams())

    def test_invalid_constants(self):
        with self.assertRaises(ConfigError):
            PogoParams(k=-1.0)

    def test_ballistic_apex_matches_closed_form(self):
        params = PogoParams()
        dt = 1e-4
        x = np.array([0.0, 1.0, 2.0, 3.0])
        times, states = [0.0], [x.copy()]
        for k in range(1, 4000):
            x = x + pogo_flow(x, FLIGHT, None, params)[0] * dt
            times.append(k * dt)
            states.append(x.copy())
        events = pogo_events(times, states, [FLIGHT] * len(times), params=params, floor=-10.0)
        apexes = [e for e in events if e.kind == "apex"]
        self.assertEqual(len(apexes), 1)
        self.assertAlmostEqual(apexes[0].t, 3.0 / G, delta=1e-6)
        self.assertAlmostEqual(apexes[0].state[2], 2.0 + 9.0 / (2 * G), delta=1e-3)
        self.assertFalse([e for e in events if e.kind == "touchdown"])

    def test_spring_bounce_conserves_energy(self):
        hop = simulate_hop([0.0, 0.0, 1.2, 0.0], (0.0, 0.0), PogoParams(), dt=1e-4)
        self.assertTrue(hop.valid)
        touchdown = next(e for e in hop.events if e.kind == "touchdown")
        liftoff = next(e for e in hop.events if e.kind == "liftoff")
        self.assertAlmostEqual(abs(liftoff.state[3]) / abs(touchdown.state[3]), 1.0, delta=0.02)
        self.assertAlmostEqual(hop.apex[2], 1.2, delta=0.03)

    def test_low_ceiling_is_a_collision(self):
        hop = simulate_hop([0.0, 0.5, 1.0, 1.0], (0.0, 0.0), PogoParams(), dt=1e-3, ceiling=1.03)
        self.assertTrue(hop.collision)


def walker_oracle(x, u, params):
    q1, q2, dq1, dq2 = x
    m, l, lc, inertia, g0 = params.m, params.l, params.lc, params.inertia, params.g0
    a2, da2 = -q2, -dq2
    D = np.array([
        [(l - lc) ** 2 * m + inertia, m * l * (l - lc) * np.cos(a2) - (l - lc) ** 2 * m - inertia],
        [m * l * (l - lc) * np.cos(a2) - (l - lc) ** 2 * m - inertia,
         -2 * m * l * (l - lc) * np.cos(a2) + (2 * (lc ** 2 + l ** 2) - 2 * lc * l) * m + 2 * inertia],
    ])
    s = m * l * (l - lc) * np.sin(a2)
    C = np.array([[0.0, -s * dq1], [-s * (da2 - dq1), -s * da2]])
    Gv = np.array([m * g0 * np.sin(a2 - q1) * (l - lc),
                   m * g0 * ((lc - l) * np.sin(a2 - q1) - np.sin(q1) * (lc + l))])
    xi_dd = np.linalg.solve(D, -C @ np.array([da2, dq1]) - Gv + np.array([u, 0.0]))
    return np.array([dq1, dq2, xi_dd[1], -xi_dd[0]])


class WalkerTests(SimpleTestCase):
    def test_upright_rest_has_no_acceleration(self):
        np.testing.assert_allclose(walker_flow(np.zeros(4), [0.0], WalkerParams()), 0.0, atol=1e-15)

    def test_coriolis_vanishes_at_rest(self):
        rng = np.random.default_rng(4)
        q = rng.uniform(-0.5, 0.5, size=(20, 2))
        _, C, _ = walker_matrices(q[:, 0], q[:, 1], np.zeros(20), np.zeros(20), WalkerParams())
        np.testing.assert_array_equal(C, 0.0)

    def test_mass_matrix_is_exactly_symmetric(self):
        rng = np.random.default_rng(5)
        q = rng.uniform(-1, 1, size=(100, 2))
        D, _, _ = walker_matrices(q[:, 0], q[:, 1], np.zeros(100), np.zeros(100), WalkerParams())
        np.testing.assert_array_equal(D[:, 0, 1], D[:, 1, 0])

    def test_flow_matches_straight_line_reevaluation(self):
        rng = np.random.default_rng(6)
        params = WalkerParams()
        for _ in range(1000):
            x = rng.uniform([-0.4, -0.8, -2, -2], [0.4, 0.8, 2, 2])
            u = rng.uniform(-10, 10)
            np.testing.assert_allclose(walker_flow(x, [u], params)[0], walker_oracle(x, u, params),
                                       rtol=1e-12, atol=1e-12)

    def test_relabeling_is_an_involution(self):
        q = np.random.default_rng(7).normal(size=(10, 2))
        np.testing.assert_allclose(walker_relabel(walker_relabel(q)), q, atol=1e-15)

    def test_relabeling_with_closed_legs(self):
        np.testing.assert_array_equal(walker_relabel(np.array([0.2, 0.0])), [0.2, 0.0])

    def test_impact_never_adds_energy(self):
        rng = np.random.default_rng(8)
        params = WalkerParams()
        q1 = -rng.uniform(0.05, 0.25, size=200)
        x = np.stack([q1, -2 * q1, rng.uniform(-2, 0, 200), rng.uniform(-2, 2, 200)], axis=1)
        before = kinetic_energy(x, params)
        after = kinetic_energy(walker_jump(x, params), params)
        self.assertTrue(np.all(after <= before + 1e-9))

    def test_guard_fires_only_after_mid_stance(self):
        before = np.array([[-0.1, 0.21, -1.0, 0.0]])
        after = np.array([[-0.1, 0.19, -1.0, 0.0]])
        self.assertTrue(walker_guard(before, after)[0])
        self.assertFalse(walker_guard(-before, -after)[0])


class RolloutTests(SimpleTestCase):
    def test_zero_horizon_gives_one_sample(self):
        system = setpoint_system()
        traj = rollout(system, "a", None, [0.5], [0.0], 0)
        self.assertEqual(len(traj), 1)
        self.assertFalse(traj.events)

    def test_car_at_equilibrium_stays_put(self):
        system = car_system()
        name = next(iter(system.modes))
        traj = rollout(system, name, None, np.zeros(7), car_p()[0], 20)
        np.testing.assert_allclose(traj.state_array(), 0.0, atol=1e-12)

    def test_car_guard_records_the_exit_state(self):
        system = car_system(dt=0.05)
        name = next(iter(system.modes))
        p = car_p(v_ref=10.0, end=(1.0, 0.0))
        traj = rollout(system, name, None, np.zeros(7), p[0], 100)
        exits = traj.events_of("exit")
        self.assertEqual(len(exits), 1)
        self.assertIsNotNone(traj.exit_state)

    def test_clock_guard_crossed_mid_step(self):
        # o waypoint é alcançado em τ = 0.1, um terço dentro do 4º passo
        system = car_system(dt=0.03)
        name = next(iter(system.modes))
        traj = rollout(system, name, None, np.zeros(7), car_p(v_ref=10.0, end=(1.0, 0.0))[0], 100)
        exit_event = traj.events_of("exit")[0]
        self.assertAlmostEqual(exit_event.t, 0.1, places=6)
        self.assertEqual(len(traj), 5)

    def test_state_guard_is_interpolated(self):
        mode = dataclasses.replace(scalar_linear_mode(), exit_guard=self.half_guard)
        system = HybridSystem({mode.name: mode}, dt=0.1)
        traj = rollout(system, mode.name, None, [1.0], [0.0], 100)
        # x_k = 0.9^k cruza 0.5 entre k = 7 e k = 8
        self.assertAlmostEqual(float(traj.exit_state[0]), 0.5, places=9)
        s = (0.9 ** 7 - 0.5) / (0.9 ** 7 - 0.9 ** 8)
        self.assertAlmostEqual(traj.events_of("exit")[0].t, (7 + s) * 0.1, places=9)

    def test_batch_exit_stops_on_the_guard(self):
        mode = dataclasses.replace(scalar_linear_mode(), exit_guard=self.half_guard)
        out = simulate_batch(mode, None, np.array([[1.0], [0.2]]), np.zeros((2, 1)), 20, 0.1)
        self.assertEqual(out.exit_index.tolist(), [8, -1])
        self.assertAlmostEqual(float(out.final[0, 0]), 0.5, places=9)
        s = (0.9 ** 7 - 0.5) / (0.9 ** 7 - 0.9 ** 8)
        self.assertAlmostEqual(float(out.exit_times(0.1)[0]), (7 + s) * 0.1, places=9)
        self.assertTrue(np.isnan(out.exit_times(0.1)[1]))

    def test_crossing_fraction_of_a_clock_guard(self):
        guard = lambda x_prev, x, p, clock: clock >= 0.25
        s, state = localize_crossing(guard, [[0.0]], [[1.0]], None, 0.2, 0.1)
        self.assertAlmostEqual(float(s[0]), 0.5, places=9)
        self.assertAlmostEqual(float(state[0, 0]), 0.5, places=9)

    def test_initial_state_outside_the_valid_set(self):
        system = HybridSystem({"cubic": cubic_mode()}, dt=0.01)
        with self.assertRaises(RoaPlanError):
            rollout(system, "cubic", None, [5000.0], [0.0], 10)

    @staticmethod
    def half_guard(x_prev, x, p, clock):
        return (x_prev[:, 0] > 0.5) & (x[:, 0] <= 0.5)

    def test_first_order_convergence(self):
        mode = cubic_mode()
        p = np.array([[0.0]])

        def final(dt):
            steps = int(round(0.5 / dt))
            return simulate_batch(mode, None, np.array([[0.5]]), p, steps, dt).final[0, 0]

        reference = final(1e-5)
        ratio = abs(final(1e-2) - reference) / abs(final(5e-3) - reference)
        self.assertAlmostEqual(ratio, 2.0, delta=0.3)

    def test_batch_freezes_invalid_samples(self):
        mode = cubic_mode(sample_radius=2.0)
        x0 = np.array([[0.5], [40.0]])
        out = simulate_batch(mode, None, x0, np.zeros((2, 1)), 50, 0.01)
        self.assertTrue(out.valid[0])
        self.assertFalse(out.valid[1])

    def test_trajectory_csv_keeps_samples_and_events(self):
        traj = Trajectory(0.1)
        traj.record(0.0, "a", [1.0, 2.0], [0.5], 3.0, {"lateral": 0.1})
        traj.record(0.1, "a", [1.5, 2.5], None, None, {"lateral": 0.2})
        traj.add_event(0.1, "exit", "a", "b")
        traj.meta["map"] = "m0"
        with tempfile.TemporaryDirectory() as tmp:
            back = Trajectory.read_csv(traj.write_csv(Path(tmp) / "run.csv"))
        self.assertEqual(len(back), 2)
        np.testing.assert_allclose(back.state_array(), traj.state_array())
        self.assertEqual(back.meta["map"], "m0")
        self.assertEqual([e.kind for e in back.events], ["exit"])
        self.assertEqual(back.values, [3.0, None])
