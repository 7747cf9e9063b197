import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from roaplan.bench.ablation import ablated_config, run_ablation
from roaplan.bench.environments import (
    MAX_TURN, MIN_CLEARANCE, SEGMENT_LENGTH, adversarial_car_map, gen_car_map, gen_car_maps, gen_gait_schedules,
    gen_pogo_maze, gen_pogo_mazes, read_maps, write_maps,
)
from roaplan.bench.gait import (
    GaitController, GaitLibrary, GaitTarget, MAX_CORRECTION, find_gait, solve_fixed_point, stride_gain, stride_mode,
    stride_phase,
)
from roaplan.bench.pipeline import certified_modes, level_set_modes
from roaplan.bench.metrics import MetricsRecord, compute_metrics, metrics_frame, summarize
from roaplan.conf import load_config
from roaplan.dynamics.hybrid import Trajectory
from roaplan.dynamics.toy import setpoint_system
from roaplan.exceptions import ConfigError, InfeasibleGaitError, RoaPlanError
from roaplan.io import write_yaml
from roaplan.runtime.walker import walker_system


class CarMapTests(SimpleTestCase):
    def test_generated_maps_respect_the_ranges(self):
        for car_map in gen_car_maps(7, n=5):
            self.assertEqual(len(car_map.segments), 10)
            for seg in car_map.segments:
                self.assertTrue(SEGMENT_LENGTH[0] <= seg.length <= SEGMENT_LENGTH[1])
                self.assertIn(seg.mu, (0.1, 1.0))
            self.assertTrue(np.all(car_map.turns() >= np.pi - MAX_TURN - 1e-12))

    def test_same_seed_same_map(self):
        self.assertEqual(gen_car_map(3).to_dict(), gen_car_map(3).to_dict())
        self.assertNotEqual(gen_car_map(3).to_dict(), gen_car_map(4).to_dict())

    def test_waypoints_chain_the_segments(self):
        car_map = adversarial_car_map()
        np.testing.assert_allclose(car_map.waypoints[1], [30.0, 0.0])
        config = car_map.config(1)
        np.testing.assert_allclose(config[:2], [30.0, 0.0])
        self.assertAlmostEqual(float(np.hypot(*(config[2:4] - config[:2]))), 20.0)
        self.assertEqual(car_map.total_length, 80.0)

    def test_locate_reports_lateral_offset_and_progress(self):
        car_map = adversarial_car_map()
        lateral, progress = car_map.locate(12.0, 0.5, 0)
        self.assertAlmostEqual(lateral, 0.5)
        self.assertAlmostEqual(progress, 12.0)


class PogoMazeTests(SimpleTestCase):
    def test_generated_mazes_leave_room_to_hop(self):
        for maze in gen_pogo_mazes(11, n=10):
            self.assertTrue(3 <= len(maze.segments) <= 5)
            self.assertTrue(all(seg.clearance > MIN_CLEARANCE for seg in maze.segments))

    def test_segment_lookup(self):
        maze = gen_pogo_maze(2)
        starts = maze.starts
        self.assertEqual(maze.segment_index(-1.0), 0)
        self.assertEqual(maze.segment_index(starts[-1] + 1e-6), len(maze.segments) - 1)
        self.assertEqual(maze.segment_index(maze.total_length + 10.0), len(maze.segments) - 1)
        self.assertEqual(maze.floor_at(0.0), maze.segments[0].floor)


class MapFileTests(SimpleTestCase):
    def test_written_maps_are_read_back(self):
        maps = gen_car_maps(5, n=2)
        with tempfile.TemporaryDirectory() as tmp:
            kind, loaded = read_maps(write_maps(Path(tmp) / "maps.yaml", maps, "car", 5))
        self.assertEqual(kind, "car")
        self.assertEqual([m.to_dict() for m in loaded], [m.to_dict() for m in maps])

    def test_unknown_kind_is_a_config_error(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_yaml(Path(tmp) / "maps.yaml", {"kind": "boat", "maps": []})
            with self.assertRaises(ConfigError) as ctx:
                read_maps(path)
        self.assertEqual(ctx.exception.key, "maps.kind")

    def test_gait_schedules_stay_in_range(self):
        for schedule in gen_gait_schedules(0, n=4, n_targets=3, q_range=(0.04, 0.18)):
            self.assertEqual(len(schedule.targets), 3)
            self.assertTrue(all(0.04 <= q <= 0.18 for q in schedule.targets))


def gait(q, offset, gain=None, jacobian_state=None, jacobian_input=None):
    return GaitTarget(q, np.full(4, offset), np.full(4, -offset), 1.0 + q, 0.5, 0.0, 0.7,
                      np.zeros(4) if gain is None else np.asarray(gain, dtype=float),
                      np.zeros((4, 4)) if jacobian_state is None else np.asarray(jacobian_state, dtype=float),
                      np.zeros(4) if jacobian_input is None else np.asarray(jacobian_input, dtype=float))


class GaitLibraryTests(SimpleTestCase):
    def setUp(self):
        self.library = GaitLibrary([gait(0.2, 2.0, [1.0, 0, 0, 0]), gait(0.1, 1.0, [1.0, 0, 0, 0])])

    def test_sorted_by_reference_angle(self):
        np.testing.assert_array_equal(self.library.q_refs, [0.1, 0.2])
        self.assertEqual(self.library.q_range, (0.1, 0.2))

    def test_interpolates_between_gaits(self):
        np.testing.assert_allclose(self.library.fixed_point(0.15), [[1.5, 1.5, 1.5, 1.5]])
        c0, c1 = self.library.coefficients(0.15)
        self.assertAlmostEqual(float(c0[0]), 1.15)
        self.assertAlmostEqual(float(c1[0]), 0.5)

    def test_correction_is_clipped(self):
        x = np.array([1.25, 1.0, 1.0, 1.0])
        self.assertAlmostEqual(float(self.library.correction(0.1, x)[0]), -0.25)
        far = np.array([100.0, 1.0, 1.0, 1.0])
        self.assertEqual(float(self.library.correction(0.1, far)[0]), -MAX_CORRECTION)

    def test_gait_error_is_distance_to_the_fixed_point(self):
        self.assertAlmostEqual(float(self.library.gait_error(0.1, [1.0, 1.0, 1.0, 3.0])[0]), 2.0)

    def test_yaml_save_and_load(self):
        with tempfile.TemporaryDirectory() as tmp:
            loaded = GaitLibrary.load(self.library.save(Path(tmp) / "gaits.yaml"))
        self.assertEqual(loaded.to_dict(), self.library.to_dict())

    def test_empty_library_is_rejected(self):
        with self.assertRaises(InfeasibleGaitError):
            GaitLibrary([])

    def test_reference_outside_the_feasible_range(self):
        with self.assertRaises(InfeasibleGaitError):
            find_gait(0.9)
        with self.assertRaises(InfeasibleGaitError):
            find_gait(0.0)

    def test_stride_phase(self):
        self.assertEqual(float(stride_phase(0.1, 0.1)), 0.0)
        self.assertAlmostEqual(float(stride_phase(-0.1, 0.1)), 1.0)
        self.assertEqual(float(stride_phase(-1.0, 0.1)), 1.25)


class StrideModelTests(SimpleTestCase):
    def setUp(self):
        self.library = GaitLibrary([
            gait(0.1, 1.0, [1.0, 0, 0, 0], 0.5 * np.eye(4), [1.0, 0.0, 0.0, 0.0]),
            gait(0.2, 2.0, [1.0, 0, 0, 0], np.eye(4), [0.0, 1.0, 0.0, 0.0]),
        ])
        self.mode = stride_mode(self.library)

    def test_linearization_is_interpolated(self):
        A, B = self.library.linearization(0.15)
        np.testing.assert_allclose(A[0], 0.75 * np.eye(4))
        np.testing.assert_allclose(B[0], [0.5, 0.5, 0.0, 0.0])

    def test_fixed_point_is_kept_without_correction(self):
        p = np.array([[0.15]])
        x_star = self.mode.equilibrium(p)
        np.testing.assert_allclose(self.mode.step(x_star, np.zeros((1, 1)), p, 1.0), x_star)

    def test_step_follows_the_linear_model(self):
        p = np.array([[0.15]])
        x = 1.5 + np.array([[0.1, -0.2, 0.0, 0.4]])
        x_next = self.mode.step(x, np.array([[2.0]]), p, 1.0)
        np.testing.assert_allclose(x_next, [[2.575, 2.35, 1.5, 1.8]])

    def test_mode_covers_the_library(self):
        np.testing.assert_array_equal(self.mode.config_low, [0.1])
        np.testing.assert_array_equal(self.mode.config_high, [0.2])
        np.testing.assert_array_equal(self.mode.control_high, [MAX_CORRECTION])
        np.testing.assert_array_equal(self.mode.nominal(np.array([[0.1], [0.2]])), np.zeros((2, 1)))

    def test_fixed_point_lipschitz(self):
        self.assertAlmostEqual(self.library.fixed_point_lipschitz(), 20.0)
        self.assertEqual(GaitLibrary([gait(0.1, 1.0)]).fixed_point_lipschitz(), 0.0)

    def test_stride_gain_stabilizes_the_linearization(self):
        A = np.diag([1.5, 0.5, 0.5, 0.5])
        B = np.array([1.0, 0.0, 0.0, 0.0])
        K = stride_gain(A, B)
        closed = A - np.outer(B, K)
        self.assertLess(np.abs(np.linalg.eigvals(closed)).max(), 1.0)

    def test_controller_prefers_the_stride_network(self):
        x = np.array([1.25, 1.0, 1.0, 1.0])
        learned = GaitController(self.library, lambda x, p: np.full((len(x), 1), 0.7))
        self.assertAlmostEqual(float(learned.correction(0.1, x)[0]), 0.7)
        fallback = GaitController(self.library)
        self.assertAlmostEqual(float(fallback.correction(0.1, x)[0]), -0.25)

    def test_walker_is_certified_but_has_no_level_set(self):
        self.assertEqual(certified_modes(walker_system()), ["walker"])
        self.assertEqual(level_set_modes(walker_system()), [])
        system = setpoint_system()
        self.assertEqual(level_set_modes(system), list(system.modes))


class FixedPointTests(SimpleTestCase):
    def test_solves_a_shifted_identity(self):
        x, norm = solve_fixed_point(lambda z: z - np.array([1.0, -2.0]), [[0.0, 0.0]])
        np.testing.assert_allclose(x, [1.0, -2.0], atol=1e-8)
        self.assertLess(norm, 1e-6)

    def test_no_guess_gives_no_solution(self):
        self.assertIsNone(solve_fixed_point(lambda z: z, []))


def car_trajectory(lateral, progress, goal=False, valid=True):
    traj = Trajectory(0.1, meta={"benchmark": "car", "map": "m", "method": "planned", "total_length": 10.0,
                                 "switches": 2, "step_runtime": 1e-3})
    for k, (lat, prog) in enumerate(zip(lateral, progress)):
        traj.record(0.1 * k, "car-mu1", np.zeros(7), aux={"lateral": lat, "progress": prog, "sq_error": lat ** 2})
    if goal:
        traj.add_event(0.1 * len(lateral), "goal", "car-mu1")
    traj.valid = valid
    return traj


class MetricsTests(SimpleTestCase):
    def test_constant_lateral_offset(self):
        record = compute_metrics(car_trajectory([0.5, -0.5, 0.5], [1.0, 2.0, 4.0]))
        self.assertAlmostEqual(record.lane_deviation, 0.5)
        self.assertAlmostEqual(record.mse, 0.25)
        self.assertAlmostEqual(record.distance_to_goal, 0.6)
        self.assertEqual(record.invalid, 0.0)
        self.assertEqual(record.switches, 2)
        self.assertEqual(record.method, "planned")

    def test_goal_means_no_distance_left(self):
        record = compute_metrics(car_trajectory([0.0], [3.0], goal=True, valid=False))
        self.assertEqual(record.distance_to_goal, 0.0)
        self.assertEqual(record.invalid, 1.0)

    def test_pogo_collision_and_velocity_error(self):
        traj = Trajectory(1e-3, meta={"benchmark": "pogo", "total_length": 8.0})
        traj.record(0.0, "apex", np.zeros(4), aux={"vel_error": 0.2, "progress": 0.0})
        traj.record(0.5, "apex", np.zeros(4), aux={"vel_error": 0.4, "progress": 2.0})
        traj.add_event(0.6, "collision", "apex")
        record = compute_metrics(traj)
        self.assertAlmostEqual(record.velocity_error, 0.3)
        self.assertEqual(record.collision, 1.0)
        self.assertAlmostEqual(record.distance_to_goal, 0.75)

    def test_walker_rmse_from_the_audit(self):
        traj = Trajectory(1e-3, meta={"benchmark": "walker"})
        traj.record(0.0, "walker", np.zeros(4))
        audit = pd.DataFrame({"gait_error": [0.3, 0.4]})
        record = compute_metrics(traj, audit=audit)
        self.assertAlmostEqual(record.rmse, np.sqrt(0.125))
        self.assertEqual(record.failure, 1.0)

    def test_unknown_benchmark(self):
        with self.assertRaises(RoaPlanError):
            compute_metrics(Trajectory(0.1), kind="boat")

    def test_summary_averages_per_method(self):
        records = [MetricsRecord("car", "a", "planned", lane_deviation=0.2),
                   MetricsRecord("car", "b", "planned", lane_deviation=0.4),
                   MetricsRecord("car", "a", "naive", lane_deviation=1.0)]
        summary = summarize(records).set_index("method")
        self.assertAlmostEqual(float(summary.loc["planned", "lane_deviation"]), 0.3)
        self.assertAlmostEqual(float(summary.loc["naive", "lane_deviation"]), 1.0)
        self.assertEqual(len(metrics_frame(records)), 3)


class AblationTests(SimpleTestCase):
    def test_unknown_kind(self):
        with self.assertRaises(ConfigError):
            run_ablation("gamma", load_config(), None, {}, [], "unused")

    def test_only_the_car_benchmark(self):
        config = load_config(overrides={"system": {"kind": "walker"}})
        with self.assertRaises(ConfigError) as ctx:
            run_ablation("eta", config, None, {}, [], "unused")
        self.assertEqual(ctx.exception.key, "system.kind")

    def test_variant_leaves_the_base_untouched(self):
        config = load_config()
        variant = ablated_config(config, "dt", 0.02)
        self.assertEqual(variant.execution.dt, 0.02)
        self.assertEqual(config.execution.dt, 0.01)
        self.assertEqual(ablated_config(config, "kappa", 0).planner.kappa, 0.0)
