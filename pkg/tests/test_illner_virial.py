import math
import unittest

import numpy as np

from src.ensemble_mc import InitialEnsemble, simulate_two_sided
from src.errors import NotDispersedError
from src.hard_sphere_flow import FlowSettings, evolve, evolve_to_dispersal, reverse
from src.illner_virial import (
    check_collision_parameters,
    check_conservation,
    check_illner_identity,
    check_inertia_gap,
    check_inertia_lemma,
    check_optimal_strength_bound,
    check_r_bound,
    check_reversibility,
    check_total_strength_bound,
    lambda_grid,
    optimal_lambda,
    r_bound_rhs,
    sample_times,
    sweep_lambda,
    verify_trajectory,
)
from src.phase_core import PhasePoint


def head_on() -> PhasePoint:
    return PhasePoint([[-1.5, 0.0], [1.5, 0.0]], [[1.0, 0.0], [-1.0, 0.0]])


def offset_pair() -> PhasePoint:
    return PhasePoint([[0.0, 0.0], [1.9, 0.6]], [[0.0, 0.0], [-1.0, 0.0]])


def separating_pair() -> PhasePoint:
    """Parallel opposite motion: no collision forward or backward in time."""
    return PhasePoint([[-1.0, 0.0], [1.0, 0.0]], [[0.0, 1.0], [0.0, -1.0]])


class TestIllnerIdentity(unittest.TestCase):
    def test_head_on_ledger(self):
        traj = evolve_to_dispersal(head_on())
        report = check_illner_identity(traj, 2.0)
        self.assertAlmostEqual(report.r_start, -3.0, delta=1e-12)
        self.assertAlmostEqual(report.r_end, -1.0, delta=1e-12)
        self.assertAlmostEqual(report.jump_sum, 2.0, delta=1e-12)
        self.assertTrue(report.holds())

    def test_before_the_collision(self):
        traj = evolve_to_dispersal(head_on())
        report = check_illner_identity(traj, 0.5)
        self.assertEqual(report.jump_sum, 0.0)
        self.assertEqual(report.residual, 0.0)

    def test_collision_free_residual_is_zero(self):
        traj = evolve_to_dispersal(separating_pair())
        for t in sample_times(traj):
            report = check_illner_identity(traj, t)
            self.assertEqual(report.residual, 0.0)
            self.assertEqual(report.max_rel_residual, 0.0)

    def test_time_outside_window(self):
        traj = evolve(head_on(), 0.0, 0.5)
        with self.assertRaises(ValueError):
            check_illner_identity(traj, 1.0)

    def test_fault_injection_breaks_identity(self):
        settings = FlowSettings(fault_inject=True)
        traj = evolve_to_dispersal(offset_pair(), settings=settings)
        self.assertEqual(traj.n_events, 1)
        self.assertFalse(check_illner_identity(traj, 2.0).holds())
        self.assertFalse(check_conservation(traj).holds())

    def test_fault_injection_on_axis_aligned_collision(self):
        settings = FlowSettings(fault_inject=True)
        traj = evolve_to_dispersal(head_on(), settings=settings)
        self.assertEqual(traj.n_events, 1)
        event = traj.events[0]
        # Still separating along omega, but no longer the elastic outcome
        self.assertGreater(event.separation_speed, 0.0)
        self.assertFalse(np.allclose(event.v_j_post, [1.0, 0.0]))
        self.assertFalse(check_illner_identity(traj, 2.0).holds())
        self.assertFalse(check_conservation(traj).holds())


class TestInertia(unittest.TestCase):
    def test_head_on_values(self):
        traj = evolve_to_dispersal(head_on())
        report = check_inertia_lemma(traj, 3.0)
        self.assertAlmostEqual(report.lhs, 4.5, delta=1e-12)
        self.assertAlmostEqual(report.rhs, 12.5, delta=1e-12)
        self.assertTrue(report.satisfied)

    def test_gap_formula(self):
        traj = evolve_to_dispersal(head_on())
        report = check_inertia_gap(traj, 3.0)
        self.assertAlmostEqual(report.gap, 8.0, delta=1e-12)
        self.assertAlmostEqual(report.predicted, 8.0, delta=1e-12)

    def test_collision_free_equality(self):
        traj = evolve_to_dispersal(separating_pair())
        for t in sample_times(traj):
            self.assertEqual(check_inertia_lemma(traj, t).slack, 0.0)


class TestBounds(unittest.TestCase):
    def test_r_bound_arithmetic(self):
        traj = evolve_to_dispersal(head_on())
        self.assertAlmostEqual(r_bound_rhs(traj, 1.0), 3.25)
        report = check_r_bound(traj, 0.0, 1.0)
        self.assertEqual(report.lhs, 3.0)
        self.assertTrue(report.satisfied)
        with self.assertRaises(ValueError):
            r_bound_rhs(traj, 0.0)

    def test_total_strength_bounds(self):
        forward = evolve_to_dispersal(head_on())
        backward = evolve_to_dispersal(reverse(head_on()))
        self.assertEqual(backward.n_events, 0)
        report = check_total_strength_bound(forward, 1.0, backward)
        self.assertAlmostEqual(report.lhs, 2.0, delta=1e-12)
        self.assertAlmostEqual(report.rhs, 13.0)
        star = check_optimal_strength_bound(forward, backward)
        self.assertAlmostEqual(star.rhs, 12.0)
        self.assertGreater(star.slack, 0.0)
        self.assertAlmostEqual(optimal_lambda(forward), 2.0 / 3.0)

    def test_backward_must_start_from_reverse(self):
        forward = evolve_to_dispersal(head_on())
        with self.assertRaises(ValueError):
            check_total_strength_bound(forward, 1.0, forward)

    def test_requires_dispersal(self):
        traj = evolve(head_on(), 0.0, 0.5)
        with self.assertRaises(NotDispersedError):
            check_total_strength_bound(traj, 1.0)

    def test_sweep_covers_grid_and_optimum(self):
        forward = evolve_to_dispersal(head_on())
        backward = evolve_to_dispersal(reverse(head_on()))
        sweep = sweep_lambda(forward, sample_times(forward), backward)
        self.assertEqual(len(sweep), 62)
        self.assertTrue(sweep["r_satisfied"].all())
        self.assertTrue(sweep["strength_satisfied"].all())
        self.assertAlmostEqual(
            sweep.loc[sweep["optimal"], "strength_rhs"].iloc[0], 12.0
        )

    def test_lambda_grid(self):
        grid = lambda_grid()
        self.assertEqual(grid.size, 61)
        self.assertAlmostEqual(grid[0], 1e-3)
        self.assertAlmostEqual(grid[-1], 1e3)
        self.assertAlmostEqual(grid[30], 1.0)


class TestOtherChecks(unittest.TestCase):
    def test_collision_parameters(self):
        traj = evolve_to_dispersal(offset_pair())
        report = check_collision_parameters(traj)
        self.assertEqual(report.mismatches, 0)
        self.assertLess(report.max_residual, 1e-12)

    def test_reversibility(self):
        traj = evolve_to_dispersal(offset_pair())
        self.assertLess(check_reversibility(traj), 1e-12)

    def test_sample_times(self):
        traj = evolve_to_dispersal(head_on())
        times = sample_times(traj, 20)
        self.assertEqual(times.size, 20)
        self.assertEqual(times[0], 0.0)
        self.assertAlmostEqual(times[-1], 2.5)


class TestRandomSuite(unittest.TestCase):
    """A reduced version of the seeded acceptance suite."""

    def test_every_check_passes(self):
        for n, dim in ((2, 2), (5, 3), (10, 2), (20, 2)):
            ens = InitialEnsemble(
                n=n, dim=dim, velocity_law="isotropic-gaussian", seed=2024
            )
            for draw in range(4):
                _, forward, backward = simulate_two_sided(ens, draw)
                record = verify_trajectory(forward, backward)
                self.assertTrue(record.passed, msg=f"N={n} d={dim} draw={draw}")
                self.assertGreaterEqual(record.min_jump, 0.0)
                self.assertGreater(record.lambda_star_slack, 0.0)
                row = record.to_row()
                self.assertTrue(row["passed"])
                if n <= 10:
                    self.assertFalse(math.isnan(record.reversibility_error))

    def test_collision_free_record(self):
        forward = evolve_to_dispersal(separating_pair())
        backward = evolve_to_dispersal(reverse(separating_pair()))
        record = verify_trajectory(forward, backward, sample_count=5)
        self.assertEqual(record.identity_residual, 0.0)
        self.assertEqual(record.inertia_min_slack, 0.0)
        self.assertTrue(record.passed)
        self.assertTrue(np.isfinite(record.total_strength))


if __name__ == "__main__":
    unittest.main()
