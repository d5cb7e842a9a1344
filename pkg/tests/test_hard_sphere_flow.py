import math
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from src.ensemble_mc import InitialEnsemble, sample_initial
from src.errors import (
    ContactError,
    EventLimitError,
    MultipleCollisionError,
    NotDispersedError,
    OverlapError,
)
from src.hard_sphere_flow import (
    FlowSettings,
    advance_free,
    apply_collision,
    evolve,
    evolve_to_dispersal,
    predict_pair_collision,
    reverse,
    scatter,
)
from src.phase_core import Particle, PhasePoint, energy, momentum, permute


def head_on() -> PhasePoint:
    return PhasePoint([[-1.5, 0.0], [1.5, 0.0]], [[1.0, 0.0], [-1.0, 0.0]])


def offset_pair() -> PhasePoint:
    """Contact at t = 1.1 with normal (0.8, 0.6)."""
    return PhasePoint([[0.0, 0.0], [1.9, 0.6]], [[0.0, 0.0], [-1.0, 0.0]])


class TestPrediction(unittest.TestCase):
    def test_head_on_time(self):
        p, q = head_on().particles
        self.assertAlmostEqual(predict_pair_collision(p, q), 1.0, delta=1e-12)
        self.assertAlmostEqual(predict_pair_collision(p, q, now=2.0), 3.0, delta=1e-12)

    def test_offset_time(self):
        p, q = offset_pair().particles
        self.assertAlmostEqual(predict_pair_collision(p, q), 1.1, delta=1e-12)

    def test_separating_missing_and_resting(self):
        self.assertIsNone(
            predict_pair_collision(Particle([0, 0], [-1, 0]), Particle([2, 0], [1, 0]))
        )
        self.assertIsNone(
            predict_pair_collision(Particle([0, 0], [0, 0]), Particle([3, 2], [-1, 0]))
        )
        self.assertIsNone(
            predict_pair_collision(Particle([0, 0], [1, 1]), Particle([3, 0], [1, 1]))
        )

    def test_touching_and_approaching_is_now(self):
        t = predict_pair_collision(Particle([0, 0], [0, 0]), Particle([1, 0], [-1, 0]))
        self.assertEqual(t, 0.0)

    def test_overlap_raises(self):
        with self.assertRaises(OverlapError):
            predict_pair_collision(Particle([0, 0], [0, 0]), Particle([0.5, 0], [0, 0]))


class TestCollisionLaw(unittest.TestCase):
    def test_head_on_exchange(self):
        p = Particle([-0.5, 0.0], [1.0, 0.0])
        q = Particle([0.5, 0.0], [-1.0, 0.0])
        p2, q2 = apply_collision(p, q)
        assert_array_equal(p2.v, [-1.0, 0.0])
        assert_array_equal(q2.v, [1.0, 0.0])
        assert_array_equal(p2.x, p.x)

    def test_scatter_is_an_involution(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            omega = rng.standard_normal(3)
            omega /= np.linalg.norm(omega)
            v_i, v_j = rng.standard_normal(3), rng.standard_normal(3)
            back_i, back_j = scatter(omega, *scatter(omega, v_i, v_j))
            assert_allclose(back_i, v_i, rtol=0, atol=1e-14)
            assert_allclose(back_j, v_j, rtol=0, atol=1e-14)

    def test_scatter_conserves(self):
        omega = np.array([0.8, 0.6])
        v_i, v_j = np.array([0.0, 0.0]), np.array([-1.0, 0.0])
        w_i, w_j = scatter(omega, v_i, v_j)
        assert_allclose(w_i, [-0.64, -0.48], atol=1e-15)
        assert_allclose(w_j, [-0.36, 0.48], atol=1e-15)
        assert_allclose(w_i + w_j, v_i + v_j, atol=1e-15)
        self.assertAlmostEqual(w_i @ w_i + w_j @ w_j, 1.0, delta=1e-15)

    def test_not_at_contact(self):
        with self.assertRaises(ContactError):
            apply_collision(Particle([0, 0], [1, 0]), Particle([2, 0], [-1, 0]))

    def test_outgoing_pair(self):
        with self.assertRaises(ContactError):
            apply_collision(Particle([0, 0], [-1, 0]), Particle([1, 0], [1, 0]))


class TestEvolve(unittest.TestCase):
    def test_head_on_dispersal(self):
        traj = evolve_to_dispersal(head_on())
        self.assertTrue(traj.dispersed)
        self.assertEqual(traj.n_events, 1)
        event = traj.events[0]
        self.assertAlmostEqual(event.time, 1.0, delta=1e-12)
        self.assertEqual((event.i, event.j), (0, 1))
        self.assertAlmostEqual(event.strength, 2.0, delta=1e-12)
        assert_allclose(event.omega, [1.0, 0.0])
        assert_allclose(traj.final_state.velocities, [[-1.0, 0.0], [1.0, 0.0]])
        self.assertEqual(traj.final_time, event.time)

    def test_offset_event(self):
        traj = evolve_to_dispersal(offset_pair())
        event = traj.events[0]
        self.assertAlmostEqual(event.time, 1.1, delta=1e-12)
        assert_allclose(event.omega, [0.8, 0.6], atol=1e-12)
        self.assertAlmostEqual(event.strength, 0.8, delta=1e-12)
        self.assertLessEqual(event.approach_speed, 0.0)
        self.assertGreaterEqual(event.separation_speed, 0.0)

    def test_state_at_replays_free_flight(self):
        traj = evolve_to_dispersal(head_on())
        assert_allclose(traj.state_at(3.0).positions, [[-2.5, 0.0], [2.5, 0.0]])
        assert_allclose(traj.state_at(0.5).positions, [[-1.0, 0.0], [1.0, 0.0]])
        # At the event time the state is post-collisional
        assert_allclose(traj.state_at(1.0).velocities, [[-1.0, 0.0], [1.0, 0.0]])
        self.assertEqual(traj.replay_error(), 0.0)

    def test_window_checks(self):
        traj = evolve(head_on(), 0.0, 0.5)
        self.assertFalse(traj.dispersed)
        self.assertEqual(traj.n_events, 0)
        with self.assertRaises(ValueError):
            traj.state_at(0.6)
        with self.assertRaises(ValueError):
            traj.state_at(-0.1)
        with self.assertRaises(ValueError):
            evolve(head_on(), 1.0, 0.5)

    def test_evolve_window_includes_endpoint(self):
        traj = evolve(head_on(), 0.0, 2.0)
        self.assertEqual(traj.n_events, 1)
        assert_allclose(traj.final_state.positions, [[-1.5, 0.0], [1.5, 0.0]])

    def test_single_particle(self):
        state = PhasePoint([[0.0, 0.0]], [[1.0, 2.0]])
        traj = evolve(state, 0.0, 2.0)
        self.assertEqual(traj.n_events, 0)
        assert_array_equal(traj.final_state.positions, [[2.0, 4.0]])
        self.assertTrue(evolve_to_dispersal(state).dispersed)

    def test_collision_free_matches_free_flight(self):
        state = PhasePoint([[-1.0, 0.0], [1.0, 0.0]], [[-1.0, 0.0], [1.0, 0.0]])
        traj = evolve(state, 0.0, 4.0)
        self.assertTrue(traj.final_state.allclose(advance_free(state, 4.0), atol=0))

    def test_symmetric_triple_collision_aborts(self):
        state = PhasePoint(
            [[-2.0, 0.0], [0.0, 0.0], [2.0, 0.0]],
            [[1.0, 0.0], [0.0, 0.0], [-1.0, 0.0]],
        )
        with self.assertRaises(MultipleCollisionError):
            evolve_to_dispersal(state)

    def test_event_limit(self):
        state = PhasePoint(
            [[-3.0, 0.0], [0.0, 0.0], [3.0, 0.0]],
            [[1.0, 0.0], [0.0, 0.0], [-0.5, 0.0]],
        )
        with self.assertRaises(EventLimitError):
            evolve_to_dispersal(state, settings=FlowSettings(max_events=1))

    def test_max_time_horizon(self):
        state = PhasePoint([[-100.0, 0.0], [100.0, 0.0]], [[1.0, 0.0], [-1.0, 0.0]])
        with self.assertRaises(NotDispersedError):
            evolve_to_dispersal(state, settings=FlowSettings(max_time=10.0))

    def test_reverse_retraces(self):
        traj = evolve_to_dispersal(offset_pair())
        end = traj.state_at(3.0)
        back = evolve(reverse(end), 0.0, 3.0).final_state
        self.assertTrue(back.allclose(reverse(offset_pair()), atol=1e-12))


class TestRandomSuite(unittest.TestCase):
    """Seeded dilute gases: ordering, conservation and no overlap."""

    def test_events_are_ordered_and_conserving(self):
        for dim in (2, 3):
            ens = InitialEnsemble(
                n=20, dim=dim, velocity_law="isotropic-gaussian", seed=11
            )
            for draw in range(5):
                state = sample_initial(ens, draw)
                traj = evolve_to_dispersal(state)
                times = [event.time for event in traj.events]
                self.assertEqual(times, sorted(times))
                for event in traj.events:
                    self.assertGreaterEqual(event.strength, 0.0)
                    self.assertLessEqual(event.momentum_residual(), 1e-12)
                    self.assertLessEqual(event.energy_residual(), 1e-12)
                e0, e1 = energy(state), energy(traj.final_state)
                self.assertLessEqual(abs(e1 - e0) / e0, 1e-9)
                assert_allclose(
                    momentum(traj.final_state), momentum(state), rtol=0, atol=1e-9
                )
                self.assertLess(traj.replay_error(), 1e-9)

    def test_deterministic(self):
        ens = InitialEnsemble(n=10, velocity_law="isotropic-gaussian", seed=3)
        first = evolve_to_dispersal(sample_initial(ens, 4))
        second = evolve_to_dispersal(sample_initial(ens, 4))
        self.assertEqual(
            [(e.time, e.i, e.j, e.strength) for e in first.events],
            [(e.time, e.i, e.j, e.strength) for e in second.events],
        )
        self.assertTrue(math.isinf(first.end_time))

    def test_relabeling_commutes_with_the_flow(self):
        rng = np.random.default_rng(2024)
        ens = InitialEnsemble(n=10, velocity_law="isotropic-gaussian", seed=21)
        for draw in range(10):
            state = sample_initial(ens, draw)
            order = rng.permutation(state.n)
            plain = evolve_to_dispersal(state)
            relabeled = evolve_to_dispersal(permute(state, order))
            self.assertEqual(plain.n_events, relabeled.n_events)
            assert_allclose(
                sorted(e.strength for e in relabeled.events),
                sorted(e.strength for e in plain.events),
                rtol=0,
                atol=1e-12,
            )
            t = max(plain.final_time, relabeled.final_time) + 1.0
            expected = permute(plain.state_at(t), order)
            got = relabeled.state_at(t)
            assert_allclose(got.positions, expected.positions, rtol=0, atol=1e-9)
            assert_allclose(got.velocities, expected.velocities, rtol=0, atol=1e-9)


if __name__ == "__main__":
    unittest.main()
