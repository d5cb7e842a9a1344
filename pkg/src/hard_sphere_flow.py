"""hard_sphere_flow.py

The hard sphere flow psi_N^t: exact free flight between collisions, the
elastic collision law at contact, and an event-driven scheduler that keeps
per-pair contact predictions in a binary heap. After each collision only the
pairs involving the two collided particles are predicted again.

A single evolution is sequential and owns all of its mutable state, so any
number of evolutions may run side by side in separate processes.
"""

import heapq
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from src.errors import (
    ContactError,
    EventLimitError,
    MultipleCollisionError,
    NotDispersedError,
    OverlapError,
)
from src.phase_core import DEFAULT_TOLERANCES, Particle, PhasePoint, Tolerances

MAX_EVENTS = 10**7
MAX_TIME = 1e4


@dataclass(frozen=True)
class FlowSettings:
    """Tolerances and safety rails for one evolution."""

    tolerances: Tolerances = DEFAULT_TOLERANCES
    max_events: int = MAX_EVENTS
    max_time: float = MAX_TIME
    # Test-only: corrupt every post-collision velocity pair (see _inject_fault)
    fault_inject: bool = False


DEFAULT_SETTINGS = FlowSettings()


def _relative(error: float, scale: float) -> float:
    return error / scale if scale > 0.0 else error


@dataclass(frozen=True, eq=False)
class CollisionEvent:
    """One binary collision. ``omega`` is the unit normal x_j - x_i at contact
    and ``strength`` is |omega . (v_j_pre - v_i_pre)|."""

    time: float
    i: int
    j: int
    omega: np.ndarray
    v_i_pre: np.ndarray
    v_j_pre: np.ndarray
    v_i_post: np.ndarray
    v_j_post: np.ndarray
    strength: float

    @property
    def approach_speed(self) -> float:
        """omega . (v_j - v_i) before the collision; <= 0 for incoming pairs."""
        return float(self.omega @ (self.v_j_pre - self.v_i_pre))

    @property
    def separation_speed(self) -> float:
        """omega . (v_j - v_i) after the collision; >= 0 for outgoing pairs."""
        return float(self.omega @ (self.v_j_post - self.v_i_post))

    def momentum_residual(self) -> float:
        """Largest componentwise momentum change, relative to the pair speed."""
        change = (self.v_i_post + self.v_j_post) - (self.v_i_pre + self.v_j_pre)
        scale = math.sqrt(self.v_i_pre @ self.v_i_pre + self.v_j_pre @ self.v_j_pre)
        return _relative(float(np.max(np.abs(change))), scale)

    def energy_residual(self) -> float:
        pre = float(self.v_i_pre @ self.v_i_pre + self.v_j_pre @ self.v_j_pre)
        post = float(self.v_i_post @ self.v_i_post + self.v_j_post @ self.v_j_post)
        return _relative(abs(post - pre), pre)


def _contact_delays(dx: np.ndarray, dv: np.ndarray) -> np.ndarray:
    """Delays until |dx + dv tau| = 1 for each row, np.inf where the pair never
    closes to contact.

    Solves |dv|^2 tau^2 + 2 (dx.dv) tau + |dx|^2 - 1 = 0 for the first root of
    an approaching pair (dx.dv < 0). With b = dx.dv < 0 the stable form
    q = -b + sqrt(b^2 - ac) gives the first root as c / q.
    """
    a = np.einsum("pk,pk->p", dv, dv)
    b = np.einsum("pk,pk->p", dx, dv)
    c = np.einsum("pk,pk->p", dx, dx) - 1.0
    disc = b * b - a * c
    approaching = (b < 0.0) & (disc > 0.0)
    q = -b + np.sqrt(np.where(approaching, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        delays = np.where(approaching, c / q, np.inf)
    # Overlap within tolerance while approaching: collide now
    return np.maximum(delays, 0.0)


def predict_pair_collision(
    p: Particle,
    q: Particle,
    now: float = 0.0,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> Optional[float]:
    """Absolute time of the next contact of p and q under free flight, or None
    if they never touch (missing, separating or already past)."""
    dx = q.x - p.x
    dv = q.v - p.v
    if dx @ dx < (1.0 - tolerances.overlap) ** 2:
        raise OverlapError(f"Pair overlaps: distance {math.sqrt(dx @ dx)!r}")
    delay = _contact_delays(dx[np.newaxis, :], dv[np.newaxis, :])[0]
    return None if np.isinf(delay) else now + float(delay)


def scatter(
    omega: np.ndarray, v_i: np.ndarray, v_j: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """The elastic collision transform for unit normal omega.

    v_i* = v_i + omega omega.(v_j - v_i), v_j* = v_j - omega omega.(v_j - v_i).
    Applying it twice gives back (v_i, v_j).
    """
    u = float(omega @ (v_j - v_i))
    return v_i + omega * u, v_j - omega * u


def apply_collision(
    p: Particle, q: Particle, tolerances: Tolerances = DEFAULT_TOLERANCES
) -> tuple[Particle, Particle]:
    """Collide two particles at contact. Positions are unchanged."""
    dx = q.x - p.x
    dist = math.sqrt(dx @ dx)
    if abs(dist - 1.0) > tolerances.contact:
        raise ContactError(f"Pair is not at contact: distance {dist!r}")
    omega = dx / dist
    approach = float(omega @ (q.v - p.v))
    if approach > tolerances.contact:
        raise ContactError(f"Pair is not incoming: omega.(v_q - v_p) = {approach!r}")
    v_p, v_q = scatter(omega, p.v, q.v)
    return Particle(p.x, v_p), Particle(q.x, v_q)


def advance_free(state: PhasePoint, dt: float) -> PhasePoint:
    """Move every particle in a straight line for time dt."""
    return PhasePoint(
        state.positions + state.velocities * dt, state.velocities, state.tol_overlap
    )


def reverse(state: PhasePoint) -> PhasePoint:
    """Negate all velocities; the flow run forward from reverse(Z) retraces
    the past of Z."""
    return PhasePoint(state.positions, -state.velocities, state.tol_overlap)


def _inject_fault(
    omega: np.ndarray, v_i: np.ndarray, v_j: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Negate one post-collision velocity component.

    The component is picked so that omega.(v_j - v_i) does not decrease, which
    keeps the pair separating; |v|^2 is unchanged while momentum is not.

    Axis-aligned collisions can leave no such component (head-on along e_1).
    Then v_j gets a kick perpendicular to omega of size omega.(v_j - v_i):
    the pair still separates at the same normal speed, but energy, momentum
    and the virial jump all change.
    """
    v_i, v_j = v_i.copy(), v_j.copy()
    for vel, sign in ((v_j, 1.0), (v_i, -1.0)):
        candidates = np.flatnonzero((sign * omega * vel <= 0.0) & (vel != 0.0))
        if candidates.size:
            k = candidates[np.argmax(np.abs(vel[candidates]))]
            vel[k] = -vel[k]
            return v_i, v_j
    axis = np.zeros_like(omega)
    axis[np.argmin(np.abs(omega))] = 1.0
    tangent = axis - (axis @ omega) * omega
    tangent /= np.linalg.norm(tangent)
    v_j += abs(float(omega @ (v_j - v_i))) * tangent
    return v_i, v_j


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Initial data, the ordered collision log and the terminal state.

    Together these reconstruct psi^t Z for every t in [t0, final_time], and for
    every t >= t0 once the trajectory has dispersed.
    """

    initial: PhasePoint
    t0: float
    events: tuple[CollisionEvent, ...]
    final_time: float
    final_state: PhasePoint
    dispersed: bool

    @property
    def n_events(self) -> int:
        return len(self.events)

    @property
    def end_time(self) -> float:
        """Last time the log describes; free flight continues forever after
        dispersal."""
        return math.inf if self.dispersed else self.final_time

    @property
    def total_strength(self) -> float:
        return math.fsum(event.strength for event in self.events)

    def strength_until(self, t: float) -> float:
        """Sum of event strengths with event time <= t."""
        return math.fsum(event.strength for event in self.events if event.time <= t)

    def check_time(self, t: float) -> None:
        if not self.t0 <= t <= self.end_time:
            raise ValueError(
                f"Time {t!r} outside trajectory window [{self.t0!r}, {self.end_time!r}]"
            )

    def states_at(self, times: Sequence[float]) -> list[PhasePoint]:
        """Replay free flight and the recorded velocity jumps up to each time.

        A state at exactly an event time is post-collisional.
        """
        for t in times:
            self.check_time(t)
        x = np.array(self.initial.positions)
        v = np.array(self.initial.velocities)
        now = self.t0
        k = 0
        states: dict[int, PhasePoint] = {}
        for slot in sorted(range(len(times)), key=lambda s: times[s]):
            t = times[slot]
            while k < len(self.events) and self.events[k].time <= t:
                event = self.events[k]
                x += v * (event.time - now)
                now = event.time
                v[event.i] = event.v_i_post
                v[event.j] = event.v_j_post
                k += 1
            states[slot] = PhasePoint(
                x + v * (t - now), v.copy(), self.initial.tol_overlap
            )
        return [states[slot] for slot in range(len(times))]

    def state_at(self, t: float) -> PhasePoint:
        return self.states_at([t])[0]

    def replay_error(self) -> float:
        """Largest coordinate difference between the replayed and the stored
        final state."""
        replayed = self.state_at(self.final_time)
        return float(
            max(
                np.max(np.abs(replayed.positions - self.final_state.positions)),
                np.max(np.abs(replayed.velocities - self.final_state.velocities)),
            )
        )


class _EventLoop:
    """Scheduler state for one evolution: positions at ``now``, a heap of
    (time, i, j, count_i, count_j) predictions and per-particle collision
    counters that invalidate stale heap entries."""

    def __init__(self, state: PhasePoint, t0: float, settings: FlowSettings):
        self.x = np.array(state.positions)
        self.v = np.array(state.velocities)
        self.now = float(t0)
        self.settings = settings
        self.tol = settings.tolerances
        self.n = state.n
        self.counts = np.zeros(self.n, dtype=np.int64)
        self.predicted = np.full((self.n, self.n), np.inf)
        self.queue: list[tuple[float, int, int, int, int]] = []
        self.events: list[CollisionEvent] = []
        for i in range(self.n - 1):
            self._predict(i, np.arange(i + 1, self.n))

    def _predict(self, i: int, others: np.ndarray) -> None:
        if others.size == 0:
            return
        dx = self.x[others] - self.x[i]
        dv = self.v[others] - self.v[i]
        dist2 = np.einsum("pk,pk->p", dx, dx)
        if np.any(dist2 < (1.0 - self.tol.overlap) ** 2):
            k = int(others[np.argmin(dist2)])
            raise OverlapError(
                f"Particles {i + 1} and {k + 1} overlap at t={self.now!r}: "
                f"distance {math.sqrt(dist2.min())!r}"
            )
        times = self.now + _contact_delays(dx, dv)
        self.predicted[i, others] = times
        self.predicted[others, i] = times
        for k, t in zip(others.tolist(), times.tolist()):
            if t == math.inf:
                continue
            a, b = (i, k) if i < k else (k, i)
            heapq.heappush(
                self.queue, (t, a, b, int(self.counts[a]), int(self.counts[b]))
            )

    def peek(self) -> Optional[tuple[float, int, int, int, int]]:
        """Next valid prediction, discarding stale heap entries."""
        while self.queue:
            head = self.queue[0]
            _, a, b, count_a, count_b = head
            if count_a == self.counts[a] and count_b == self.counts[b]:
                return head
            heapq.heappop(self.queue)
        return None

    def _soonest_other(self, i: int, j: int) -> float:
        mask = np.ones(self.n, dtype=bool)
        mask[[i, j]] = False
        if not mask.any():
            return math.inf
        return float(min(self.predicted[i, mask].min(), self.predicted[j, mask].min()))

    def _check_cluster(self, t: float, i: int, j: int) -> None:
        if self._soonest_other(i, j) <= t + self.tol.time:
            raise MultipleCollisionError(
                f"Multiple collision: particles {i + 1}, {j + 1} and a third "
                f"particle meet within {self.tol.time!r} of t={t!r}"
            )

    def collide(self, t: float, i: int, j: int) -> None:
        self._check_cluster(t, i, j)
        self.x += self.v * (t - self.now)
        self.now = t

        dx = self.x[j] - self.x[i]
        dist = math.sqrt(dx @ dx)
        omega = dx / dist
        v_i, v_j = self.v[i].copy(), self.v[j].copy()
        approach = float(omega @ (v_j - v_i))
        if approach > 0.0:
            # Grazing prediction that rounding turned into a separating pair
            logging.debug(
                "Dropping spurious event (%d, %d) at t=%r, omega.dv=%.3g",
                i + 1,
                j + 1,
                t,
                approach,
            )
            self.predicted[i, j] = self.predicted[j, i] = math.inf
            return
        if abs(dist - 1.0) > self.tol.contact:
            logging.warning(
                "Contact drift %.3g for pair (%d, %d) at t=%r",
                dist - 1.0,
                i + 1,
                j + 1,
                t,
            )

        # Project the pair onto exact contact
        mid = 0.5 * (self.x[i] + self.x[j])
        self.x[i] = mid - 0.5 * omega
        self.x[j] = mid + 0.5 * omega

        v_i_post, v_j_post = scatter(omega, v_i, v_j)
        if self.settings.fault_inject:
            v_i_post, v_j_post = _inject_fault(omega, v_i_post, v_j_post)
        self.v[i] = v_i_post
        self.v[j] = v_j_post
        omega.setflags(write=False)
        for vec in (v_i, v_j, v_i_post, v_j_post):
            vec.setflags(write=False)
        self.events.append(
            CollisionEvent(
                time=t,
                i=i,
                j=j,
                omega=omega,
                v_i_pre=v_i,
                v_j_pre=v_j,
                v_i_post=v_i_post,
                v_j_post=v_j_post,
                strength=abs(approach),
            )
        )
        if len(self.events) > self.settings.max_events:
            raise EventLimitError(
                f"More than {self.settings.max_events} collisions by t={t!r}"
            )

        self.counts[i] += 1
        self.counts[j] += 1
        everyone = np.arange(self.n)
        self._predict(i, everyone[everyone != i])
        self._predict(j, everyone[(everyone != i) & (everyone != j)])
        self._check_cluster(t, i, j)

    def run(self, until: float, horizon: float = math.inf) -> None:
        """Process every event with time <= until."""
        while True:
            head = self.peek()
            if head is None or head[0] > until:
                return
            if head[0] > horizon:
                raise NotDispersedError(
                    f"Still colliding after t={horizon!r} "
                    f"({len(self.events)} events so far)"
                )
            heapq.heappop(self.queue)
            self.collide(head[0], head[1], head[2])

    def advance_to(self, t: float) -> None:
        self.x += self.v * (t - self.now)
        self.now = t

    def trajectory(self, initial: PhasePoint, t0: float) -> Trajectory:
        final_state = PhasePoint(self.x.copy(), self.v.copy(), self.tol.overlap)
        dispersed = self.peek() is None
        logging.debug(
            "Evolved N=%d over [%r, %r]: %d events, dispersed=%s",
            self.n,
            t0,
            self.now,
            len(self.events),
            dispersed,
        )
        return Trajectory(
            initial=initial,
            t0=t0,
            events=tuple(self.events),
            final_time=self.now,
            final_state=final_state,
            dispersed=dispersed,
        )


def evolve(
    state: PhasePoint,
    t0: float,
    t1: float,
    settings: FlowSettings = DEFAULT_SETTINGS,
) -> Trajectory:
    """psi^(t1 - t0) applied to ``state`` (given at time t0), with its
    collision log."""
    if t1 < t0:
        raise ValueError(f"End time {t1!r} precedes start time {t0!r}")
    loop = _EventLoop(state, t0, settings)
    loop.run(until=t1)
    loop.advance_to(t1)
    return loop.trajectory(state, t0)


def evolve_to_dispersal(
    state: PhasePoint,
    t0: float = 0.0,
    settings: FlowSettings = DEFAULT_SETTINGS,
) -> Trajectory:
    """Run until no pair will ever collide again. ``final_time`` is the time of
    the last collision (t0 if there is none)."""
    loop = _EventLoop(state, t0, settings)
    loop.run(until=math.inf, horizon=t0 + settings.max_time)
    return loop.trajectory(state, t0)
