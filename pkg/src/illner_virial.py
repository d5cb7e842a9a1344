"""illner_virial.py

Checks of Illner's identity and the Illner-Pulvirenti virial bounds along
simulated trajectories:

- the identity r(t) - r(t0) = sum of collision strengths up to t, with every
  strength non-negative;
- the inertia lemma I_N(psi^t Z) >= I_N(X + V t, V), and its exact form
  I_N(psi^t Z) - I_N(X + V t, V) = 2 sum_k strength_k (t - t_k);
- the bound |r(t)| <= (lambda I_N(Z) + energy(Z) / lambda) / 2;
- the total strength bound sum_k strength_k <= 2 (lambda I_N(Z) + energy(Z) / lambda)
  over the whole time line, and its optimal form 4 sqrt(I_N(Z) energy(Z)).

Right-hand sides are always evaluated at the initial data of the trajectory.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from src.errors import NotDispersedError
from src.hard_sphere_flow import (
    DEFAULT_SETTINGS,
    FlowSettings,
    Trajectory,
    evolve,
    reverse,
)
from src.phase_core import (
    angular_momentum,
    energy,
    free_flight_inertia,
    inertia,
    momentum,
    pairwise_distances,
    virial,
)

BOUND_RTOL = 1e-9
IDENTITY_RTOL = 1e-8
EVENT_CONSERVATION_RTOL = 1e-12
DRIFT_RTOL = 1e-9
REVERSIBILITY_RTOL = 1e-7
REVERSIBILITY_MAX_EVENTS = 100
REVERSIBILITY_MAX_PARTICLES = 10
SAMPLE_TIMES = 20


@dataclass(frozen=True)
class IdentityReport:
    """One evaluation of Illner's identity at time t."""

    t: float
    r_start: float
    r_end: float
    jump_sum: float
    residual: float
    max_rel_residual: float
    min_jump: float

    def holds(self, rtol: float = IDENTITY_RTOL) -> bool:
        return self.max_rel_residual <= rtol and self.min_jump >= 0.0


@dataclass(frozen=True)
class BoundReport:
    """lhs <= rhs with a small relative allowance; ``lam`` is None for bounds
    without a free parameter."""

    lhs: float
    rhs: float
    lam: Optional[float]
    satisfied: bool
    slack: float

    @classmethod
    def compare(cls, lhs: float, rhs: float, lam: Optional[float] = None):
        satisfied = lhs <= rhs + BOUND_RTOL * max(1.0, rhs)
        return cls(lhs=lhs, rhs=rhs, lam=lam, satisfied=satisfied, slack=rhs - lhs)


@dataclass(frozen=True)
class InertiaGapReport:
    t: float
    gap: float
    predicted: float
    residual: float
    max_rel_residual: float


@dataclass(frozen=True)
class ConservationReport:
    max_event_momentum: float
    max_event_energy: float
    min_separation_speed: float
    energy_drift: float
    momentum_drift: float
    angular_momentum_drift: float

    def holds(self) -> bool:
        return (
            self.max_event_momentum <= EVENT_CONSERVATION_RTOL
            and self.max_event_energy <= EVENT_CONSERVATION_RTOL
            and self.min_separation_speed >= 0.0
            and max(self.energy_drift, self.momentum_drift, self.angular_momentum_drift)
            <= DRIFT_RTOL
        )


@dataclass(frozen=True)
class ParameterReport:
    """W_N at each pre-collision contact state against the recorded strength."""

    max_residual: float
    mismatches: int


def _check_lambda(lam: float) -> None:
    if not lam > 0.0 or not math.isfinite(lam):
        raise ValueError(f"lambda must be a positive finite number, got {lam!r}")


def _require_dispersed(traj: Trajectory) -> None:
    if not traj.dispersed:
        raise NotDispersedError(
            f"Trajectory ending at t={traj.final_time!r} has future collisions"
        )


def check_illner_identity(traj: Trajectory, t: float) -> IdentityReport:
    """Compare r(t) - r(t0) with the sum of collision strengths up to t.

    r is constant along free flight, so r(t) is evaluated right after the last
    collision at or before t.
    """
    traj.check_time(t)
    jumps = [event.strength for event in traj.events if event.time <= t]
    anchor = traj.events[len(jumps) - 1].time if jumps else traj.t0
    r_start = virial(traj.initial, traj.t0)
    r_end = virial(traj.state_at(anchor), anchor)
    jump_sum = math.fsum(jumps)
    residual = r_end - r_start - jump_sum
    return IdentityReport(
        t=t,
        r_start=r_start,
        r_end=r_end,
        jump_sum=jump_sum,
        residual=residual,
        max_rel_residual=abs(residual) / (1.0 + abs(r_start) + jump_sum),
        min_jump=min(jumps, default=0.0),
    )


def check_inertia_lemma(traj: Trajectory, t: float) -> BoundReport:
    """lhs is the free-flight inertia, rhs the inertia along the true flow."""
    traj.check_time(t)
    free = free_flight_inertia(traj.initial, t - traj.t0)
    return BoundReport.compare(free, inertia(traj.state_at(t)))


def check_inertia_gap(traj: Trajectory, t: float) -> InertiaGapReport:
    traj.check_time(t)
    flow = inertia(traj.state_at(t))
    gap = flow - free_flight_inertia(traj.initial, t - traj.t0)
    predicted = 2.0 * math.fsum(
        event.strength * (t - event.time) for event in traj.events if event.time <= t
    )
    residual = gap - predicted
    return InertiaGapReport(
        t=t,
        gap=gap,
        predicted=predicted,
        residual=residual,
        max_rel_residual=abs(residual) / (1.0 + flow),
    )


def r_bound_rhs(traj: Trajectory, lam: float) -> float:
    _check_lambda(lam)
    return 0.5 / lam * (lam**2 * inertia(traj.initial) + energy(traj.initial))


def check_r_bound(traj: Trajectory, t: float, lam: float) -> BoundReport:
    """|r(t)| against (lambda I_N(Z) + energy(Z) / lambda) / 2, with r measured
    from the trajectory's start time."""
    rhs = r_bound_rhs(traj, lam)
    traj.check_time(t)
    lhs = abs(virial(traj.state_at(t), t - traj.t0))
    return BoundReport.compare(lhs, rhs, lam)


def _two_sided_strength(traj: Trajectory, backward: Optional[Trajectory]) -> float:
    _require_dispersed(traj)
    if backward is None:
        return traj.total_strength
    _require_dispersed(backward)
    if not (
        np.array_equal(backward.initial.positions, traj.initial.positions)
        and np.array_equal(backward.initial.velocities, -traj.initial.velocities)
    ):
        raise ValueError("Backward trajectory does not start from reverse(Z)")
    return traj.total_strength + backward.total_strength


def check_total_strength_bound(
    traj: Trajectory, lam: float, backward: Optional[Trajectory] = None
) -> BoundReport:
    """Total collision strength against 2 (lambda I_N(Z) + energy(Z) / lambda).

    Pass the dispersal of reverse(Z) as ``backward`` to cover negative times.
    """
    _check_lambda(lam)
    lhs = _two_sided_strength(traj, backward)
    rhs = 2.0 / lam * (lam**2 * inertia(traj.initial) + energy(traj.initial))
    return BoundReport.compare(lhs, rhs, lam)


def optimal_lambda(traj: Trajectory) -> float:
    """sqrt(energy / I_N), which minimizes both bounds; 1.0 when either
    vanishes."""
    i_n, e_n = inertia(traj.initial), energy(traj.initial)
    if i_n > 0.0 and e_n > 0.0:
        return math.sqrt(e_n / i_n)
    return 1.0


def check_optimal_strength_bound(
    traj: Trajectory, backward: Optional[Trajectory] = None
) -> BoundReport:
    """Total strength against 4 sqrt(I_N(Z) energy(Z))."""
    lhs = _two_sided_strength(traj, backward)
    rhs = 4.0 * math.sqrt(inertia(traj.initial) * energy(traj.initial))
    return BoundReport.compare(lhs, rhs, optimal_lambda(traj))


def lambda_grid(points: int = 61, low: float = 1e-3, high: float = 1e3) -> np.ndarray:
    return np.logspace(math.log10(low), math.log10(high), points)


def sample_times(traj: Trajectory, count: int = SAMPLE_TIMES) -> np.ndarray:
    """Evenly spaced check times covering the collisions and, for dispersed
    trajectories, a stretch of the free flight afterwards."""
    span = traj.final_time - traj.t0
    if traj.dispersed:
        span = 1.5 * span + 1.0
    return traj.t0 + np.linspace(0.0, span, count)


def sweep_lambda(
    traj: Trajectory,
    times: Sequence[float],
    backward: Optional[Trajectory] = None,
    lambdas: Optional[np.ndarray] = None,
) -> pd.DataFrame:
    """Evaluate the r bound (worst case over ``times``) and the total strength
    bound for every lambda in the grid plus the optimal lambda."""
    if lambdas is None:
        lambdas = lambda_grid()
    lam_star = optimal_lambda(traj)
    lams = np.append(np.asarray(lambdas, dtype=float), lam_star)
    if np.any(lams <= 0.0):
        raise ValueError("lambda values must be positive")
    i_n, e_n = inertia(traj.initial), energy(traj.initial)
    states = traj.states_at(list(times))
    r_max = max(abs(virial(s, t - traj.t0)) for s, t in zip(states, times))
    r_rhs = 0.5 / lams * (lams**2 * i_n + e_n)
    sweep = pd.DataFrame(
        {
            "lambda": lams,
            "optimal": np.arange(lams.size) == lams.size - 1,
            "r_lhs": r_max,
            "r_rhs": r_rhs,
            "r_slack": r_rhs - r_max,
        }
    )
    sweep["r_satisfied"] = r_max <= r_rhs + BOUND_RTOL * np.maximum(1.0, r_rhs)
    if traj.dispersed and (backward is None or backward.dispersed):
        total = _two_sided_strength(traj, backward)
        strength_rhs = 4.0 * r_rhs
        sweep["strength_lhs"] = total
        sweep["strength_rhs"] = strength_rhs
        sweep["strength_slack"] = strength_rhs - total
        sweep["strength_satisfied"] = total <= strength_rhs + BOUND_RTOL * np.maximum(
            1.0, strength_rhs
        )
    return sweep


def check_conservation(traj: Trajectory) -> ConservationReport:
    """Per-event conservation residuals and the drift of energy, momentum and
    angular momentum between the initial and the final state."""
    start, end = traj.initial, traj.final_state
    e0 = energy(start)
    speed_scale = math.sqrt(e0)
    l_scale = math.sqrt(inertia(start) * e0)
    drift_p = float(np.max(np.abs(momentum(end) - momentum(start))))
    drift_l = float(np.max(np.abs(angular_momentum(end) - angular_momentum(start))))
    return ConservationReport(
        max_event_momentum=max(
            (event.momentum_residual() for event in traj.events), default=0.0
        ),
        max_event_energy=max(
            (event.energy_residual() for event in traj.events), default=0.0
        ),
        min_separation_speed=min(
            (event.separation_speed for event in traj.events), default=0.0
        ),
        energy_drift=abs(energy(end) - e0) / e0 if e0 > 0.0 else energy(end),
        momentum_drift=drift_p / speed_scale if speed_scale > 0.0 else drift_p,
        angular_momentum_drift=drift_l / l_scale if l_scale > 0.0 else drift_l,
    )


def check_collision_parameters(traj: Trajectory, tol: float = 1e-9) -> ParameterReport:
    """At every contact the colliding pair is (one of) the closest pairs and
    W_N equals the recorded strength."""
    if not traj.events:
        return ParameterReport(max_residual=0.0, mismatches=0)
    states = traj.states_at([event.time for event in traj.events])
    worst, mismatches = 0.0, 0
    for event, state in zip(traj.events, states):
        dist, pairs = pairwise_distances(state.positions)
        slot = int(np.flatnonzero((pairs[0] == event.i) & (pairs[1] == event.j))[0])
        if dist[slot] > dist.min() + tol:
            mismatches += 1
        dx = state.positions[event.j] - state.positions[event.i]
        w = abs(float(dx @ (event.v_j_pre - event.v_i_pre)))
        worst = max(worst, abs(w - event.strength) / (1.0 + event.strength))
    return ParameterReport(max_residual=worst, mismatches=mismatches)


def check_reversibility(
    traj: Trajectory, settings: FlowSettings = DEFAULT_SETTINGS
) -> float:
    """Run reverse(psi^T Z) forward for T and compare with reverse(Z).

    Returns the largest coordinate error relative to 1 + max |x|.
    """
    span = traj.final_time - traj.t0
    if traj.dispersed:
        span += 1.0
    end = traj.state_at(traj.t0 + span)
    back = evolve(reverse(end), 0.0, span, settings).final_state
    target = reverse(traj.initial)
    error = max(
        np.max(np.abs(back.positions - target.positions)),
        np.max(np.abs(back.velocities - target.velocities)),
    )
    return float(error) / (1.0 + float(np.max(np.abs(traj.initial.positions))))


@dataclass(frozen=True)
class VerificationRecord:
    """Worst values of every check over both halves of one trajectory."""

    events: int
    total_strength: float
    energy: float
    inertia: float
    identity_residual: float
    min_jump: float
    inertia_min_slack: float
    inertia_gap_residual: float
    r_bound_min_slack: float
    strength_bound_min_slack: float
    lambda_star_slack: float
    event_momentum_residual: float
    event_energy_residual: float
    drift: float
    parameter_mismatches: int
    reversibility_error: float
    identity_ok: bool
    inertia_ok: bool
    bounds_ok: bool
    conservation_ok: bool
    reversibility_ok: bool

    @property
    def passed(self) -> bool:
        return (
            self.identity_ok
            and self.inertia_ok
            and self.bounds_ok
            and self.conservation_ok
            and self.reversibility_ok
            and self.parameter_mismatches == 0
        )

    def to_row(self) -> dict:
        row = asdict(self)
        row["passed"] = self.passed
        return row


def verify_trajectory(
    forward: Trajectory,
    backward: Trajectory,
    sample_count: int = SAMPLE_TIMES,
    settings: FlowSettings = DEFAULT_SETTINGS,
    lambdas: Optional[np.ndarray] = None,
) -> VerificationRecord:
    """Run every check on the forward dispersal of Z and the forward dispersal
    of reverse(Z)."""
    identity, inertia_slack, gap, r_slack, conservation = [], [], [], [], []
    reversibility = []
    mismatches = 0
    for traj in (forward, backward):
        times = sample_times(traj, sample_count)
        identity.extend(check_illner_identity(traj, t) for t in times)
        inertia_slack.extend(check_inertia_lemma(traj, t) for t in times)
        gap.extend(check_inertia_gap(traj, t) for t in times)
        sweep = sweep_lambda(traj, times, lambdas=lambdas)
        r_slack.append(sweep)
        conservation.append(check_conservation(traj))
        mismatches += check_collision_parameters(traj).mismatches
        if (
            traj.n_events <= REVERSIBILITY_MAX_EVENTS
            and traj.initial.n <= REVERSIBILITY_MAX_PARTICLES
        ):
            reversibility.append(check_reversibility(traj, settings))

    two_sided = sweep_lambda(forward, [forward.t0], backward, lambdas)
    star = check_optimal_strength_bound(forward, backward)
    star_ok = star.satisfied and (star.slack > 0.0 or star.lhs == 0.0)
    reversibility_error = max(reversibility, default=math.nan)

    record = VerificationRecord(
        events=forward.n_events + backward.n_events,
        total_strength=star.lhs,
        energy=energy(forward.initial),
        inertia=inertia(forward.initial),
        identity_residual=max(r.max_rel_residual for r in identity),
        min_jump=min(r.min_jump for r in identity),
        inertia_min_slack=min(r.slack for r in inertia_slack),
        inertia_gap_residual=max(r.max_rel_residual for r in gap),
        r_bound_min_slack=float(min(s["r_slack"].min() for s in r_slack)),
        strength_bound_min_slack=float(two_sided["strength_slack"].min()),
        lambda_star_slack=star.slack,
        event_momentum_residual=max(c.max_event_momentum for c in conservation),
        event_energy_residual=max(c.max_event_energy for c in conservation),
        drift=max(
            max(c.energy_drift, c.momentum_drift, c.angular_momentum_drift)
            for c in conservation
        ),
        parameter_mismatches=mismatches,
        reversibility_error=reversibility_error,
        identity_ok=all(r.holds() for r in identity)
        and all(r.max_rel_residual <= IDENTITY_RTOL for r in gap),
        inertia_ok=all(r.satisfied for r in inertia_slack),
        bounds_ok=bool(
            all(s["r_satisfied"].all() for s in r_slack)
            and two_sided["strength_satisfied"].all()
            and star_ok
        ),
        conservation_ok=all(c.holds() for c in conservation),
        reversibility_ok=not reversibility_error > REVERSIBILITY_RTOL,
    )
    logging.debug(
        "Verified trajectory with %d events: identity residual %.3g, passed=%s",
        record.events,
        record.identity_residual,
        record.passed,
    )
    return record
