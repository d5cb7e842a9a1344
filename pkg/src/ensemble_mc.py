"""ensemble_mc.py

Seeded Monte Carlo over symmetric initial densities f_N(0) and the spacetime
estimate built on them.

The collision-trace side of the estimate is never integrated over the contact
surface. It is reached through the ensemble mean of the two-sided total
collision strength: by exchangeability every unordered pair contributes
equally, so restricting to pairs inside {1, ..., s} scales the mean by
s(s-1) / (N(N-1)). A per-pair tagged estimator is carried alongside as an
independent cross-check of that reduction.

Every draw is keyed by (seed, stream, draw index), so parallel and serial runs
see the same states and reduce them in the same order.
"""

import concurrent.futures
import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from src.errors import NotDispersedError, PackingError
from src.hard_sphere_flow import (
    DEFAULT_SETTINGS,
    FlowSettings,
    Trajectory,
    evolve_to_dispersal,
    reverse,
)
from src.illner_virial import check_optimal_strength_bound
from src.phase_core import PhasePoint, energy, inertia, pairwise_distances

POSITION_LAWS = ("uniform-ball", "uniform-cube")
VELOCITY_LAWS = ("uniform-ball", "isotropic-gaussian")
PACKING_FRACTION = 0.3
MAX_ATTEMPTS = 10**5
STREAM_TRAJECTORIES = 0
STREAM_MOMENTS = 1


def ball_volume(dim: int, radius: float) -> float:
    return math.pi ** (dim / 2) * radius**dim / math.gamma(dim / 2 + 1)


@dataclass(frozen=True)
class InitialEnsemble:
    """Sampling law for f_N(0): i.i.d. positions conditioned jointly on no
    overlap, i.i.d. velocities, optional outward radial drift."""

    n: int
    dim: int = 2
    position_law: str = "uniform-ball"
    radius: float = 15.0
    side: float = 30.0
    velocity_law: str = "uniform-ball"
    sigma: float = 1.0
    speed: float = 1.0
    drift: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"Ensemble needs N >= 1, got {self.n}")
        if self.dim < 2:
            raise ValueError(f"Dimension must be >= 2, got {self.dim}")
        if self.position_law not in POSITION_LAWS:
            raise ValueError(
                f"Unknown position law '{self.position_law}', "
                f"expected one of {POSITION_LAWS}"
            )
        if self.velocity_law not in VELOCITY_LAWS:
            raise ValueError(
                f"Unknown velocity law '{self.velocity_law}', "
                f"expected one of {VELOCITY_LAWS}"
            )
        for name in ("radius", "side", "sigma", "speed"):
            value = getattr(self, name)
            if not value > 0.0:
                raise ValueError(f"'{name}' must be positive, got {value}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"Seed must be a 64-bit unsigned integer, got {self.seed}")
        occupied = self.n * ball_volume(self.dim, 0.5)
        if occupied > PACKING_FRACTION * self.domain_volume:
            raise PackingError(
                f"Packing too dense: {self.n} spheres occupy {occupied:.4g}, more "
                f"than {PACKING_FRACTION} of the domain volume {self.domain_volume:.4g}"
            )

    @property
    def domain_volume(self) -> float:
        if self.position_law == "uniform-ball":
            return ball_volume(self.dim, self.radius)
        return self.side**self.dim

    def rng(self, draw: int, stream: int = STREAM_TRAJECTORIES) -> np.random.Generator:
        return np.random.default_rng([self.seed, stream, draw])


def _uniform_ball(rng: np.random.Generator, n: int, dim: int, radius: float):
    directions = rng.standard_normal((n, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return directions * (radius * rng.random(n) ** (1.0 / dim))[:, np.newaxis]


def _sample_positions(ens: InitialEnsemble, rng: np.random.Generator) -> np.ndarray:
    if ens.position_law == "uniform-ball":
        return _uniform_ball(rng, ens.n, ens.dim, ens.radius)
    return rng.uniform(-ens.side / 2, ens.side / 2, size=(ens.n, ens.dim))


def _sample_velocities(ens: InitialEnsemble, rng: np.random.Generator) -> np.ndarray:
    if ens.velocity_law == "isotropic-gaussian":
        return ens.sigma * rng.standard_normal((ens.n, ens.dim))
    return _uniform_ball(rng, ens.n, ens.dim, ens.speed)


def sample_initial(
    ens: InitialEnsemble, draw: int = 0, stream: int = STREAM_TRAJECTORIES
) -> PhasePoint:
    """Draw one admissible state. The whole configuration is redrawn until no
    pair is within one diameter, which keeps the law exchangeable."""
    rng = ens.rng(draw, stream)
    for attempt in range(1, MAX_ATTEMPTS + 1):
        positions = _sample_positions(ens, rng)
        if ens.n < 2 or pairwise_distances(positions)[0].min() > 1.0:
            break
    else:
        raise PackingError(
            f"Packing too dense: no admissible configuration for N={ens.n} "
            f"after {MAX_ATTEMPTS} attempts"
        )
    logging.debug("Draw %d accepted after %d attempt(s)", draw, attempt)
    velocities = _sample_velocities(ens, rng)
    if ens.drift:
        norms = np.linalg.norm(positions, axis=1, keepdims=True)
        outward = np.divide(
            positions, norms, out=np.zeros_like(positions), where=norms > 0
        )
        velocities = velocities + ens.drift * outward
    return PhasePoint(positions, velocities)


def analytic_velocity_moment(ens: InitialEnsemble) -> Optional[float]:
    """E|v|^2 for one particle when the law has a closed form."""
    if ens.drift:
        return None
    if ens.velocity_law == "isotropic-gaussian":
        return ens.dim * ens.sigma**2
    return ens.dim / (ens.dim + 2) * ens.speed**2


def estimate_moments(ens: InitialEnsemble, samples: int) -> tuple[float, float]:
    """(E|x|^2, E|v|^2) of the one-particle marginal at time 0, from a sample
    stream independent of the trajectory draws."""
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    states = [sample_initial(ens, draw, STREAM_MOMENTS) for draw in range(samples)]
    moment_x = math.fsum(inertia(s) for s in states) / (samples * ens.n)
    moment_v = analytic_velocity_moment(ens)
    if moment_v is None:
        moment_v = math.fsum(energy(s) for s in states) / (samples * ens.n)
    return moment_x, moment_v


def collision_strength_total(traj: Trajectory) -> float:
    """Sum of event strengths of a dispersed trajectory."""
    if not traj.dispersed:
        raise NotDispersedError(
            f"Trajectory ending at t={traj.final_time!r} has future collisions"
        )
    return traj.total_strength


def pair_strength_matrix(traj: Trajectory) -> np.ndarray:
    """(N, N) matrix with the strength accumulated by each pair i < j."""
    totals = np.zeros((traj.initial.n, traj.initial.n))
    for event in traj.events:
        totals[event.i, event.j] += event.strength
    return totals


def simulate_two_sided(
    ens: InitialEnsemble, draw: int, settings: FlowSettings = DEFAULT_SETTINGS
) -> tuple[PhasePoint, Trajectory, Trajectory]:
    """Draw Z and disperse both Z and reverse(Z); the second run holds the
    collisions of Z at negative times."""
    state = sample_initial(ens, draw)
    forward = evolve_to_dispersal(state, 0.0, settings)
    backward = evolve_to_dispersal(reverse(state), 0.0, settings)
    return state, forward, backward


@dataclass(frozen=True)
class DrawResult:
    draw: int
    events: int
    total_strength: float
    energy: float
    inertia: float
    lambda_star_bound: float
    lambda_star_slack: float
    tagged: tuple[tuple[int, float], ...] = ()

    def to_row(self) -> dict:
        row = asdict(self)
        del row["tagged"]
        for s, value in self.tagged:
            row[f"tagged_s{s}"] = value
        return row


def simulate_draw(
    ens: InitialEnsemble,
    draw: int,
    s_orders: Sequence[int] = (),
    settings: FlowSettings = DEFAULT_SETTINGS,
) -> DrawResult:
    state, forward, backward = simulate_two_sided(ens, draw, settings)
    pairs = pair_strength_matrix(forward) + pair_strength_matrix(backward)
    star = check_optimal_strength_bound(forward, backward)
    return DrawResult(
        draw=draw,
        events=forward.n_events + backward.n_events,
        total_strength=collision_strength_total(forward)
        + collision_strength_total(backward),
        energy=energy(state),
        inertia=inertia(state),
        lambda_star_bound=star.rhs,
        lambda_star_slack=star.slack,
        tagged=tuple((s, float(pairs[:s, :s].sum())) for s in s_orders),
    )


def _simulate_draw_task(
    args: tuple[InitialEnsemble, int, tuple[int, ...], FlowSettings],
) -> DrawResult:
    """Process pool entry point."""
    return simulate_draw(*args)


def run_draws(
    ens: InitialEnsemble,
    samples: int,
    s_orders: Sequence[int] = (),
    settings: FlowSettings = DEFAULT_SETTINGS,
    workers: int = 1,
) -> pd.DataFrame:
    """One summary row per draw, in draw order regardless of ``workers``."""
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    tasks = [(ens, draw, tuple(s_orders), settings) for draw in range(samples)]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as executor:
            chunk = max(1, samples // (4 * workers))
            results = list(executor.map(_simulate_draw_task, tasks, chunksize=chunk))
    else:
        results = [_simulate_draw_task(task) for task in tasks]
    logging.info(
        "Simulated %d two-sided trajector%s (%d collisions)",
        samples,
        "y" if samples == 1 else "ies",
        sum(r.events for r in results),
    )
    return pd.DataFrame([r.to_row() for r in results])


def default_c_d(n: int) -> float:
    """4 N / (N - 1): the optimal total strength bound averaged with
    Cauchy-Schwarz, then reduced to s-particle pairs."""
    if n < 2:
        raise ValueError(f"default_c_d needs N >= 2, got {n}")
    return 4.0 * n / (n - 1)


def spacetime_rhs(
    n: int, s: int, c_d: float, moment_x: float, moment_v: float
) -> float:
    """c_d s(s-1)/N sqrt(E|x|^2) sqrt(E|v|^2)."""
    if not c_d > 0.0:
        raise ValueError(f"c_d must be positive, got {c_d}")
    return c_d * s * (s - 1) / n * math.sqrt(moment_x) * math.sqrt(moment_v)


@dataclass(frozen=True)
class EstimateReport:
    """Monte Carlo estimates of both sides of the spacetime estimate.

    ``estimate_marginal_lhs`` fills only the left-hand fields; standard errors
    are None for a single sample.
    """

    s: int
    samples: int
    lhs_estimate: float
    lhs_stderr: Optional[float]
    tagged_estimate: float
    tagged_stderr: Optional[float]
    moment_x: Optional[float] = None
    moment_v: Optional[float] = None
    rhs_bound: Optional[float] = None
    c_d_used: Optional[float] = None
    bound_ratio: Optional[float] = None

    @property
    def relative_stderr(self) -> Optional[float]:
        if self.lhs_stderr is None or not self.rhs_bound:
            return None
        return self.lhs_stderr / self.rhs_bound

    @property
    def passed(self) -> Optional[bool]:
        """bound_ratio + 3 relative standard errors <= 1; None when there is
        nothing to assert."""
        if self.bound_ratio is None or self.relative_stderr is None:
            return None
        return self.bound_ratio + 3.0 * self.relative_stderr <= 1.0

    @property
    def estimators_agree(self) -> Optional[bool]:
        """Symmetry-reduced and tagged estimators within 3 combined standard
        errors."""
        if self.lhs_stderr is None or self.tagged_stderr is None:
            return None
        spread = 3.0 * math.hypot(self.lhs_stderr, self.tagged_stderr)
        return abs(self.lhs_estimate - self.tagged_estimate) <= spread

    def to_dict(self) -> dict:
        report = asdict(self)
        report["relative_stderr"] = self.relative_stderr
        report["passed"] = self.passed
        report["estimators_agree"] = self.estimators_agree
        return report


def _check_order(ens: InitialEnsemble, s: int) -> None:
    if not 2 <= s <= ens.n:
        raise ValueError(f"Marginal order s={s} outside [2, {ens.n}]")


def _mean_and_stderr(values: pd.Series) -> tuple[float, Optional[float]]:
    mean = float(values.mean())
    if len(values) < 2:
        return mean, None
    return mean, float(values.std(ddof=1)) / math.sqrt(len(values))


def estimate_marginal_lhs(
    ens: InitialEnsemble,
    s: int,
    samples: int,
    settings: FlowSettings = DEFAULT_SETTINGS,
    workers: int = 1,
    draws: Optional[pd.DataFrame] = None,
) -> EstimateReport:
    """s(s-1)/(N(N-1)) times the mean two-sided total strength, plus the
    tagged mean over pairs inside {1, ..., s}."""
    _check_order(ens, s)
    if draws is None:
        draws = run_draws(ens, samples, (s,), settings, workers)
    factor = s * (s - 1) / (ens.n * (ens.n - 1))
    mean, stderr = _mean_and_stderr(draws["total_strength"])
    tagged, tagged_stderr = _mean_and_stderr(draws[f"tagged_s{s}"])
    return EstimateReport(
        s=s,
        samples=len(draws),
        lhs_estimate=factor * mean,
        lhs_stderr=None if stderr is None else factor * stderr,
        tagged_estimate=tagged,
        tagged_stderr=tagged_stderr,
    )


def compute_rhs_bound(
    ens: InitialEnsemble, s: int, samples: int, c_d: float
) -> float:
    moment_x, moment_v = estimate_moments(ens, samples)
    return spacetime_rhs(ens.n, s, c_d, moment_x, moment_v)


def verify_spacetime_estimates(
    ens: InitialEnsemble,
    s_orders: Sequence[int],
    samples: int,
    c_d: Optional[float] = None,
    settings: FlowSettings = DEFAULT_SETTINGS,
    workers: int = 1,
    draws: Optional[pd.DataFrame] = None,
) -> list[EstimateReport]:
    """Full reports for several marginal orders sharing one set of draws."""
    for s in s_orders:
        _check_order(ens, s)
    if c_d is None:
        c_d = default_c_d(ens.n)
    if draws is None:
        draws = run_draws(ens, samples, s_orders, settings, workers)
    moment_x, moment_v = estimate_moments(ens, samples)
    reports = []
    for s in s_orders:
        lhs = estimate_marginal_lhs(ens, s, samples, settings, workers, draws)
        rhs = spacetime_rhs(ens.n, s, c_d, moment_x, moment_v)
        report = EstimateReport(
            **{
                **asdict(lhs),
                "moment_x": moment_x,
                "moment_v": moment_v,
                "rhs_bound": rhs,
                "c_d_used": c_d,
                "bound_ratio": lhs.lhs_estimate / rhs,
            }
        )
        logging.info(
            "s=%d: lhs %.6g, rhs %.6g, ratio %.4g", s, report.lhs_estimate, rhs,
            report.bound_ratio,
        )
        reports.append(report)
    return reports


def verify_spacetime_estimate(
    ens: InitialEnsemble,
    s: int,
    samples: int,
    c_d: Optional[float] = None,
    settings: FlowSettings = DEFAULT_SETTINGS,
    workers: int = 1,
) -> EstimateReport:
    return verify_spacetime_estimates(ens, [s], samples, c_d, settings, workers)[0]
