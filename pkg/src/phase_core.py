"""phase_core.py

Microstates of N unit-diameter hard spheres and the scalar functionals the
virial identities are written in: the virial r_N(t), the moment of inertia
I_N, energy, momentum, angular momentum and the pair strength W_N.

Positions are in sphere diameters, velocities in diameters per unit time.
Indices are 0-based here; anything written to disk is 1-based.
"""

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from src.errors import OverlapError

TOL_OVERLAP = 1e-9
TOL_CONTACT = 1e-9
TOL_TIME = 1e-12


@dataclass(frozen=True)
class Tolerances:
    """Numerical bands used for admissibility, contact and event ties."""

    overlap: float = TOL_OVERLAP
    contact: float = TOL_CONTACT
    time: float = TOL_TIME

    def __post_init__(self) -> None:
        for name in ("overlap", "contact", "time"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"Tolerance '{name}' must be >= 0, got {value}")


DEFAULT_TOLERANCES = Tolerances()


def as_space_vec(values: Iterable[float], dim: int = 0) -> np.ndarray:
    """Return a read-only float vector, checking dimension and finiteness."""
    vec = np.array(values, dtype=float).reshape(-1)
    if dim and vec.size != dim:
        raise ValueError(f"Expected {dim} components, got {vec.size}")
    if vec.size < 2:
        raise ValueError(f"Dimension must be >= 2, got {vec.size}")
    if not np.all(np.isfinite(vec)):
        raise ValueError(f"Non-finite component in {vec}")
    vec.setflags(write=False)
    return vec


@dataclass(frozen=True, eq=False)
class Particle:
    """Position and velocity of one sphere center."""

    x: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        x = as_space_vec(self.x)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", as_space_vec(self.v, x.size))

    @property
    def dim(self) -> int:
        return self.x.size


def pairwise_distances(positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distances |x_i - x_j| for i < j in lexicographic pair order, together
    with the (2, P) array of pair indices."""
    n = positions.shape[0]
    rows, cols = np.triu_indices(n, k=1)
    deltas = positions[cols] - positions[rows]
    return np.sqrt(np.einsum("pk,pk->p", deltas, deltas)), np.vstack((rows, cols))


def check_admissible(positions: np.ndarray, tol_overlap: float = TOL_OVERLAP) -> None:
    """Raise OverlapError if any pair of centers is closer than 1 - tol."""
    if positions.shape[0] < 2:
        return
    dist, pairs = pairwise_distances(positions)
    worst = int(np.argmin(dist))
    if dist[worst] < 1.0 - tol_overlap:
        i, j = pairs[:, worst]
        raise OverlapError(
            f"Particles {i + 1} and {j + 1} overlap: distance {dist[worst]!r}"
        )


@dataclass(frozen=True, eq=False)
class PhasePoint:
    """Full microstate Z_N = (X_N, V_N), stored as two read-only (N, d) arrays."""

    positions: np.ndarray
    velocities: np.ndarray
    tol_overlap: float = TOL_OVERLAP

    def __post_init__(self) -> None:
        positions = np.array(self.positions, dtype=float)
        velocities = np.array(self.velocities, dtype=float)
        if positions.ndim != 2 or positions.shape[0] < 1:
            raise ValueError(
                f"Positions must be an (N, d) array, got {positions.shape}"
            )
        if positions.shape != velocities.shape:
            raise ValueError(
                f"Shape mismatch: positions {positions.shape}, "
                f"velocities {velocities.shape}"
            )
        if positions.shape[1] < 2:
            raise ValueError(f"Dimension must be >= 2, got {positions.shape[1]}")
        if not (np.all(np.isfinite(positions)) and np.all(np.isfinite(velocities))):
            raise ValueError("Phase point has non-finite coordinates")
        check_admissible(positions, self.tol_overlap)
        positions.setflags(write=False)
        velocities.setflags(write=False)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "velocities", velocities)

    @classmethod
    def from_particles(
        cls, particles: Sequence[Particle], tol_overlap: float = TOL_OVERLAP
    ) -> "PhasePoint":
        return cls(
            np.array([p.x for p in particles]),
            np.array([p.v for p in particles]),
            tol_overlap,
        )

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def particles(self) -> tuple[Particle, ...]:
        return tuple(self.particle(i) for i in range(self.n))

    def particle(self, i: int) -> Particle:
        if not 0 <= i < self.n:
            raise IndexError(f"Particle index {i} out of range for N={self.n}")
        return Particle(self.positions[i], self.velocities[i])

    def allclose(self, other: "PhasePoint", atol: float = 1e-9) -> bool:
        """True if both states agree coordinate-wise within atol."""
        return (
            self.positions.shape == other.positions.shape
            and np.allclose(self.positions, other.positions, rtol=0.0, atol=atol)
            and np.allclose(self.velocities, other.velocities, rtol=0.0, atol=atol)
        )

    def to_dict(self) -> dict:
        return {
            "positions": self.positions.tolist(),
            "velocities": self.velocities.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict, tol_overlap: float = TOL_OVERLAP) -> "PhasePoint":
        try:
            return cls(data["positions"], data["velocities"], tol_overlap)
        except KeyError as e:
            raise ValueError(f"State mapping is missing {e}") from e


@dataclass(frozen=True, eq=False)
class Functionals:
    """Scalar functionals of a state, computed not stored."""

    energy: float
    momentum: np.ndarray
    angular_momentum: np.ndarray
    inertia: float
    virial: float


def virial(state: PhasePoint, t: float) -> float:
    """r_N(t, Z_N) = sum_i (x_i . v_i - |v_i|^2 t)."""
    x, v = state.positions, state.velocities
    return float(np.einsum("ik,ik->", x, v) - np.einsum("ik,ik->", v, v) * t)


def inertia(state: PhasePoint) -> float:
    """I_N(Z_N) = sum_i |x_i|^2."""
    return float(np.einsum("ik,ik->", state.positions, state.positions))


def free_flight_inertia(state: PhasePoint, dt: float) -> float:
    """I_N((X_N + V_N dt, V_N)), the inertia if nothing ever collided."""
    moved = state.positions + state.velocities * dt
    return float(np.einsum("ik,ik->", moved, moved))


def energy(state: PhasePoint) -> float:
    """sum_i |v_i|^2 (unit mass, no factor 1/2)."""
    return float(np.einsum("ik,ik->", state.velocities, state.velocities))


def momentum(state: PhasePoint) -> np.ndarray:
    return state.velocities.sum(axis=0)


def angular_momentum(state: PhasePoint) -> np.ndarray:
    """Antisymmetric d x d tensor sum_i (x_i v_i^T - v_i x_i^T)."""
    outer = state.positions.T @ state.velocities
    return outer - outer.T


def functionals(state: PhasePoint, t: float = 0.0) -> Functionals:
    return Functionals(
        energy=energy(state),
        momentum=momentum(state),
        angular_momentum=angular_momentum(state),
        inertia=inertia(state),
        virial=virial(state, t),
    )


def _check_pair(state: PhasePoint, i: int, j: int) -> None:
    if i == j:
        raise ValueError(f"Pair indices must differ, got ({i}, {j})")
    for k in (i, j):
        if not 0 <= k < state.n:
            raise IndexError(f"Particle index {k} out of range for N={state.n}")


def pair_virial_strength(state: PhasePoint, i: int, j: int) -> float:
    """W_N^(i,j) = |(x_j - x_i) . (v_j - v_i)|."""
    _check_pair(state, i, j)
    dx = state.positions[j] - state.positions[i]
    dv = state.velocities[j] - state.velocities[i]
    return abs(float(dx @ dv))


def closest_pair(state: PhasePoint, tol: float = 0.0) -> tuple[int, int]:
    """The pair (i, j), i < j, minimizing |x_i - x_j|.

    Equal distances go to the lexicographically first pair. A positive
    ``tol`` widens what counts as equal.
    """
    if state.n < 2:
        raise ValueError(f"closest_pair needs N >= 2, got N={state.n}")
    dist, pairs = pairwise_distances(state.positions)
    first = int(np.argmax(dist <= dist.min() + tol))
    return int(pairs[0, first]), int(pairs[1, first])


def closest_pair_strength(state: PhasePoint) -> float:
    """W_N(Z_N): the pair strength evaluated at the closest pair."""
    i, j = closest_pair(state)
    return pair_virial_strength(state, i, j)


def permute(state: PhasePoint, order: Sequence[int]) -> PhasePoint:
    """sigma Z_N = (z_sigma(1), ..., z_sigma(N)) for a 0-based permutation."""
    order = np.asarray(order, dtype=int)
    if sorted(order.tolist()) != list(range(state.n)):
        raise ValueError(f"{order.tolist()} is not a permutation of {state.n} indices")
    return PhasePoint(
        state.positions[order], state.velocities[order], state.tol_overlap
    )
