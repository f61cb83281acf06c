"""Forward simulation of the latent count chains and both observation models.

Simulation works at the level of row multinomials: given ``x_{t-1}``, row
``i`` of ``Z_t`` is ``Mult(x_{t-1}[i], K[i])``. Individual trajectories are
never materialised.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import HorizonCapReached, ModelSpec, validate_counts

MAX_EXTINCTION_STEPS = 100_000


def seed_sequence(seed=None) -> np.random.SeedSequence:
    """Accept an int, ``None`` or an existing SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def make_rng(seed=None) -> np.random.Generator:
    """PCG64-backed generator; passes existing generators through."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class LatentTrajectory:
    """Counts ``x[t]`` for ``t = 0..T`` and transition counts ``z[t-1]`` for ``t = 1..T``."""

    x: np.ndarray
    z: np.ndarray

    @property
    def T(self) -> int:
        return self.z.shape[0]

    @property
    def n(self) -> int:
        return int(self.x[0].sum())

    @property
    def m(self) -> int:
        return self.x.shape[1]


def _row_multinomials(rng, counts, K):
    # clean rounding so numpy's multinomial accepts every row
    P = np.clip(K, 0.0, None)
    P = P / P.sum(axis=-1, keepdims=True)
    return rng.multinomial(counts, P)


def step_latent(rng, spec: ModelSpec, t: int, x_prev: np.ndarray) -> np.ndarray:
    """Draw ``Z_t`` given ``x_{t-1}``."""
    K = spec.K(t, x_prev / spec.n)
    return _row_multinomials(rng, x_prev, K)


def _initial_state(rng, spec: ModelSpec, x0):
    if x0 is None:
        return rng.multinomial(spec.n, spec.pi0)
    return np.array(validate_counts(x0, spec.n, exact=True))


def simulate_latent(spec: ModelSpec, T: int, seed=None, x0=None) -> LatentTrajectory:
    """Simulate ``T`` steps. ``x0`` defaults to a draw from ``Mult(n, pi0)``."""
    if T < 0:
        raise ValueError("T must be nonnegative")
    rng = make_rng(seed)
    m = spec.m
    x = np.empty((T + 1, m), dtype=np.int64)
    z = np.empty((T, m, m), dtype=np.int64)
    x[0] = _initial_state(rng, spec, x0)
    for t in range(1, T + 1):
        z[t - 1] = step_latent(rng, spec, t, x[t - 1])
        x[t] = z[t - 1].sum(axis=0)
    return LatentTrajectory(x, z)


def simulate_until_extinction(spec: ModelSpec, seed=None, x0=None,
                              transient: Sequence[int] = (1, 2),
                              max_steps: int = MAX_EXTINCTION_STEPS) -> LatentTrajectory:
    """Run until every compartment in `transient` is empty at once.

    For the SEIR-type families the transient compartments are exposed and
    infective (indices 1 and 2).
    """
    rng = make_rng(seed)
    xs = [_initial_state(rng, spec, x0)]
    zs = []
    transient = list(transient)
    t = 0
    while xs[-1][transient].sum() > 0:
        if t >= max_steps:
            raise HorizonCapReached(f"epidemic still active after {max_steps} steps")
        t += 1
        zs.append(step_latent(rng, spec, t, xs[-1]))
        xs.append(zs[-1].sum(axis=0))
    m = spec.m
    z = np.array(zs, dtype=np.int64).reshape(len(zs), m, m)
    return LatentTrajectory(np.array(xs, dtype=np.int64), z)


def _thin(rng, counts, q):
    q = np.broadcast_to(np.asarray(q, dtype=float), counts.shape)
    if np.any((q < 0) | (q > 1)):
        raise ValueError("reporting probabilities must lie in [0, 1]")
    return rng.binomial(counts, q)


def simulate_obs_x(traj: LatentTrajectory, q, seed=None) -> np.ndarray:
    """Binomially thinned compartment counts ``y_t ~ Bin(x_t, q_t)`` for t = 1..T.

    `q` broadcasts against ``(T, m)``.
    """
    return _thin(make_rng(seed), traj.x[1:], q)


def simulate_obs_z(traj: LatentTrajectory, Q, seed=None) -> np.ndarray:
    """Binomially thinned transition counts ``Y_t ~ Bin(Z_t, Q_t)``; `Q` broadcasts against ``(T, m, m)``."""
    return _thin(make_rng(seed), traj.z, Q)
