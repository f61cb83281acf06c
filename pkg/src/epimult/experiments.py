"""Reusable simulation experiments: the Ebola synthetic-recovery setup and the
filtering bias / coverage study.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ModelSpec
from .estimate import EbolaProblem
from .filtering import ObsZ, filter_z, filtered_mean_and_ci
from .models import make_spec, seeded_pi0
from .simulate import LatentTrajectory, make_rng, seed_sequence, simulate_latent, simulate_obs_z, simulate_until_extinction

#: True parameters of the synthetic Ebola outbreak.
EBOLA_TRUTH = {"beta": 0.2, "lambda": 0.2, "rho": 0.2, "gamma": 0.143,
               "q23": 291 / 316, "q34": 236 / 316}
EBOLA_N = 5_364_501
EBOLA_T_STAR = 130


def ebola_reporting(q23: float, q34: float) -> np.ndarray:
    Q = np.zeros((4, 4))
    Q[1, 2] = q23
    Q[2, 3] = q34
    return Q


def ebola_spec(n: int = EBOLA_N, theta=None, t_star: float = EBOLA_T_STAR) -> ModelSpec:
    th = dict(EBOLA_TRUTH if theta is None else theta)
    kernel_theta = {k: th[k] for k in ("beta", "lambda", "rho", "gamma")}
    kernel_theta.update(t_star=t_star, h=1.0)
    return make_spec("ebola", n, seeded_pi0(4, n), kernel_theta)


@dataclass(frozen=True)
class SyntheticOutbreak:
    seed: int
    trajectory: LatentTrajectory
    obs: ObsZ
    problem: EbolaProblem

    @property
    def total_cases(self) -> int:
        return int(self.trajectory.z[:, 1, 2].sum())


def ebola_outbreak(seed: int, n: int = EBOLA_N, theta=None) -> SyntheticOutbreak:
    """Simulate from one exposed individual until extinction, then thin.

    Latent simulation and reporting use two streams spawned from `seed`.
    """
    th = dict(EBOLA_TRUTH if theta is None else theta)
    spec = ebola_spec(n, th)
    lat_ss, obs_ss = seed_sequence(seed).spawn(2)
    x0 = np.zeros(4, dtype=np.int64)
    x0[0], x0[1] = n - 1, 1
    traj = simulate_until_extinction(spec, make_rng(lat_ss), x0)
    Q = ebola_reporting(th["q23"], th["q34"])
    Y = simulate_obs_z(traj, Q, make_rng(obs_ss))
    obs = ObsZ(Y, np.broadcast_to(Q, Y.shape))
    return SyntheticOutbreak(seed, traj, obs, EbolaProblem.from_obs(obs, n, spec.pi0, EBOLA_T_STAR))


def major_outbreak(start_seed: int = 2026, min_cases: int = 100, n: int = EBOLA_N,
                   theta=None, max_tries: int = 1000) -> SyntheticOutbreak:
    """First outbreak from ``start_seed, start_seed + 1, ...`` with at least `min_cases` E->I moves.

    Most single-introduction runs die out after a handful of cases and carry
    no information about the parameters, so the synthetic experiment is
    conditioned on a major outbreak.
    """
    for seed in range(start_seed, start_seed + max_tries):
        out = ebola_outbreak(seed, n, theta)
        if out.total_cases >= min_cases:
            return out
    raise RuntimeError(f"no outbreak with >= {min_cases} cases in {max_tries} seeds")


# ---------------------------------------------------------------------------
# bias and coverage


@dataclass(frozen=True)
class BiasCoverage:
    """Per ``(t, compartment)`` results for ``t = 1..T``."""

    n: int
    replicates: int
    bias: np.ndarray
    coverage: np.ndarray


def bias_coverage(n: int, replicates: int, T: int, seed=None, theta=None, level: float = 0.95) -> BiasCoverage:
    """Empirical bias of the filtering mean and coverage of its credible interval.

    Each replicate draws ``x0 ~ Mult(n, pi0)`` with ``pi0 = [1 - 1/n, 1/n, 0, 0]``,
    simulates T steps of the Ebola model, thins the E->I and I->R moves and
    runs the transition filter. Replicate r uses child r of
    ``SeedSequence(seed)``.
    """
    th = dict(EBOLA_TRUTH if theta is None else theta)
    spec = ebola_spec(n, th)
    Q = np.broadcast_to(ebola_reporting(th["q23"], th["q34"]), (T, 4, 4))
    err = np.zeros((T, 4))
    hits = np.zeros((T, 4))
    for child in seed_sequence(seed).spawn(replicates):
        rng = make_rng(child)
        traj = simulate_latent(spec, T, rng)
        Y = simulate_obs_z(traj, Q, rng)
        trace = filter_z(spec, ObsZ(Y, Q))
        for t in range(1, T + 1):
            mean, lo, hi = filtered_mean_and_ci(trace, t, level)
            x = traj.x[t]
            err[t - 1] += mean - x
            hits[t - 1] += (lo <= x) & (x <= hi)
    return BiasCoverage(n, replicates, err / replicates, hits / replicates)
