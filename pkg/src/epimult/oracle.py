"""Exact inference by enumeration, for tiny populations only.

Everything here sums over the full state space ``S_{m,n}`` (or over count
matrices) and uses scipy's multinomial / binomial pmfs, so it shares no code
path with the recursions it is used to check.

Two regimes are provided:

* ``mean_field=True`` mirrors the approximation being tested: each step
  starts from a multinomial with the current mean and feeds that mean into
  the kernel. One-step exactness is checked in this mode.
* ``mean_field=False`` is the honest recursion, with ``eta(x)`` evaluated
  inside the sum. Its likelihood measures the true approximation error.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import Iterator

import numpy as np
from scipy.stats import binom, multinomial

from .core import ModelSpec, TooLarge

MAX_STATES = 10**6


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """All tuples of `parts` nonnegative ints summing to `total`, lexicographic."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@lru_cache(maxsize=64)
def _states(m: int, n: int) -> np.ndarray:
    if comb(n + m - 1, m - 1) > MAX_STATES:
        raise TooLarge(f"|S_(m={m},n={n})| = {comb(n + m - 1, m - 1)} exceeds {MAX_STATES}")
    a = np.array(list(_compositions(n, m)), dtype=np.int64).reshape(-1, m)
    a.setflags(write=False)
    return a


def enumerate_states(m: int, n: int) -> np.ndarray:
    """Every count vector of length `m` summing to `n`, one per row, lexicographic."""
    return _states(m, n)


def enumerate_count_matrices(m: int, n: int) -> np.ndarray:
    """Every ``m x m`` nonnegative integer matrix with total `n`, shape ``(N, m, m)``."""
    return _states(m * m, n).reshape(-1, m, m)


def state_index(states: np.ndarray) -> dict[tuple, int]:
    return {tuple(s.ravel()): k for k, s in enumerate(states)}


def multinomial_pmf(states: np.ndarray, n: int, p) -> np.ndarray:
    """pmf of ``Mult(n, p)`` at each row of `states` (p may be a matrix)."""
    p = np.asarray(p, dtype=float).ravel()
    flat = states.reshape(len(states), -1)
    out = np.zeros(len(states))
    support = p > 0
    ok = np.all((flat[:, ~support] == 0), axis=1)
    if n == 0:
        return (flat.sum(axis=1) == 0).astype(float)
    ps = p[support] / p[support].sum()
    out[ok] = multinomial.pmf(flat[ok][:, support], n, ps)
    return out


def _row_outcomes(count: int, row: np.ndarray):
    """Multinomial outcomes of one kernel row restricted to its support."""
    support = np.flatnonzero(row > 0)
    probs = row[support] / row[support].sum()
    outs = []
    for c in _compositions(count, len(support)):
        full = np.zeros(len(row), dtype=np.int64)
        full[support] = c
        outs.append((full, float(multinomial.pmf(c, count, probs))))
    return outs


def transition_matrices(x_prev, K) -> list[tuple[np.ndarray, float]]:
    """All ``Z`` with row sums `x_prev` and positive probability, with their probabilities."""
    x_prev = np.asarray(x_prev, dtype=np.int64)
    m = len(x_prev)
    acc = [(np.zeros((m, m), dtype=np.int64), 1.0)]
    for i in range(m):
        rows = _row_outcomes(int(x_prev[i]), np.asarray(K[i]))
        nxt = []
        for Z, p in acc:
            for r, pr in rows:
                if pr == 0.0:
                    continue
                Z2 = Z.copy()
                Z2[i] = r
                nxt.append((Z2, p * pr))
        acc = nxt
    return acc


def exact_transition_pmf(x_prev, K) -> np.ndarray:
    """pmf of ``x_next = colsum(Z)`` over ``enumerate_states(m, n)``, rows of Z independent
    multinomials ``Mult(x_prev[i], K[i])``."""
    x_prev = np.asarray(x_prev, dtype=np.int64)
    m, n = len(x_prev), int(x_prev.sum())
    states = enumerate_states(m, n)
    idx = state_index(states)
    # convolve the per-row distributions of column contributions
    dist = {tuple([0] * m): 1.0}
    for i in range(m):
        rows = _row_outcomes(int(x_prev[i]), np.asarray(K[i], dtype=float))
        nxt: dict[tuple, float] = {}
        for key, p in dist.items():
            for r, pr in rows:
                k2 = tuple(a + b for a, b in zip(key, r))
                nxt[k2] = nxt.get(k2, 0.0) + p * pr
        dist = nxt
    out = np.zeros(len(states))
    for key, p in dist.items():
        out[idx[key]] += p
    return out


def transition_matrix_exact(spec: ModelSpec, t: int, eta=None, theta=None) -> np.ndarray:
    """``M[a, b] = P(x_t = states[b] | x_{t-1} = states[a])``.

    With ``eta=None`` the kernel sees ``eta(x_{t-1})`` for each source state
    (the true chain); otherwise the fixed `eta` is used for every row.
    """
    theta = spec.theta if theta is None else theta
    states = enumerate_states(spec.m, spec.n)
    M = np.zeros((len(states), len(states)))
    for a, x in enumerate(states):
        e = x / spec.n if eta is None else eta
        M[a] = exact_transition_pmf(x, spec.K(t, e, theta))
    return M


# ---------------------------------------------------------------------------
# one-step checks


def binomial_likelihood(states, y, q) -> np.ndarray:
    """``prod_i Bin(y_i | x_i, q_i)`` for each row of `states` (vectors or matrices)."""
    flat = states.reshape(len(states), -1)
    y = np.asarray(y).ravel()
    q = np.asarray(q, dtype=float).ravel()
    return np.prod(binom.pmf(y[None, :], flat, q[None, :]), axis=1)


def predict_mixture_x(pi, K, n: int) -> np.ndarray:
    """``sum_x Mult(n, pi)(x) M(x, pi, .)`` by enumeration."""
    m = len(pi)
    states = enumerate_states(m, n)
    prior = multinomial_pmf(states, n, pi)
    out = np.zeros(len(states))
    for a, x in enumerate(states):
        if prior[a] > 0:
            out += prior[a] * exact_transition_pmf(x, K)
    return out


def exact_update(prior, states, y, q):
    """Exact Bayes update on binomially thinned counts.

    Returns ``(posterior pmf, posterior mean, marginal probability of y)``.
    """
    joint = prior * binomial_likelihood(states, y, q)
    py = joint.sum()
    post = joint / py if py > 0 else joint
    mean = np.tensordot(post, states.astype(float), axes=1)
    return post, mean, py


def shifted_multinomial_pmf(states, y, N: int, p) -> np.ndarray:
    """pmf of ``y + Mult(N, p)`` on `states`."""
    diff = states - np.asarray(y)[None]
    out = np.zeros(len(states))
    ok = np.all(diff.reshape(len(states), -1) >= 0, axis=1)
    if ok.any():
        out[ok] = multinomial_pmf(diff[ok], N, p)
    return out


def predict_mixture_z(P, K, n: int) -> np.ndarray:
    """``sum_Z Mult(n, P)(Z) Mbar(Z, pi, .)`` over count matrices, ``pi`` the column sums of P."""
    m = P.shape[0]
    mats = enumerate_count_matrices(m, n)
    prior = multinomial_pmf(mats, n, P)
    # Mbar only depends on Z through its column sums
    weight: dict[tuple, float] = {}
    for Z, p in zip(mats, prior):
        key = tuple(Z.sum(axis=0))
        weight[key] = weight.get(key, 0.0) + p
    out = np.zeros(len(mats))
    for b, Zn in enumerate(mats):
        w = weight.get(tuple(Zn.sum(axis=1)), 0.0)
        if w == 0.0:
            continue
        prob = w
        for i in range(m):
            prob *= multinomial_pmf(Zn[i][None], int(Zn[i].sum()), K[i])[0]
        out[b] = prob
    return out


# ---------------------------------------------------------------------------
# exact filters


@dataclass(frozen=True)
class ExactFilterResult:
    """Exact filtering summaries; ``means[t]`` is ``E[x_t | data_{1:t}]``."""

    states: np.ndarray
    posteriors: list
    means: np.ndarray
    log_increments: np.ndarray
    transition_means: np.ndarray | None = None

    @property
    def loglik(self) -> float:
        return float(self.log_increments.sum())


def _exact_filter_x(spec, obs, mean_field, theta):
    n, m = spec.n, spec.m
    states = enumerate_states(m, n)
    post = multinomial_pmf(states, n, spec.pi0)
    posts, means, incs = [post], [post @ states], []
    for t in range(1, obs.T + 1):
        if mean_field:
            pi = means[-1] / n
            post = multinomial_pmf(states, n, pi)
            M = transition_matrix_exact(spec, t, eta=pi, theta=theta)
        else:
            M = transition_matrix_exact(spec, t, theta=theta)
        pred = post @ M
        post, mean, py = exact_update(pred, states, obs.y[t - 1], obs.q[t - 1])
        incs.append(np.log(py) if py > 0 else -np.inf)
        posts.append(post)
        means.append(mean)
    return ExactFilterResult(states, posts, np.array(means), np.array(incs))


def _exact_filter_z(spec, obs, mean_field, theta):
    n, m = spec.n, spec.m
    states = enumerate_states(m, n)
    idx = state_index(states)
    post = multinomial_pmf(states, n, spec.pi0)
    posts, means, incs, zmeans = [post], [post @ states], [], []
    for t in range(1, obs.T + 1):
        if mean_field:
            pi = means[-1] / n
            post = multinomial_pmf(states, n, pi)
        Y, Q = obs.Y[t - 1], obs.Q[t - 1]
        new = np.zeros(len(states))
        zmean = np.zeros((m, m))
        for a, x in enumerate(states):
            if post[a] == 0.0:
                continue
            K = spec.K(t, pi if mean_field else x / n, theta)
            for Z, pz in transition_matrices(x, K):
                w = post[a] * pz * float(np.prod(binom.pmf(Y, Z, Q)))
                if w == 0.0:
                    continue
                new[idx[tuple(Z.sum(axis=0))]] += w
                zmean += w * Z
        py = new.sum()
        incs.append(np.log(py) if py > 0 else -np.inf)
        post = new / py if py > 0 else new
        posts.append(post)
        means.append(post @ states)
        zmeans.append(zmean / py if py > 0 else zmean)
    return ExactFilterResult(states, posts, np.array(means), np.array(incs),
                             np.array(zmeans).reshape(-1, m, m))


def exact_filter(spec: ModelSpec, obs, mode: str = "x", mean_field: bool = False,
                 theta=None) -> ExactFilterResult:
    """Exact forward recursion over ``S_{m,n}``.

    ``mode="x"`` expects an :class:`~epimult.filtering.ObsX`, ``mode="z"``
    an :class:`~epimult.filtering.ObsZ`; in the latter case
    ``transition_means[t-1]`` holds ``E[Z_t | Y_{1:t}]``.
    """
    theta = spec.theta if theta is None else theta
    if mode == "x":
        return _exact_filter_x(spec, obs, mean_field, theta)
    if mode == "z":
        return _exact_filter_z(spec, obs, mean_field, theta)
    raise ValueError("mode must be 'x' or 'z'")


# ---------------------------------------------------------------------------
# backward (smoothing) recursions, mean-field form


def backward_step_x(pi_ss, K, smooth_next_pmf, n: int) -> np.ndarray:
    """One exact backward step from ``mu_{s+1|t}`` given ``Mult(n, pi_{s|s})`` and the kernel at s+1."""
    m = len(pi_ss)
    states = enumerate_states(m, n)
    mu_ss = multinomial_pmf(states, n, pi_ss)
    M = np.array([exact_transition_pmf(x, K) for x in states])
    num = mu_ss[:, None] * M
    den = num.sum(axis=0)
    ratio = np.divide(smooth_next_pmf, den, out=np.zeros_like(den), where=den > 0)
    return num @ ratio


def backward_step_z(P_ss, smooth_next_pmf, n: int) -> np.ndarray:
    """One exact backward step over count matrices.

    The kernel factor cancels between numerator and denominator, leaving
    ``mu_{s|s}(Z) * r(colsum Z) / c(colsum Z)`` where r and c are the laws of
    ``rowsum Z_{s+1}`` under ``mu_{s+1|t}`` and of ``colsum Z_s`` under ``mu_{s|s}``.
    """
    m = P_ss.shape[0]
    mats = enumerate_count_matrices(m, n)
    mu_ss = multinomial_pmf(mats, n, P_ss)
    r: dict[tuple, float] = {}
    c: dict[tuple, float] = {}
    for Z, a, b in zip(mats, smooth_next_pmf, mu_ss):
        r[tuple(Z.sum(axis=1))] = r.get(tuple(Z.sum(axis=1)), 0.0) + a
        c[tuple(Z.sum(axis=0))] = c.get(tuple(Z.sum(axis=0)), 0.0) + b
    out = np.zeros(len(mats))
    for k, Z in enumerate(mats):
        key = tuple(Z.sum(axis=0))
        if c[key] > 0:
            out[k] = mu_ss[k] * r.get(key, 0.0) / c[key]
    return out
