"""Multinomial filtering and approximate marginal likelihood.

Two observation models are supported:

* compartment observations ``y_t[i] ~ Bin(x_t[i], q_t[i])`` (:func:`filter_x`),
* transition observations ``Y_t[i, j] ~ Bin(Z_t[i, j], Q_t[i, j])`` (:func:`filter_z`).

Each step replaces the predictive law by ``Mult(n, pi_pred)`` (or
``Mult(n, P_pred)``), performs the exact Bayes update of that multinomial,
which is a shifted multinomial ``y + x_star``, and projects back to a
multinomial with the same mean. Missing observations are encoded as
``y = 0, q = 0``; such entries carry no information and contribute nothing
to the log-likelihood.

The step functions accept leading batch axes on the probability argument so
that particle filters can push many filters through one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from .core import (
    DegenerateUpdate,
    ModelSpec,
    ObservationExceedsPopulation,
    log_factorial,
    safe_xlogy,
)


def _check_reporting(q):
    q = np.asarray(q, dtype=float)
    if np.any((q < 0) | (q > 1)) or not np.all(np.isfinite(q)):
        raise ValueError("reporting probabilities must lie in [0, 1]")
    return q


def _check_counts(y, n):
    y = np.asarray(y)
    if np.any(y < 0):
        raise ObservationExceedsPopulation("observed counts must be nonnegative")
    if np.any(np.mod(y, 1) != 0):
        raise ValueError("observed counts must be integers")
    axes = tuple(range(1, y.ndim))
    totals = y.sum(axis=axes) if axes else y
    if np.any(totals > n):
        raise ObservationExceedsPopulation(f"observations sum to more than n={n}")
    return y.astype(np.int64)


@dataclass(frozen=True)
class ObsX:
    """Compartment observations for ``t = 1..T`` (row ``t-1``), with reporting probabilities."""

    y: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y)
        q = np.broadcast_to(_check_reporting(self.q), y.shape)
        if y.ndim != 2:
            raise ValueError("y must have shape (T, m)")
        object.__setattr__(self, "y", y.astype(np.int64))
        object.__setattr__(self, "q", np.array(q))

    @property
    def T(self) -> int:
        return self.y.shape[0]

    @classmethod
    def missing(cls, T: int, m: int) -> "ObsX":
        return cls(np.zeros((T, m), dtype=np.int64), np.zeros((T, m)))

    @classmethod
    def masked(cls, y, q, observed) -> "ObsX":
        """Apply the missing-data convention: unobserved entries get ``y = 0, q = 0``."""
        observed = np.asarray(observed, dtype=bool)
        y = np.where(observed, y, 0)
        q = np.where(observed, np.broadcast_to(q, observed.shape), 0.0)
        return cls(y, q)


@dataclass(frozen=True)
class ObsZ:
    """Transition observations for ``t = 1..T``; ``Y[t-1, i, j]`` counts reported i -> j moves."""

    Y: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        Y = np.asarray(self.Y)
        if Y.ndim != 3 or Y.shape[1] != Y.shape[2]:
            raise ValueError("Y must have shape (T, m, m)")
        Q = np.broadcast_to(_check_reporting(self.Q), Y.shape)
        object.__setattr__(self, "Y", Y.astype(np.int64))
        object.__setattr__(self, "Q", np.array(Q))

    @property
    def T(self) -> int:
        return self.Y.shape[0]

    @classmethod
    def missing(cls, T: int, m: int) -> "ObsZ":
        return cls(np.zeros((T, m, m), dtype=np.int64), np.zeros((T, m, m)))

    @classmethod
    def masked(cls, Y, Q, observed) -> "ObsZ":
        observed = np.asarray(observed, dtype=bool)
        Y = np.where(observed, Y, 0)
        Q = np.where(observed, np.broadcast_to(Q, observed.shape), 0.0)
        return cls(Y, Q)


def _log_norm_const(n, y, axes):
    """``log n! - sum log y! - log (n - sum y)!`` over the given axes."""
    s = y.sum(axis=axes)
    return log_factorial(n) - log_factorial(y).sum(axis=axes) - log_factorial(n - s)


# ---------------------------------------------------------------------------
# compartment observations


def predict_x(pi, kernel, t: int, theta) -> np.ndarray:
    """One-step prediction ``(pi^T K_{t, pi})^T``."""
    pi = np.asarray(pi, dtype=float)
    K = kernel(t, pi, theta)
    return np.einsum("...i,...ij->...j", pi, K)


def _update(pi, y, q, n, s, const, axes, strict=True):
    """Shared update for vector (axes=(-1,)) and matrix (axes=(-2,-1)) forms.

    With ``strict=False`` (batched use) degenerate members get ``log_w = -inf``
    instead of raising.
    """
    if s == 0 and not np.any(q):
        # nothing reported: the update is the identity and y = 0 has probability one
        batch = np.shape(pi)[: np.ndim(pi) - len(axes)]
        return pi, np.zeros(batch), pi
    miss = pi * (1.0 - q)
    # sum of pi*(1-q) equals 1 - pi.q but avoids cancellation when q ~ 1
    rho = miss.sum(axis=axes)
    if s < n:
        bad = rho <= 0.0
        if np.any(bad):
            if strict:
                raise DegenerateUpdate(
                    "every unobserved individual has zero probability but not all were observed")
            rho_safe = np.where(bad, 1.0, rho)
            star = miss / np.expand_dims(rho_safe, axes)
            filt = y / n + (1.0 - s / n) * star
            log_w = (safe_xlogy(y, pi).sum(axis=axes) + safe_xlogy(y, q).sum(axis=axes)
                     + safe_xlogy(n - s, rho_safe) + const)
            return filt, np.where(bad, -np.inf, log_w), star
        star = miss / np.expand_dims(rho, axes)
    else:
        # everything observed: x_star is empty and the update is a point mass
        star = pi
    filt = y / n + (1.0 - s / n) * star
    log_w = (safe_xlogy(y, pi).sum(axis=axes) + safe_xlogy(y, q).sum(axis=axes)
             + safe_xlogy(n - s, rho) + const)
    return filt, log_w, star


def update_x(pi_pred, y, q, n: int, factorials: bool = True):
    """Bayes update of ``Mult(n, pi_pred)`` on ``y ~ Bin(x, q)``.

    Returns ``(pi_filt, log_w)`` where ``pi_filt`` is the posterior mean
    divided by `n` and ``log_w`` the log marginal probability of `y`.
    With ``factorials=False`` the parameter-free factorial terms are left out
    of ``log_w``.
    """
    filt, log_w, _ = _update_x_full(pi_pred, y, q, n, factorials)
    return filt, log_w


def _update_x_full(pi_pred, y, q, n, factorials=True, const=None):
    pi_pred = np.asarray(pi_pred, dtype=float)
    y = _check_counts(np.asarray(y)[None], n)[0]
    q = _check_reporting(q)
    s = int(y.sum())
    if const is None:
        const = float(_log_norm_const(n, y, None)) if factorials else 0.0
    return _update(pi_pred, y, q, n, s, const, (-1,))


@dataclass(frozen=True)
class FilterTraceX:
    """Output of :func:`filter_x`.

    ``pi_filt[0]`` is ``pi0``; ``pi_pred[t-1]``, ``pi_filt[t]``, ``pi_star[t-1]``
    and ``log_w[t-1]`` belong to time ``t``.
    """

    n: int
    y: np.ndarray
    q: np.ndarray
    pi_pred: np.ndarray
    pi_filt: np.ndarray
    pi_star: np.ndarray
    log_w: np.ndarray
    cum_loglik: np.ndarray

    @property
    def T(self) -> int:
        return self.log_w.shape[0]

    @property
    def loglik(self) -> float:
        return float(self.cum_loglik[-1]) if self.T else 0.0


def filter_x(spec: ModelSpec, obs: ObsX, factorials: bool = True, theta=None) -> FilterTraceX:
    """Run the compartment-observation filter over ``t = 1..T``."""
    theta = spec.theta if theta is None else theta
    n, m, T = spec.n, spec.m, obs.T
    y = _check_counts(obs.y, n)
    if y.shape[1:] != (m,):
        raise ValueError(f"observations have {y.shape[1:]} compartments, model has {m}")
    consts = _log_norm_const(n, y, -1) if factorials else np.zeros(T)
    sums = y.sum(axis=-1)

    pi_pred = np.empty((T, m))
    pi_filt = np.empty((T + 1, m))
    pi_star = np.empty((T, m))
    log_w = np.empty(T)
    cum = np.empty(T)
    pi_filt[0] = spec.pi0
    total = 0.0
    for t in range(1, T + 1):
        pred = predict_x(pi_filt[t - 1], spec.kernel, t, theta)
        filt, lw, star = _update(pred, y[t - 1], obs.q[t - 1], n, sums[t - 1],
                                 consts[t - 1], (-1,))
        pi_pred[t - 1], pi_filt[t], pi_star[t - 1] = pred, filt, star
        log_w[t - 1] = lw
        total += lw
        cum[t - 1] = total
    return FilterTraceX(n, y, obs.q, pi_pred, pi_filt, pi_star, log_w, cum)


# ---------------------------------------------------------------------------
# transition observations


def predict_z(pi, kernel, t: int, theta) -> np.ndarray:
    """Joint prediction ``(pi outer 1) * K_{t, pi}``; row sums recover `pi`."""
    pi = np.asarray(pi, dtype=float)
    K = kernel(t, pi, theta)
    return pi[..., :, None] * K


def update_z(P_pred, Y, Q, n: int, factorials: bool = True):
    """Bayes update of ``Mult(n, P_pred)`` on ``Y ~ Bin(Z, Q)``; returns ``(P_filt, log_w)``."""
    filt, log_w, _ = _update_z_full(P_pred, Y, Q, n, factorials)
    return filt, log_w


def _update_z_full(P_pred, Y, Q, n, factorials=True, const=None):
    P_pred = np.asarray(P_pred, dtype=float)
    Y = _check_counts(np.asarray(Y)[None], n)[0]
    Q = _check_reporting(Q)
    s = int(Y.sum())
    if const is None:
        const = float(_log_norm_const(n, Y, None)) if factorials else 0.0
    return _update(P_pred, Y, Q, n, s, const, (-2, -1))


@dataclass(frozen=True)
class FilterTraceZ:
    """Output of :func:`filter_z`; indexing as in :class:`FilterTraceX`."""

    n: int
    Y: np.ndarray
    Q: np.ndarray
    P_pred: np.ndarray
    P_filt: np.ndarray
    P_star: np.ndarray
    pi_filt: np.ndarray
    log_w: np.ndarray
    cum_loglik: np.ndarray

    @property
    def T(self) -> int:
        return self.log_w.shape[0]

    @property
    def loglik(self) -> float:
        return float(self.cum_loglik[-1]) if self.T else 0.0


def filter_z(spec: ModelSpec, obs: ObsZ, factorials: bool = True, theta=None) -> FilterTraceZ:
    """Run the transition-observation filter over ``t = 1..T``."""
    theta = spec.theta if theta is None else theta
    n, m, T = spec.n, spec.m, obs.T
    Y = _check_counts(obs.Y, n)
    if Y.shape[1:] != (m, m):
        raise ValueError(f"observations have shape {Y.shape[1:]}, model needs {(m, m)}")
    consts = _log_norm_const(n, Y, (-2, -1)) if factorials else np.zeros(T)
    sums = Y.sum(axis=(-2, -1))

    P_pred = np.empty((T, m, m))
    P_filt = np.empty((T, m, m))
    P_star = np.empty((T, m, m))
    pi_filt = np.empty((T + 1, m))
    log_w = np.empty(T)
    cum = np.empty(T)
    pi_filt[0] = spec.pi0
    total = 0.0
    for t in range(1, T + 1):
        pred = predict_z(pi_filt[t - 1], spec.kernel, t, theta)
        filt, lw, star = _update(pred, Y[t - 1], obs.Q[t - 1], n, sums[t - 1],
                                 consts[t - 1], (-2, -1))
        P_pred[t - 1], P_filt[t - 1], P_star[t - 1] = pred, filt, star
        pi_filt[t] = filt.sum(axis=-2)
        log_w[t - 1] = lw
        total += lw
        cum[t - 1] = total
    return FilterTraceZ(n, Y, obs.Q, P_pred, P_filt, P_star, pi_filt, log_w, cum)


# ---------------------------------------------------------------------------
# summaries


def filtered_mean_and_ci(trace, t: int, level: float = 0.95):
    """Per-compartment filtering mean and equal-tail credible interval at time `t`.

    The filtering law of ``x_t`` is ``y_t + x_star`` with ``x_star``
    multinomial, so each compartment is a shifted binomial; interval ends are
    exact binomial quantiles. For transition observations the compartment
    counts are column sums of ``Y_t + Z_star``.

    Returns ``(mean, lower, upper)`` arrays of length m.
    """
    alpha = (1.0 - level) / 2.0
    if t == 0:
        p = np.asarray(trace.pi_filt[0])
        N = trace.n
        shift = np.zeros_like(p)
    elif isinstance(trace, FilterTraceZ):
        Y = trace.Y[t - 1]
        shift = Y.sum(axis=0).astype(float)
        N = trace.n - int(Y.sum())
        p = trace.P_star[t - 1].sum(axis=0)
    else:
        y = trace.y[t - 1]
        shift = y.astype(float)
        N = trace.n - int(y.sum())
        p = trace.pi_star[t - 1]
    p = np.clip(p, 0.0, 1.0)
    mean = shift + N * p
    lo = shift + binom.ppf(alpha, N, p)
    hi = shift + binom.ppf(1.0 - alpha, N, p)
    return mean, lo, hi
