"""Backward smoothing passes run after :func:`~epimult.filtering.filter_x` /
:func:`~epimult.filtering.filter_z`.

Both passes only touch multinomial parameters; sampling of smoothed
trajectories lives in :mod:`epimult.smc`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ModelSpec, ZeroDenominator
from .filtering import FilterTraceX, FilterTraceZ


def _reverse_kernel(joint, marginal, incoming, what):
    """Row-normalise ``joint.T`` by `marginal`, zeroing unreachable rows.

    ``joint[j, i]`` is the probability of moving from j to i; the result
    has entries ``joint[j, i] / marginal[i]`` at position ``(i, j)``. A zero
    marginal is only allowed where the smoothing mass `incoming` is zero too.
    """
    jt = np.swapaxes(joint, -1, -2)
    zero = marginal <= 0.0
    if np.any(zero & (incoming > 0.0)):
        raise ZeroDenominator(f"{what}: zero filtering mass on a state with positive smoothing mass")
    safe = np.where(zero, 1.0, marginal)
    return np.where(zero[..., :, None], 0.0, jt / safe[..., :, None])


@dataclass(frozen=True)
class SmoothTraceX:
    """``pi_smooth[s]`` approximates ``p(x_s | y_{1:t})`` for s = 0..t; ``L[s]`` is the backward kernel at s."""

    n: int
    pi_smooth: np.ndarray
    L: np.ndarray

    def joint(self, s: int) -> np.ndarray:
        """Joint multinomial parameter for ``Z_s`` given all data, ``(1 outer pi_{s|t}) * L_{s-1}^T``."""
        return self.pi_smooth[s][None, :] * self.L[s - 1].T


def smooth_x(trace: FilterTraceX, spec: ModelSpec, theta=None) -> SmoothTraceX:
    theta = spec.theta if theta is None else theta
    T, m = trace.T, spec.m
    pi_smooth = np.empty((T + 1, m))
    L = np.zeros((T, m, m))
    pi_smooth[T] = trace.pi_filt[T]
    for s in range(T - 1, -1, -1):
        pi_ss = trace.pi_filt[s]
        K = spec.K(s + 1, pi_ss, theta)
        joint = pi_ss[:, None] * K
        L[s] = _reverse_kernel(joint, joint.sum(axis=0), pi_smooth[s + 1], f"smooth_x at s={s}")
        pi_smooth[s] = pi_smooth[s + 1] @ L[s]
    return SmoothTraceX(trace.n, pi_smooth, L)


def backward_kernel_z(P_ss: np.ndarray) -> np.ndarray:
    """``Lbar[i, j] = P_ss[j, i] / pi_ss[i]`` with ``pi_ss`` the column sums of `P_ss`."""
    pi_ss = P_ss.sum(axis=-2)
    return _reverse_kernel(P_ss, pi_ss, np.zeros_like(pi_ss), "backward kernel")


@dataclass(frozen=True)
class SmoothTraceZ:
    """Smoothed joint parameters for s = 1..t (row ``s-1``).

    ``pi_smooth[s-1]`` is the smoothed law of ``x_s``; ``Lbar[s-1]`` is the
    backward kernel used at s (defined for s = 1..t-1).
    """

    n: int
    P_smooth: np.ndarray
    pi_smooth: np.ndarray
    Lbar: np.ndarray

    @property
    def T(self) -> int:
        return self.P_smooth.shape[0]


def smooth_z(trace: FilterTraceZ, spec: ModelSpec | None = None) -> SmoothTraceZ:
    """Backward pass for transition observations.

    For s = t-1..1: ``pi_{s|t} = P_{s+1|t} 1``, then every column i of
    ``P_{s|s}`` is rescaled by ``pi_{s|t}[i] / pi_{s|s}[i]``.
    """
    T = trace.T
    m = trace.P_filt.shape[-1]
    P_smooth = np.empty((T, m, m))
    pi_smooth = np.empty((T, m))
    Lbar = np.zeros((max(T - 1, 0), m, m))
    if T == 0:
        return SmoothTraceZ(trace.n, P_smooth, pi_smooth, Lbar)
    P_smooth[T - 1] = trace.P_filt[T - 1]
    pi_smooth[T - 1] = trace.pi_filt[T]
    for s in range(T - 1, 0, -1):
        pi_st = P_smooth[s].sum(axis=1)
        P_ss = trace.P_filt[s - 1]
        Lbar[s - 1] = _reverse_kernel(P_ss, trace.pi_filt[s], pi_st, f"smooth_z at s={s}")
        P_smooth[s - 1] = pi_st[None, :] * Lbar[s - 1].T
        pi_smooth[s - 1] = pi_st
    return SmoothTraceZ(trace.n, P_smooth, pi_smooth, Lbar)


def smoothed_transition_mean(trace: SmoothTraceZ, s: int) -> np.ndarray:
    """Expected transition counts ``n * P_{s|t}`` at time s (1-based)."""
    return trace.n * trace.P_smooth[s - 1]
