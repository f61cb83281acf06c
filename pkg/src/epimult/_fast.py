"""Compiled log-likelihood for the Ebola / SEIR family under transition observations.

Mirrors :func:`epimult.filtering.filter_z` step for step; the test suite
checks the two agree. Used by MCMC, where the likelihood is evaluated
hundreds of thousands of times.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _xlogy(x, y):
    if x == 0.0:
        return 0.0
    return x * np.log(y)


@njit(cache=True)
def ebola_loglik(Y, Q, consts, sums, pi0, n, beta, lam, rho, gamma, h, t_star):
    """Approximate log-likelihood; returns NaN on a degenerate update."""
    T = Y.shape[0]
    pi = pi0.copy()
    total = 0.0
    K = np.zeros((4, 4))
    p_c = -np.expm1(-h * rho)
    p_r = -np.expm1(-h * gamma)
    for t in range(1, T + 1):
        if t < t_star:
            bt = beta
        else:
            bt = beta * np.exp(-lam * (t - t_star))
        p_inf = -np.expm1(-h * bt * pi[2])
        K[0, 0] = 1.0 - p_inf
        K[0, 1] = p_inf
        K[1, 1] = 1.0 - p_c
        K[1, 2] = p_c
        K[2, 2] = 1.0 - p_r
        K[2, 3] = p_r
        K[3, 3] = 1.0
        Yt = Y[t - 1]
        Qt = Q[t - 1]
        s = sums[t - 1]
        rho_sum = 0.0
        lw = 0.0
        for i in range(4):
            for j in range(4):
                P = pi[i] * K[i, j]
                rho_sum += P * (1.0 - Qt[i, j])
                lw += _xlogy(Yt[i, j], P) + _xlogy(Yt[i, j], Qt[i, j])
        lw += _xlogy(n - s, rho_sum) + consts[t - 1]
        if s < n and rho_sum <= 0.0:
            return np.nan
        total += lw
        new = np.zeros(4)
        for i in range(4):
            for j in range(4):
                P = pi[i] * K[i, j]
                if s < n:
                    star = P * (1.0 - Qt[i, j]) / rho_sum
                else:
                    star = P
                new[j] += Yt[i, j] / n + (1.0 - s / n) * star
        pi = new
    return total


@njit(cache=True)
def _ebola_K(K, t, pi, beta, lam, p_c, p_r, h, t_star):
    if t < t_star:
        bt = beta
    else:
        bt = beta * np.exp(-lam * (t - t_star))
    p_inf = -np.expm1(-h * bt * pi[2])
    K[0, 0] = 1.0 - p_inf
    K[0, 1] = p_inf
    K[1, 1] = 1.0 - p_c
    K[1, 2] = p_c
    K[2, 2] = 1.0 - p_r
    K[2, 3] = p_r
    K[3, 3] = 1.0


@njit(cache=True)
def ebola_em_stats(Y, Q, consts, sums, observed, pi0, n, beta, lam, rho, gamma, h, t_star):
    """E-step sufficient statistics.

    Returns ``[loglik, S22, S23, S33, S34, C23, C34, status]`` where ``S`` are
    smoothed sums over all days, ``C`` the (2,3) / (3,4) sums over reported
    days only, and status is 0 (ok), 1 (degenerate update) or 2 (zero
    backward denominator).
    """
    T = Y.shape[0]
    out = np.zeros(8)
    P_filt = np.zeros((T, 4, 4))
    pi = pi0.copy()
    K = np.zeros((4, 4))
    p_c = -np.expm1(-h * rho)
    p_r = -np.expm1(-h * gamma)
    total = 0.0
    for t in range(1, T + 1):
        _ebola_K(K, t, pi, beta, lam, p_c, p_r, h, t_star)
        Yt = Y[t - 1]
        Qt = Q[t - 1]
        s = sums[t - 1]
        rho_sum = 0.0
        lw = 0.0
        for i in range(4):
            for j in range(4):
                P = pi[i] * K[i, j]
                rho_sum += P * (1.0 - Qt[i, j])
                lw += _xlogy(Yt[i, j], P) + _xlogy(Yt[i, j], Qt[i, j])
        if s < n and rho_sum <= 0.0:
            out[7] = 1.0
            return out
        total += lw + _xlogy(n - s, rho_sum) + consts[t - 1]
        new = np.zeros(4)
        for i in range(4):
            for j in range(4):
                P = pi[i] * K[i, j]
                if s < n:
                    star = P * (1.0 - Qt[i, j]) / rho_sum
                else:
                    star = P
                v = Yt[i, j] / n + (1.0 - s / n) * star
                P_filt[t - 1, i, j] = v
                new[j] += v
        pi = new
    out[0] = total
    if T == 0:
        return out
    Ps = P_filt[T - 1].copy()
    for s in range(T, 0, -1):
        # Ps holds the smoothed joint at s
        out[1] += Ps[1, 1]
        out[2] += Ps[1, 2]
        out[3] += Ps[2, 2]
        out[4] += Ps[2, 3]
        if observed[s - 1, 0]:
            out[5] += Ps[1, 2]
        if observed[s - 1, 1]:
            out[6] += Ps[2, 3]
        if s == 1:
            break
        Pf = P_filt[s - 2]
        pi_st = np.zeros(4)
        pi_ss = np.zeros(4)
        for i in range(4):
            for j in range(4):
                pi_st[i] += Ps[i, j]
                pi_ss[j] += Pf[i, j]
        for i in range(4):
            if pi_ss[i] <= 0.0:
                if pi_st[i] > 0.0:
                    out[7] = 2.0
                    return out
                for j in range(4):
                    Ps[j, i] = 0.0
            else:
                for j in range(4):
                    Ps[j, i] = pi_st[i] * (Pf[j, i] / pi_ss[i])
    return out
