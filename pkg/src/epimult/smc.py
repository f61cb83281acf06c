"""Particle filter over a time-varying transmission rate with a backward sampler.

Each particle carries its own ``beta_s`` (a log-normal random walk) and its
own multinomial filter over transition counts. Particles are weighted by
their one-step approximate likelihoods and resampled at every step. A
smoothed draw is obtained by picking a terminal particle, tracing its
ancestry and sampling transition counts backwards through the traced
particles' backward kernels.

Ancestor indices are 0-based throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .core import AllWeightsZero, ConfigError, ModelSpec
from .filtering import ObsZ, _check_counts, _log_norm_const, _update, predict_z
from .models import COVID_ONSET_TRAVEL, COVID_ONSET_WUHAN
from .simulate import _row_multinomials, make_rng, seed_sequence
from .smoothing import _reverse_kernel

RESAMPLERS = ("multinomial", "systematic")


def ess(weights) -> float:
    """Effective sample size ``1 / sum(w^2)`` of normalised weights.

    Clipped to ``[1, N]``, which holds exactly; uniform weights can otherwise
    land one ulp above N.
    """
    w = np.asarray(weights, dtype=float)
    return float(np.clip(1.0 / np.sum(w * w), 1.0, w.size))


def resample(rng, weights, scheme: str = "multinomial") -> np.ndarray:
    """Ancestor indices for one resampling step."""
    w = np.asarray(weights, dtype=float)
    N = w.size
    if scheme == "multinomial":
        return np.repeat(np.arange(N), rng.multinomial(N, w / w.sum()))
    if scheme == "systematic":
        u = (rng.uniform() + np.arange(N)) / N
        cdf = np.cumsum(w)
        cdf[-1] = 1.0
        return np.searchsorted(cdf, u, side="right").clip(max=N - 1)
    raise ConfigError(f"unknown resampling scheme {scheme!r}; choose from {RESAMPLERS}")


@dataclass(frozen=True)
class ParticleEnsemble:
    """Complete particle-filter record for ``s = 1..T`` (row ``s-1``).

    ``beta``, ``P_filt``, ``log_w`` and ``weights`` are the pre-resampling
    values at s; ``ancestors[s-1, i]`` is the index at s of the particle
    that particle i at s+1 was propagated from.
    """

    n: int
    beta: np.ndarray
    P_filt: np.ndarray
    log_w: np.ndarray
    weights: np.ndarray
    ancestors: np.ndarray
    ess: np.ndarray
    cum_loglik: np.ndarray

    @property
    def T(self) -> int:
        return self.log_w.shape[0]

    @property
    def n_part(self) -> int:
        return self.log_w.shape[1]

    @property
    def pi_filt(self) -> np.ndarray:
        return self.P_filt.sum(axis=-2)

    @property
    def loglik(self) -> float:
        return float(self.cum_loglik[-1]) if self.T else 0.0


def smc_filter(spec: ModelSpec, obs: ObsZ, sigma_V: float, beta0: float, n_part: int,
               seed=None, resampling: str = "multinomial") -> ParticleEnsemble:
    """Run the particle filter; `spec.theta` supplies every parameter except ``beta``."""
    if n_part < 1:
        raise ConfigError("n_part must be >= 1")
    if sigma_V < 0:
        raise ConfigError("sigma_V must be nonnegative")
    if resampling not in RESAMPLERS:
        raise ConfigError(f"unknown resampling scheme {resampling!r}")
    rng = make_rng(seed)
    n, m, T = spec.n, spec.m, obs.T
    Y = _check_counts(obs.Y, n)
    consts = _log_norm_const(n, Y, (-2, -1))
    sums = Y.sum(axis=(-2, -1))

    beta_hist = np.empty((T, n_part))
    P_hist = np.empty((T, n_part, m, m))
    logw_hist = np.empty((T, n_part))
    w_hist = np.empty((T, n_part))
    anc = np.empty((T, n_part), dtype=np.int64)
    ess_hist = np.empty(T)
    cum = np.empty(T)

    pi = np.broadcast_to(spec.pi0, (n_part, m))
    beta = np.full(n_part, float(beta0))
    total = 0.0
    for s in range(1, T + 1):
        if sigma_V > 0:
            beta = beta * np.exp(sigma_V * rng.standard_normal(n_part))
        theta = {**spec.theta, "beta": beta}
        pred = predict_z(pi, spec.kernel, s, theta)
        filt, lw, _ = _update(pred, Y[s - 1], obs.Q[s - 1], n, sums[s - 1], consts[s - 1],
                              (-2, -1), strict=False)
        if not np.any(np.isfinite(lw)):
            raise AllWeightsZero(f"every particle gives the observation at s={s} zero probability")
        norm = logsumexp(lw)
        w = np.exp(lw - norm)
        total += norm - np.log(n_part)
        beta_hist[s - 1], P_hist[s - 1], logw_hist[s - 1], w_hist[s - 1] = beta, filt, lw, w
        ess_hist[s - 1] = ess(w)
        cum[s - 1] = total
        a = resample(rng, w, resampling) if n_part > 1 else np.zeros(1, dtype=np.int64)
        anc[s - 1] = a
        beta = beta[a]
        pi = filt.sum(axis=-2)[a]
    return ParticleEnsemble(n, beta_hist, P_hist, logw_hist, w_hist, anc, ess_hist, cum)


@dataclass(frozen=True)
class SmoothedDraw:
    """One backward-sampled trajectory for ``s = 1..T`` (row ``s-1``)."""

    beta_tilde: np.ndarray
    P_tilde: np.ndarray
    Z_tilde: np.ndarray
    particles: np.ndarray


def trace_ancestry(ens: ParticleEnsemble, terminal: int) -> np.ndarray:
    """Particle index at each s along the ancestral line of `terminal` at T."""
    path = np.empty(ens.T, dtype=np.int64)
    z = terminal
    path[-1] = z
    for s in range(ens.T - 1, 0, -1):
        z = ens.ancestors[s - 1, z]
        path[s - 1] = z
    return path


def backward_sample(ens: ParticleEnsemble, seed=None) -> SmoothedDraw:
    rng = make_rng(seed)
    T, n = ens.T, ens.n
    m = ens.P_filt.shape[-1]
    P_tilde = np.empty((T, m, m))
    Z = np.empty((T, m, m), dtype=np.int64)
    if T == 0:
        return SmoothedDraw(np.empty(0), P_tilde, Z, np.empty(0, dtype=np.int64))
    zeta = int(rng.choice(ens.n_part, p=ens.weights[T - 1]))
    path = trace_ancestry(ens, zeta)
    P_tilde[T - 1] = ens.P_filt[T - 1, zeta]
    flat = np.clip(P_tilde[T - 1].ravel(), 0.0, None)
    Z[T - 1] = rng.multinomial(n, flat / flat.sum()).reshape(m, m)
    for s in range(T - 1, 0, -1):
        pi_st = P_tilde[s].sum(axis=1)
        P_ss = ens.P_filt[s - 1, path[s - 1]]
        Lbar = _reverse_kernel(P_ss, P_ss.sum(axis=0), pi_st, f"backward sample at s={s}")
        arrivals = Z[s].sum(axis=1)
        Z[s - 1] = _row_multinomials(rng, arrivals, np.where(arrivals[:, None] > 0, Lbar, np.eye(m))).T
        P_tilde[s - 1] = pi_st[None, :] * Lbar.T
    beta = ens.beta[np.arange(T), path]
    return SmoothedDraw(beta, P_tilde, Z, path)


def smc_draws(spec: ModelSpec, obs: ObsZ, sigma_V: float, beta0: float, n_part: int,
              runs: int = 100, draws_per_run: int = 1, seed=None,
              resampling: str = "multinomial") -> tuple[list[SmoothedDraw], list[np.ndarray]]:
    """Repeat filter + backward sampling; returns the draws and each run's ESS trace.

    Run r uses the r-th child of ``SeedSequence(seed)`` for filtering and
    backward sampling alike.
    """
    children = seed_sequence(seed).spawn(runs)
    draws, ess_traces = [], []
    for child in children:
        rng = make_rng(child)
        ens = smc_filter(spec, obs, sigma_V, beta0, n_part, rng, resampling)
        ess_traces.append(ens.ess)
        for _ in range(draws_per_run):
            draws.append(backward_sample(ens, rng))
    return draws, ess_traces


# ---------------------------------------------------------------------------
# derived quantities

BANDS = (0.025, 0.25, 0.75, 0.975)


@dataclass(frozen=True)
class SeriesSummary:
    """Across-draw mean and quantile bands (rows of ``bands`` follow :data:`BANDS`)."""

    mean: np.ndarray
    bands: np.ndarray

    def band(self, level: float) -> tuple[np.ndarray, np.ndarray]:
        a = round((1.0 - level) / 2.0, 10)
        return self.bands[BANDS.index(a)], self.bands[BANDS.index(round(1.0 - a, 10))]


def _summarise(samples: np.ndarray) -> SeriesSummary:
    samples = np.asarray(samples, dtype=float)
    return SeriesSummary(samples.mean(axis=0), np.quantile(samples, BANDS, axis=0))


def _confirmations(rng, onsets, gamma, kappa):
    """Two-stage binomial delay from onset to confirmation; returns new confirmations per step."""
    p_f = -np.expm1(-np.exp(-gamma * kappa))
    p_conf = 1.0 if np.isinf(kappa) else -np.expm1(-kappa)
    F = 0
    out = np.empty(onsets.shape[0], dtype=np.int64)
    for s, z in enumerate(onsets):
        dF = rng.binomial(z, p_f)
        dC = rng.binomial(F, p_conf)
        out[s] = dC
        F = F + dF - dC
    return out


def derived_quantities(draws: Sequence[SmoothedDraw], theta: Mapping[str, float], n: int, seed=None,
                       onset_wuhan=COVID_ONSET_WUHAN, onset_travel=COVID_ONSET_TRAVEL,
                       predictive_per_draw: int = 1) -> dict[str, SeriesSummary]:
    """Posterior summaries of the reproduction number and the case series.

    `theta` needs ``gamma``, ``kappa``, ``qW`` and ``qT``. Returned keys are
    ``R``, ``onset_wuhan``, ``onset_travel``, ``confirmed_wuhan`` and
    ``confirmed_travel``.
    """
    if not draws:
        raise ConfigError("need at least one smoothed draw")
    rng = make_rng(seed)
    gamma, kappa = float(theta["gamma"]), float(theta["kappa"])
    series = {k: [] for k in ("R", "onset_wuhan", "onset_travel", "confirmed_wuhan", "confirmed_travel")}
    for d in draws:
        series["R"].append(d.beta_tilde / gamma)
        for key, (i, j), q in (("wuhan", onset_wuhan, theta["qW"]), ("travel", onset_travel, theta["qT"])):
            p = np.clip(d.P_tilde[:, i, j], 0.0, 1.0)
            for _ in range(predictive_per_draw):
                z_hat = rng.binomial(n, p)
                series[f"onset_{key}"].append(rng.binomial(z_hat, q))
            series[f"confirmed_{key}"].append(_confirmations(rng, d.Z_tilde[:, i, j], gamma, kappa))
    return {k: _summarise(np.array(v)) for k, v in series.items()}
