"""Parameter estimation for the Ebola intervention model.

Two routes are provided:

* profile EM: for fixed ``(beta, lambda)`` the E-step is one filtering pass
  plus one smoothing pass over transition observations and the M-step has a
  closed form for ``(rho, gamma, q23, q34)``; the outer maximisation runs over
  a grid of ``(beta, lambda)``;
* Metropolis-within-Gibbs over all six parameters, targeting the approximate
  likelihood times a prior.

The sampler itself (:func:`metropolis_within_gibbs`) is generic; the Ebola
specifics live in :class:`EbolaProblem`.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import stats

from . import _fast
from .core import ConfigError, DegenerateUpdate, ModelSpec, ZeroExpectedCount
from .filtering import ObsZ, _check_counts, _log_norm_const, filter_z
from .models import get_kernel
from .simulate import make_rng, seed_sequence
from .smoothing import smooth_z

log = logging.getLogger(__name__)

EBOLA_PARAMS = ("beta", "lambda", "rho", "gamma", "q23", "q34")
#: 0-based positions of the reported transitions: E -> I (new cases) and I -> R (deaths).
CASES = (1, 2)
DEATHS = (2, 3)


# ---------------------------------------------------------------------------
# problem definition


@dataclass(frozen=True)
class EbolaProblem:
    """Observed Ebola data together with everything except the free parameters.

    ``observed`` is a ``(T, 2)`` boolean array saying on which days cases and
    deaths were reported; on those days the reporting probability is the
    current ``q23`` / ``q34``, everywhere else it is zero.
    """

    Y: np.ndarray
    observed: np.ndarray
    n: int
    pi0: np.ndarray
    t_star: float
    h: float = 1.0
    _consts: np.ndarray = field(init=False, repr=False)
    _sums: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        Y = _check_counts(np.asarray(self.Y), self.n)
        if Y.shape[1:] != (4, 4):
            raise ConfigError("Ebola observations must have shape (T, 4, 4)")
        obs = np.broadcast_to(np.asarray(self.observed, dtype=bool), (Y.shape[0], 2))
        other = Y.copy()
        other[:, CASES[0], CASES[1]] = 0
        other[:, DEATHS[0], DEATHS[1]] = 0
        if np.any(other):
            raise ConfigError("only new cases (E->I) and deaths (I->R) may be observed")
        if np.any(Y[:, CASES[0], CASES[1]][~obs[:, 0]]) or np.any(Y[:, DEATHS[0], DEATHS[1]][~obs[:, 1]]):
            raise ConfigError("nonzero counts on days marked as unobserved")
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "observed", np.array(obs))
        object.__setattr__(self, "pi0", np.asarray(self.pi0, dtype=float))
        object.__setattr__(self, "_consts", _log_norm_const(self.n, Y.astype(float), (-2, -1)))
        object.__setattr__(self, "_sums", Y.sum(axis=(-2, -1)).astype(float))

    @classmethod
    def from_obs(cls, obs: ObsZ, n: int, pi0, t_star: float, h: float = 1.0) -> "EbolaProblem":
        """Days with positive reporting probability on a transition count as observed."""
        observed = np.stack([obs.Q[:, CASES[0], CASES[1]] > 0, obs.Q[:, DEATHS[0], DEATHS[1]] > 0], axis=1)
        return cls(obs.Y, observed, n, pi0, t_star, h)

    @property
    def T(self) -> int:
        return self.Y.shape[0]

    def Q(self, q23: float, q34: float) -> np.ndarray:
        Q = np.zeros((self.T, 4, 4))
        Q[:, CASES[0], CASES[1]] = self.observed[:, 0] * q23
        Q[:, DEATHS[0], DEATHS[1]] = self.observed[:, 1] * q34
        return Q

    def obs(self, theta: Mapping[str, float]) -> ObsZ:
        return ObsZ(self.Y, self.Q(theta["q23"], theta["q34"]))

    def spec(self, theta: Mapping[str, float]) -> ModelSpec:
        kernel_theta = {k: theta[k] for k in ("beta", "lambda", "rho", "gamma")}
        kernel_theta.update(t_star=self.t_star, h=self.h)
        return ModelSpec(self.n, self.pi0, get_kernel("ebola"), kernel_theta)

    def loglik(self, theta: Mapping[str, float], fast: bool = True) -> float:
        """Approximate log-likelihood; ``-inf`` where the filter degenerates."""
        if not fast:
            try:
                return filter_z(self.spec(theta), self.obs(theta)).loglik
            except DegenerateUpdate:
                return -math.inf
        value = _fast.ebola_loglik(
            self.Y.astype(float), self.Q(theta["q23"], theta["q34"]), self._consts, self._sums,
            self.pi0, float(self.n), float(theta["beta"]), float(theta["lambda"]),
            float(theta["rho"]), float(theta["gamma"]), float(self.h), float(self.t_star))
        return -math.inf if math.isnan(value) else float(value)


# ---------------------------------------------------------------------------
# EM


def _stats_numpy(problem: EbolaProblem, theta):
    trace = filter_z(problem.spec(theta), problem.obs(theta))
    P = smooth_z(trace).P_smooth
    days23, days34 = problem.observed[:, 0], problem.observed[:, 1]
    return (trace.loglik, P[:, 1, 1].sum(), P[:, 1, 2].sum(), P[:, 2, 2].sum(), P[:, 2, 3].sum(),
            P[days23, 1, 2].sum(), P[days34, 2, 3].sum())


def _stats_fast(problem: EbolaProblem, theta):
    out = _fast.ebola_em_stats(
        problem.Y.astype(float), problem.Q(theta["q23"], theta["q34"]), problem._consts,
        problem._sums, problem.observed, problem.pi0, float(problem.n), float(theta["beta"]),
        float(theta["lambda"]), float(theta["rho"]), float(theta["gamma"]), float(problem.h),
        float(problem.t_star))
    if out[7] == 1.0:
        raise DegenerateUpdate("filter degenerated during the E-step")
    if out[7] == 2.0:
        raise ZeroExpectedCount("smoother hit a zero filtering mass during the E-step")
    return tuple(out[:7])


def _em_core(problem: EbolaProblem, theta, fit, fast=False):
    """One EM step; returns (next theta, log-likelihood at the input theta)."""
    ll, s22, s23, s33, s34, c23, c34 = (_stats_fast if fast else _stats_numpy)(problem, theta)
    h = problem.h
    new = dict(theta)

    def rate(stay, move, name):
        if stay <= 0.0:
            raise ZeroExpectedCount(f"expected number of stays is zero in the {name} update")
        return math.log1p(move / stay) / h

    if "rho" in fit:
        new["rho"] = rate(s22, s23, "rho")
    if "gamma" in fit:
        new["gamma"] = rate(s33, s34, "gamma")
    for name, (i, j), col, denom in (("q23", CASES, 0, c23), ("q34", DEATHS, 1, c34)):
        days = problem.observed[:, col]
        if name not in fit or not days.any():
            continue
        if denom <= 0.0:
            raise ZeroExpectedCount(f"expected {name} transitions on reported days is zero")
        new[name] = min(1.0, float(problem.Y[days, i, j].sum()) / (problem.n * denom))
    return new, float(ll)


def em_step_ebola(problem: EbolaProblem, theta: Mapping[str, float],
                  beta_fixed: float | None = None, lambda_fixed: float | None = None,
                  fit: Sequence[str] = ("rho", "gamma", "q23", "q34"), fast: bool = False) -> dict:
    """One EM update of ``(rho, gamma, q23, q34)`` at fixed transmission parameters.

    The default route runs :func:`filter_z` and :func:`smooth_z`; ``fast=True``
    uses a compiled E-step that returns only the sufficient statistics.
    """
    theta = dict(theta)
    if beta_fixed is not None:
        theta["beta"] = beta_fixed
    if lambda_fixed is not None:
        theta["lambda"] = lambda_fixed
    return _em_core(problem, theta, tuple(fit), fast)[0]


@dataclass(frozen=True)
class EMResult:
    """EM outcome.

    ``theta`` / ``loglik`` are the returned estimate: the best iterate
    visited when ``keep_best`` was on, the last one otherwise. The last
    iterate is always available as ``theta_last`` / ``loglik_last``.
    ``loglik_trace[k]`` is the log-likelihood of iterate k (iterate 0 is the
    start).
    """

    theta: dict
    loglik: float
    n_iter: int
    converged: bool
    loglik_trace: np.ndarray
    max_decrease: float
    theta_last: dict
    loglik_last: float
    best_iter: int


def _rel_change(old, new, names):
    return max(abs(new[k] - old[k]) / max(abs(old[k]), 1e-12) for k in names)


def em_ebola(problem: EbolaProblem, theta0: Mapping[str, float], tol: float = 1e-6,
             max_iter: int = 500, fit: Sequence[str] = ("rho", "gamma", "q23", "q34"),
             audit_tol: float = 1e-8, fast: bool = True, keep_best: bool = True,
             warn: bool = True) -> EMResult:
    """Iterate EM until the largest relative parameter change drops below `tol`.

    Each E-step already yields the approximate log-likelihood of the current
    iterate, so the whole path is recorded at no extra cost. EM on the
    approximate model is not guaranteed to be monotone: decreases beyond
    `audit_tol` are logged and the largest is reported in ``max_decrease``.
    With `keep_best` the highest-likelihood iterate is returned.
    """
    fit = tuple(fit)
    theta = dict(theta0)
    path = []
    lls = []
    converged = False
    it = 0
    while it < max_iter:
        new, ll = _em_core(problem, theta, fit, fast)
        path.append(theta)
        lls.append(ll)
        it += 1
        done = _rel_change(theta, new, fit) < tol
        theta = new
        if done:
            converged = True
            break
    final = problem.loglik(theta, fast=fast)
    path.append(theta)
    lls.append(final)
    lls = np.array(lls)
    drops = -np.diff(lls) if lls.size > 1 else np.zeros(0)
    max_drop = float(drops.max(initial=0.0))
    if max_drop > audit_tol and warn:
        log.warning("EM log-likelihood decreased by %.3g at beta=%s lambda=%s",
                    max_drop, theta.get("beta"), theta.get("lambda"))
    k = int(np.nanargmax(np.where(np.isfinite(lls), lls, -np.inf))) if keep_best else len(lls) - 1
    return EMResult(dict(path[k]), float(lls[k]), it, converged, lls, max_drop, theta, final, k)


@dataclass(frozen=True)
class ProfileResult:
    """Grid search outcome. ``loglik[a, b]`` belongs to ``(beta_grid[a], lambda_grid[b])``."""

    theta: dict
    loglik_max: float
    beta_grid: np.ndarray
    lambda_grid: np.ndarray
    loglik: np.ndarray
    fits: list
    max_decrease: float

    @property
    def R0(self) -> float:
        return self.theta["beta"] / self.theta["gamma"]

    @property
    def argmax(self) -> tuple[int, int]:
        a, b = np.unravel_index(np.nanargmax(self.loglik), self.loglik.shape)
        return int(a), int(b)


DEFAULT_EM_START = {"rho": 0.1, "gamma": 0.1, "q23": 1.0, "q34": 1.0}


def profile_em(problem: EbolaProblem, beta_grid, lambda_grid, em_tolerance: float = 1e-6,
               max_iters: int = 500, init: Mapping[str, float] | None = None,
               warm_start: bool = False, fast: bool = True, keep_best: bool = True) -> ProfileResult:
    """Maximise the approximate likelihood over a ``(beta, lambda)`` grid.

    At each grid point EM fits the remaining four parameters, starting from
    `init` (default :data:`DEFAULT_EM_START`). With `warm_start` each point
    along a row instead starts from its left neighbour's estimate.
    """
    beta_grid = np.atleast_1d(np.asarray(beta_grid, dtype=float))
    lambda_grid = np.atleast_1d(np.asarray(lambda_grid, dtype=float))
    if beta_grid.size == 0 or lambda_grid.size == 0:
        raise ConfigError("profile grids must be nonempty")
    start = dict(DEFAULT_EM_START, **(init or {}))
    ll = np.full((beta_grid.size, lambda_grid.size), -np.inf)
    fits = []
    worst = 0.0
    n_drops = 0
    for a, beta in enumerate(beta_grid):
        current = dict(start)
        row = []
        for b, lam in enumerate(lambda_grid):
            current.update(beta=beta, **{"lambda": lam})
            try:
                res = em_ebola(problem, current, em_tolerance, max_iters, fast=fast, keep_best=keep_best,
                               warn=False)
            except (ZeroExpectedCount, DegenerateUpdate) as exc:
                log.info("EM failed at beta=%g lambda=%g: %s", beta, lam, exc)
                row.append(None)
                current = dict(start)
                continue
            ll[a, b] = res.loglik
            worst = max(worst, res.max_decrease)
            n_drops += res.max_decrease > 1e-8
            row.append(res)
            current = dict(res.theta) if warm_start else dict(start)
        fits.append(row)
    if not np.isfinite(ll).any():
        raise ZeroExpectedCount("EM failed at every grid point")
    if n_drops:
        log.warning("EM log-likelihood decreased at %d of %d grid points (largest drop %.3g)",
                    n_drops, ll.size, worst)
    a, b = np.unravel_index(np.argmax(ll), ll.shape)
    return ProfileResult(dict(fits[a][b].theta), float(ll[a, b]), beta_grid, lambda_grid, ll, fits, worst)


# ---------------------------------------------------------------------------
# priors


@dataclass(frozen=True)
class GammaPrior:
    shape: float
    rate: float

    def __post_init__(self):
        if self.shape <= 0 or self.rate <= 0:
            raise ConfigError("gamma prior needs positive shape and rate")

    def logpdf(self, x: float) -> float:
        if x <= 0.0:
            return -math.inf
        return float(stats.gamma.logpdf(x, self.shape, scale=1.0 / self.rate))

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def var(self) -> float:
        return self.shape / self.rate ** 2

    def sample(self, rng, size=None):
        return rng.gamma(self.shape, 1.0 / self.rate, size)

    def to_dict(self):
        return {"family": "gamma", "shape": self.shape, "rate": self.rate}


@dataclass(frozen=True)
class UniformPrior:
    low: float = 0.0
    high: float = 1.0

    def logpdf(self, x: float) -> float:
        if self.low <= x <= self.high:
            return -math.log(self.high - self.low)
        return -math.inf

    @property
    def mean(self) -> float:
        return 0.5 * (self.low + self.high)

    @property
    def var(self) -> float:
        return (self.high - self.low) ** 2 / 12.0

    def sample(self, rng, size=None):
        return rng.uniform(self.low, self.high, size)

    def to_dict(self):
        return {"family": "uniform", "low": self.low, "high": self.high}


def prior_from_dict(d: Mapping) -> GammaPrior | UniformPrior:
    family = d.get("family")
    if family == "gamma":
        return GammaPrior(float(d["shape"]), float(d["rate"]))
    if family == "uniform":
        return UniformPrior(float(d.get("low", 0.0)), float(d.get("high", 1.0)))
    raise ConfigError(f"unknown prior family {family!r}")


@dataclass(frozen=True)
class PriorSpec:
    """Independent priors, one per parameter, in a fixed order."""

    priors: Mapping[str, GammaPrior | UniformPrior]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.priors)

    def logpdf(self, theta: Mapping[str, float]) -> float:
        return sum(p.logpdf(theta[k]) for k, p in self.priors.items())

    def means(self) -> dict:
        return {k: p.mean for k, p in self.priors.items()}

    def to_dict(self):
        return {k: p.to_dict() for k, p in self.priors.items()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "PriorSpec":
        return cls({k: prior_from_dict(v) for k, v in d.items()})


# Placeholder hyperparameters. "vague" has mean 0.5 and SD ~0.35 for every
# rate; "informative" is concentrated near typical Ebola values;
# "noncentered" is equally concentrated but centred away from them.
PRIOR_PRESETS: dict[str, dict[str, dict]] = {
    "vague": {
        "beta": {"family": "gamma", "shape": 2.0, "rate": 4.0},
        "lambda": {"family": "gamma", "shape": 2.0, "rate": 4.0},
        "rho": {"family": "gamma", "shape": 2.0, "rate": 4.0},
        "gamma": {"family": "gamma", "shape": 2.0, "rate": 4.0},
    },
    "informative": {
        "beta": {"family": "gamma", "shape": 20.0, "rate": 100.0},
        "lambda": {"family": "gamma", "shape": 20.0, "rate": 100.0},
        "rho": {"family": "gamma", "shape": 20.0, "rate": 100.0},
        "gamma": {"family": "gamma", "shape": 20.0, "rate": 140.0},
    },
    "noncentered": {
        "beta": {"family": "gamma", "shape": 20.0, "rate": 50.0},
        "lambda": {"family": "gamma", "shape": 20.0, "rate": 200.0},
        "rho": {"family": "gamma", "shape": 20.0, "rate": 50.0},
        "gamma": {"family": "gamma", "shape": 20.0, "rate": 70.0},
    },
}


def ebola_prior(preset: str = "vague") -> PriorSpec:
    """Named preset for the four rates plus uniform priors on both reporting probabilities."""
    try:
        rates = PRIOR_PRESETS[preset]
    except KeyError:
        raise ConfigError(f"unknown prior preset {preset!r}; choose from {sorted(PRIOR_PRESETS)}") from None
    d = dict(rates)
    d["q23"] = {"family": "uniform"}
    d["q34"] = {"family": "uniform"}
    return PriorSpec.from_dict({k: d[k] for k in EBOLA_PARAMS})


# ---------------------------------------------------------------------------
# MCMC


@dataclass(frozen=True)
class MCMCConfig:
    """Chain settings. Unset proposal SDs are tuned during burn-in."""

    iterations: int
    burn_in: int = 0
    thin: int = 1
    proposal_sd: Mapping[str, float] | None = None
    seed: int | None = None
    init: Mapping[str, float] | None = None
    tune: bool | None = None
    tune_interval: int = 100
    target_accept: tuple[float, float] = (0.2, 0.4)

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError("iterations must be nonnegative")
        if self.iterations and not 0 <= self.burn_in < self.iterations:
            raise ConfigError("need 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ConfigError("thin must be >= 1")
        if self.proposal_sd and any(v <= 0 for v in self.proposal_sd.values()):
            raise ConfigError("proposal standard deviations must be positive")

    @property
    def tuning(self) -> bool:
        return self.proposal_sd is None if self.tune is None else self.tune


@dataclass(frozen=True)
class MCMCOutput:
    """Retained draws plus diagnostics.

    ``accepted[k, d]`` records whether the update of parameter d at iteration
    k was accepted; ``acceptance`` is the post-burn-in rate per parameter
    (the whole run when there is no burn-in).
    """

    names: tuple[str, ...]
    samples: np.ndarray
    log_post: np.ndarray
    accepted: np.ndarray
    acceptance: dict
    proposal_sd: dict
    config: MCMCConfig

    def __getitem__(self, name: str) -> np.ndarray:
        return self.samples[:, self.names.index(name)]

    @property
    def R0(self) -> np.ndarray:
        return self["beta"] / self["gamma"]

    def summary(self) -> dict:
        out = {k: (float(self[k].mean()), float(self[k].std(ddof=1)) if len(self.samples) > 1 else 0.0)
               for k in self.names}
        if "beta" in self.names and "gamma" in self.names:
            r = self.R0
            out["R0"] = (float(r.mean()), float(r.std(ddof=1)) if r.size > 1 else 0.0)
        return out


def _tune(sd, rate, lo, hi):
    if rate < lo:
        return sd * max(0.5, rate / lo) if rate > 0 else sd * 0.5
    if rate > hi:
        return sd * min(2.0, rate / hi)
    return sd


def metropolis_within_gibbs(log_lik: Callable[[Mapping[str, float]], float], prior: PriorSpec,
                            config: MCMCConfig) -> MCMCOutput:
    """One-at-a-time Gaussian random-walk Metropolis over the parameters of `prior`.

    Proposals outside the prior support are rejected without evaluating the
    likelihood.
    """
    names = prior.names
    d = len(names)
    rng = make_rng(config.seed)
    theta = dict(prior.means())
    for k, p in prior.priors.items():
        if isinstance(p, UniformPrior):
            theta[k] = 0.5 * (p.low + p.high)
    if config.init:
        theta.update(config.init)
    lp_prior = prior.logpdf(theta)
    if not np.isfinite(lp_prior):
        raise ConfigError("initial point lies outside the prior support")
    ll = log_lik(theta)
    sd = {k: (config.proposal_sd or {}).get(k, 0.1 * max(abs(theta[k]), 0.05)) for k in names}

    N = config.iterations
    if N == 0:
        row = np.array([[theta[k] for k in names]])
        return MCMCOutput(names, row, np.array([ll + lp_prior]), np.zeros((0, d), bool),
                          {k: 0.0 for k in names}, sd, config)

    keep = np.arange(config.burn_in, N, config.thin)
    samples = np.empty((keep.size, d))
    log_post = np.empty(keep.size)
    accepted = np.zeros((N, d), dtype=bool)
    lo, hi = config.target_accept
    slot = 0
    for it in range(N):
        for c, k in enumerate(names):
            old = theta[k]
            prop = old + sd[k] * rng.standard_normal()
            theta[k] = prop
            lp_new = prior.priors[k].logpdf(prop)
            if not np.isfinite(lp_new):
                theta[k] = old
                continue
            ll_new = log_lik(theta)
            lp_old = prior.priors[k].logpdf(old)
            log_alpha = (ll_new + lp_new) - (ll + lp_old)
            if np.log(rng.uniform()) < log_alpha:
                ll = ll_new
                lp_prior += lp_new - lp_old
                accepted[it, c] = True
            else:
                theta[k] = old
        if config.tuning and it < config.burn_in and (it + 1) % config.tune_interval == 0:
            window = accepted[it + 1 - config.tune_interval:it + 1].mean(axis=0)
            for c, k in enumerate(names):
                sd[k] = _tune(sd[k], window[c], lo, hi)
        if slot < keep.size and it == keep[slot]:
            samples[slot] = [theta[k] for k in names]
            log_post[slot] = ll + lp_prior
            slot += 1
    counted = accepted[config.burn_in:] if config.burn_in else accepted
    rates = {k: float(counted[:, c].mean()) for c, k in enumerate(names)}
    return MCMCOutput(names, samples, log_post, accepted, rates, dict(sd), config)


def mcmc_run(problem: EbolaProblem, prior: PriorSpec, config: MCMCConfig) -> MCMCOutput:
    """Sample the approximate posterior of the six Ebola parameters."""
    missing = set(EBOLA_PARAMS) - set(prior.names)
    if missing:
        raise ConfigError(f"prior lacks {sorted(missing)}")
    return metropolis_within_gibbs(problem.loglik, prior, config)


def mcmc_chains(problem: EbolaProblem, prior: PriorSpec, config: MCMCConfig,
                n_chains: int, threads: int = 1) -> list[MCMCOutput]:
    """Independent chains with seeds spawned from ``config.seed``."""
    seeds = seed_sequence(config.seed).spawn(n_chains)
    configs = [MCMCConfig(**{**config.__dict__, "seed": s}) for s in seeds]
    if threads <= 1:
        return [mcmc_run(problem, prior, c) for c in configs]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(lambda c: mcmc_run(problem, prior, c), configs))
