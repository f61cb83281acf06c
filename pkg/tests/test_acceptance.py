"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

The lines are printed in the terminal summary (``pytest tests/test_acceptance.py``)
and the heavier criteria are marked ``slow``. Seeds were fixed before the
results were seen; see the README for the selection rules.
"""

import functools
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

import epimult
from epimult.core import ModelSpec
from epimult.estimate import MCMCConfig, ebola_prior, mcmc_run, profile_em
from epimult.experiments import EBOLA_TRUTH, bias_coverage, ebola_reporting, ebola_spec, major_outbreak
from epimult.filtering import (
    ObsX, ObsZ, _update_x_full, _update_z_full, filter_x, filter_z, predict_x, predict_z,
)
from epimult.models import custom_kernel, make_spec, seeded_pi0
from epimult.oracle import (
    binomial_likelihood, enumerate_count_matrices, enumerate_states, exact_filter, multinomial_pmf,
    predict_mixture_x, predict_mixture_z, shifted_multinomial_pmf,
)
from epimult.simulate import simulate_latent, simulate_obs_z
from epimult.smc import backward_sample, smc_draws, smc_filter
from conftest import ACCEPTANCE, random_kernel, random_prob, random_reporting

ARTIFACTS = Path(__file__).resolve().parent.parent / "acceptance_artifacts"


def criterion(k, title):
    """Record PASS/FAIL for criterion k; the wrapped test returns ``(ok, detail)``."""

    def wrap(fn):
        @functools.wraps(fn)
        def test(*args, **kwargs):
            t0 = time.perf_counter()
            try:
                ok, detail = fn(*args, **kwargs)
            except Exception as exc:
                ACCEPTANCE[k] = (title, False, f"error: {exc!r}")
                raise
            ACCEPTANCE[k] = (title, bool(ok), f"{detail} [{time.perf_counter() - t0:.1f}s]")
            assert ok, detail

        return test

    return wrap


@pytest.fixture(scope="module")
def outbreak():
    return major_outbreak(start_seed=2026, min_cases=100)


# -- 1 -------------------------------------------------------------------------


@criterion(1, "one-step predict/update match enumeration to 1e-12")
def test_one_step_exactness():
    rng = np.random.default_rng(20261016)
    worst = 0.0
    draws = 0
    for m in (2, 3):
        for n in range(2, 7):
            states = enumerate_states(m, n)
            mats = enumerate_count_matrices(m, n)
            for _ in range(10):
                K = random_kernel(rng, m)
                kern = custom_kernel(lambda t, eta, th, K=K: K)
                # x route: prediction pmf, then update pmf / mean / likelihood
                pi = random_prob(rng, m)
                pred = predict_x(pi, kern, 1, {})
                worst = max(worst, np.abs(multinomial_pmf(states, n, pred) - predict_mixture_x(pi, K, n)).max())
                x = rng.multinomial(n, pred)
                q = random_reporting(rng, m)
                y = rng.binomial(x, q)
                prior = multinomial_pmf(states, n, pred)
                joint = prior * binomial_likelihood(states, y, q)
                py = joint.sum()
                filt, lw, star = _update_x_full(pred, y, q, n)
                approx = shifted_multinomial_pmf(states, y, n - int(y.sum()), star)
                worst = max(worst, np.abs(approx - joint / py).max(),
                            np.abs(n * filt - (joint / py) @ states).max(), abs(math.exp(lw) - py))
                # z route
                P = random_prob(rng, m * m).reshape(m, m)
                predZ = predict_z(P.sum(axis=0), kern, 1, {})
                worst = max(worst, np.abs(multinomial_pmf(mats, n, predZ) - predict_mixture_z(P, K, n)).max())
                Z = rng.multinomial(n, predZ.ravel()).reshape(m, m)
                Q = random_reporting(rng, (m, m))
                Y = rng.binomial(Z, Q)
                prior = multinomial_pmf(mats, n, predZ)
                joint = prior * binomial_likelihood(mats, Y, Q)
                py = joint.sum()
                filt, lw, star = _update_z_full(predZ, Y, Q, n)
                approx = shifted_multinomial_pmf(mats, Y, n - int(Y.sum()), star)
                mean = np.tensordot(joint / py, mats.astype(float), axes=1)
                worst = max(worst, np.abs(approx - joint / py).max(),
                            np.abs(n * filt - mean).max(), abs(math.exp(lw) - py))
                draws += 1
    return worst <= 1e-12, f"{draws} draws per route, max abs deviation {worst:.2e}"


# -- 2 -------------------------------------------------------------------------


@criterion(2, "all-missing data: log-likelihood exactly 0, filter = prediction")
def test_missing_data_neutrality():
    n, T = 100_000, 200
    spec = make_spec("seir", n, seeded_pi0(4, n, seeds=50), {"beta": 0.5, "rho": 0.3, "gamma": 0.2})
    tx = filter_x(spec, ObsX.missing(T, 4))
    tz = filter_z(spec, ObsZ.missing(T, 4))
    # the prediction chain computed on its own
    chain = [spec.pi0]
    for t in range(1, T + 1):
        chain.append(predict_x(chain[-1], spec.kernel, t, spec.theta))
    chain = np.array(chain)
    ok = (tx.loglik == 0.0 and tz.loglik == 0.0 and np.array_equal(tx.pi_filt, chain)
          and np.array_equal(tx.pi_filt[1:], tx.pi_pred) and np.allclose(tz.pi_filt, chain, rtol=0, atol=1e-15))
    return ok, f"loglik x={tx.loglik!r} z={tz.loglik!r}"


# -- 3 -------------------------------------------------------------------------


@pytest.mark.slow
@criterion(3, "profile EM recovers (beta, lambda, rho, gamma) within 50% and R0 in [1.1, 1.8]")
def test_ebola_em_recovery(outbreak):
    beta_grid = np.round(np.arange(0.05, 0.5001, 0.01), 2)
    lambda_grid = np.round(np.arange(0.01, 1.0001, 0.01), 2)
    em_profile = profile_em(outbreak.problem, beta_grid, lambda_grid)
    th = em_profile.theta
    rel = {k: abs(th[k] - EBOLA_TRUTH[k]) / EBOLA_TRUTH[k] for k in ("beta", "lambda", "rho", "gamma")}
    ok = all(v <= 0.5 for v in rel.values()) and 1.1 <= em_profile.R0 <= 1.8
    est = ", ".join(f"{k}={th[k]:.4g}" for k in ("beta", "lambda", "rho", "gamma", "q23", "q34"))
    return ok, (f"seed {outbreak.seed} (T={outbreak.trajectory.T}, {outbreak.total_cases} cases): "
                f"{est}, R0={em_profile.R0:.3f}; largest EM log-lik decrease on grid {em_profile.max_decrease:.3g}")


# -- 4 -------------------------------------------------------------------------

VAGUE_ROW = {"beta": (0.23, 0.028), "lambda": (0.21, 0.080), "rho": (0.22, 0.076), "gamma": (0.173, 0.024),
             "q23": (0.81, 0.140), "q34": (0.66, 0.119), "R0": (1.31, 0.088)}


@pytest.mark.slow
@criterion(4, "vague-prior MCMC means within 3 reference SDs of the reference row")
def test_mcmc_vague(outbreak):
    out = mcmc_run(outbreak.problem, ebola_prior("vague"), MCMCConfig(100_000, burn_in=20_000, seed=2026))
    means = {k: float(out[k].mean()) for k in out.names}
    means["R0"] = float(out.R0.mean())
    z = {k: abs(means[k] - mu) / sd for k, (mu, sd) in VAGUE_ROW.items()}
    worst = max(z, key=z.get)
    detail = ", ".join(f"{k}={means[k]:.3f}" for k in VAGUE_ROW) + f"; worst {worst} at {z[worst]:.2f} SD"
    return all(v <= 3.0 for v in z.values()), detail


# -- 5 -------------------------------------------------------------------------


@pytest.mark.slow
@criterion(5, "n=500, 2000 replicates, T=200: |bias| < 0.5 and coverage >= 0.95")
def test_bias_coverage():
    res = bias_coverage(500, 2000, 200, seed=20261016)
    b = float(np.abs(res.bias).max())
    c = float(res.coverage.min())
    return b < 0.5 and c >= 0.95, f"max |bias| {b:.3f}, min coverage {c:.4f}"


# -- 6 -------------------------------------------------------------------------


def _median_time(spec, obs, reps=7):
    filter_z(spec, obs)
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        filter_z(spec, obs)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


@criterion(6, "filter_z wall time at n=1e7 within 2x of n=1e3 (m=4, T=200)")
def test_complexity_independent_of_n():
    T = 200
    Q = np.zeros((T, 4, 4))
    Q[:, 1, 2] = 0.5
    times = {}
    for n in (10**3, 10**7):
        spec = make_spec("seir", n, seeded_pi0(4, n, seeds=max(1, n // 1000)),
                         {"beta": 0.5, "rho": 0.3, "gamma": 0.2})
        tr = simulate_latent(spec, T, seed=1)
        times[n] = _median_time(spec, ObsZ(simulate_obs_z(tr, Q, seed=2), Q))
    ratio = times[10**7] / times[10**3]
    return 0.5 <= ratio <= 2.0, f"n=1e3 {times[10**3] * 1e3:.1f} ms, n=1e7 {times[10**7] * 1e3:.1f} ms, ratio {ratio:.2f}"


# -- 7 -------------------------------------------------------------------------


@criterion(7, "SMC degeneracy, ESS bounds, backward-draw totals")
def test_smc_degeneracy(outbreak):
    spec = ebola_spec()
    obs = outbreak.obs
    ens = smc_filter(spec, obs, 0.0, EBOLA_TRUTH["beta"], 1, seed=1)
    ref = filter_z(spec, obs)
    bitwise = np.array_equal(ens.pi_filt[:, 0], ref.pi_filt[1:])
    big = smc_filter(spec, obs, 0.05, EBOLA_TRUTH["beta"], 200, seed=2)
    ess_ok = bool(np.all((big.ess >= 1.0) & (big.ess <= 200)))
    rng = np.random.default_rng(3)
    totals_ok = all(np.all(backward_sample(big, rng).Z_tilde.sum(axis=(1, 2)) == spec.n) for _ in range(100))
    return bitwise and ess_ok and totals_ok, (f"bitwise pi match {bitwise}, ESS in [{big.ess.min():.1f}, "
                                              f"{big.ess.max():.1f}], 100 draws total n {totals_ok}")


# -- 8 -------------------------------------------------------------------------


@pytest.mark.slow
@criterion(8, "SMC posterior-mean R_t within 30% time-averaged error on simulated COVID data")
def test_covid_pipeline():
    n, T = 1_000_000, 60
    gamma, rho = 1 / 2.9, 1 / 5.2
    R_true = 2.4 - 1.4 / (1 + np.exp(-(np.arange(1, T + 1) - 30) / 5))
    beta_true = gamma * R_true
    theta = {"beta": lambda t: beta_true[min(t, T) - 1], "rho": rho, "gamma": gamma, "f": 0.01, "h": 1.0}
    spec = make_spec("covid", n, seeded_pi0(10, n, 1, 20.0), theta)
    traj = simulate_latent(spec, T, seed=5)
    Q = np.zeros((10, 10))
    Q[2, 3], Q[6, 7] = 0.1, 0.8
    Y = simulate_obs_z(traj, Q, seed=6)
    draws, _ = smc_draws(spec, ObsZ(Y, np.broadcast_to(Q, Y.shape)), 0.1, beta_true[0], 3000, runs=20, seed=7)
    R_hat = np.mean([d.beta_tilde / gamma for d in draws], axis=0)
    err = float(np.mean(np.abs(R_hat - R_true)) / R_true.mean())
    return err < 0.3, f"relative time-averaged error {err:.3f}"


# -- 9 -------------------------------------------------------------------------


@criterion(9, "approximate vs exact log-likelihood gap archived (m=4, n=6, T=4)")
def test_oracle_gap_archive():
    n, T = 6, 4
    theta = {**EBOLA_TRUTH, "beta": 0.9, "lambda": 0.1}
    rows = []
    for seed in range(10):
        spec = ebola_spec(n, theta, t_star=2)
        spec = ModelSpec(n, [0.5, 0.3, 0.2, 0.0], spec.kernel, spec.theta)
        tr = simulate_latent(spec, T, seed=seed)
        Q = np.broadcast_to(ebola_reporting(theta["q23"], theta["q34"]), (T, 4, 4))
        obs = ObsZ(simulate_obs_z(tr, Q, seed=100 + seed), Q)
        approx = filter_z(spec, obs).loglik
        exact = exact_filter(spec, obs, "z").loglik
        rows.append({"seed": seed, "approx": approx, "exact": exact, "gap": approx - exact})
    gaps = np.array([r["gap"] for r in rows])
    ARTIFACTS.mkdir(exist_ok=True)
    path = ARTIFACTS / f"oracle_gap-{epimult.__version__}.json"
    path.write_text(json.dumps({"version": epimult.__version__, "m": 4, "n": n, "T": T,
                                "theta": theta, "instances": rows,
                                "max_abs_gap": float(np.abs(gaps).max())}, indent=2) + "\n")
    return bool(np.all(np.isfinite(gaps))), (f"max |gap| {np.abs(gaps).max():.4f} nats, "
                                             f"mean {gaps.mean():+.4f}; archived to {path.name}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
