"""Synthetic Ebola outbreak: simulate, fit by profile EM, then sample the posterior.

Uses the reference parameter values, conditions on a major outbreak
(at least 100 cases), runs EM on a coarse (beta, lambda) grid and a short
Metropolis-within-Gibbs chain under the vague prior preset.

    python demos/ebola_synthetic.py            # about a minute
"""

import logging

import numpy as np

from epimult.estimate import MCMCConfig, ebola_prior, mcmc_run, profile_em
from epimult.experiments import EBOLA_TRUTH, major_outbreak

logging.basicConfig(level=logging.ERROR)

out = major_outbreak(start_seed=2026)
print(f"seed {out.seed}: {out.trajectory.T} days, {out.total_cases} cases, "
      f"{int(out.obs.Y[:, 1, 2].sum())} reported cases, {int(out.obs.Y[:, 2, 3].sum())} reported deaths")

prof = profile_em(out.problem, np.round(np.arange(0.10, 0.401, 0.02), 2), np.round(np.arange(0.02, 0.601, 0.04), 2))
print("\nprofile EM (coarse grid)")
for k in ("beta", "lambda", "rho", "gamma", "q23", "q34"):
    print(f"  {k:7s} {prof.theta[k]:.3f}   truth {EBOLA_TRUTH[k]:.3f}")
print(f"  R0      {prof.R0:.3f}   truth {EBOLA_TRUTH['beta'] / EBOLA_TRUTH['gamma']:.3f}")

chain = mcmc_run(out.problem, ebola_prior("vague"), MCMCConfig(6000, burn_in=2000, seed=1))
print("\nMCMC, vague prior (short chain): posterior mean (sd), acceptance")
for k, (m, s) in chain.summary().items():
    acc = chain.acceptance.get(k)
    print(f"  {k:7s} {m:.3f} ({s:.3f})" + (f"   {acc:.2f}" if acc is not None else ""))
