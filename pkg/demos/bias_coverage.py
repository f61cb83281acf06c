"""Empirical bias and coverage of the transition filter at small scale.

Each replicate simulates the Ebola model from x0 ~ Mult(n, pi0), reports
cases and deaths binomially and compares the filtering mean and 95% interval
with the true compartment counts.

    python demos/bias_coverage.py
"""

import numpy as np

from epimult.experiments import bias_coverage

res = bias_coverage(n=500, replicates=200, T=100, seed=1)
for i, name in enumerate("SEIR"):
    print(f"{name}: max |bias| {np.abs(res.bias[:, i]).max():.3f}, "
          f"coverage {res.coverage[:, i].min():.3f} to {res.coverage[:, i].max():.3f}")
