"""Sample paths of a large SEIR epidemic.

Even at n = 10^7 the timing of the infective peak differs by weeks between
runs started from a single exposed individual, because the early phase is
driven by a handful of individuals.

    python demos/forward_simulation.py
"""

import numpy as np

from epimult import make_spec, seeded_pi0, simulate_latent

n = 10**7
spec = make_spec("seir", n, seeded_pi0(4, n), {"beta": 0.8, "rho": 0.2, "gamma": 1 / 9})

peaks = []
for seed in range(20):
    share = simulate_latent(spec, 250, seed=seed, x0=[n - 1, 1, 0, 0]).x[:, 2] / n
    if share.max() < 0.01:
        print(f"seed {seed:2d}: died out early (max infective share {share.max():.1e})")
        continue
    peaks.append(int(share.argmax()))
    print(f"seed {seed:2d}: peak {share.max():.3f} at t = {peaks[-1]}")

print(f"\npeak times among major outbreaks: {min(peaks)} to {max(peaks)} (median {np.median(peaks):.0f})")
