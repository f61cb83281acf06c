from math import comb

import numpy as np
import pytest
from scipy.stats import binom

from epimult.core import TooLarge
from epimult.filtering import ObsX, ObsZ, update_x
from epimult.models import make_spec, seeded_pi0
from epimult.oracle import (
    enumerate_count_matrices, enumerate_states, exact_filter, exact_transition_pmf,
    multinomial_pmf, transition_matrix_exact,
)
from conftest import random_kernel


def test_enumeration_examples():
    assert enumerate_states(2, 2).tolist() == [[0, 2], [1, 1], [2, 0]]
    assert len(enumerate_states(3, 2)) == 6
    assert len(enumerate_states(4, 10)) == 286


@pytest.mark.parametrize("m,n", [(1, 5), (2, 7), (3, 4), (4, 6), (5, 3)])
def test_enumeration_size_is_stars_and_bars(m, n):
    s = enumerate_states(m, n)
    assert len(s) == comb(n + m - 1, m - 1)
    assert np.all(s.sum(axis=1) == n)
    assert len({tuple(r) for r in s}) == len(s)
    assert [tuple(r) for r in s] == sorted(tuple(r) for r in s)
    assert len(enumerate_count_matrices(2, 3)) == comb(3 + 3, 3)


def test_enumeration_guard():
    with pytest.raises(TooLarge):
        enumerate_states(10, 60)


def test_identity_kernel_point_mass(rng):
    x = np.array([2, 0, 3])
    pmf = exact_transition_pmf(x, np.eye(3))
    states = enumerate_states(3, 5)
    assert pmf[[tuple(s) for s in states].index((2, 0, 3))] == 1.0
    assert pmf.sum() == 1.0


def test_transition_pmf_normalised(rng):
    for _ in range(20):
        m = rng.integers(2, 5)
        n = rng.integers(1, 6)
        x = rng.multinomial(n, np.full(m, 1 / m))
        pmf = exact_transition_pmf(x, random_kernel(rng, m))
        assert abs(pmf.sum() - 1.0) < 1e-12


def test_two_compartments_match_binomial_convolution(rng):
    """x' = Bin(x1, K11) + Bin(x2, K21), computed by direct convolution."""
    for _ in range(10):
        K = random_kernel(rng, 2, zero_frac=0.0)
        x = rng.integers(0, 6, size=2)
        n = x.sum()
        pmf = exact_transition_pmf(x, K)
        a = binom.pmf(np.arange(n + 1), x[0], K[0, 0])
        b = binom.pmf(np.arange(n + 1), x[1], K[1, 0])
        first = np.convolve(a, b)[: n + 1]
        states = enumerate_states(2, n)
        assert np.allclose(pmf, first[states[:, 0]], atol=1e-14)


def test_single_step_likelihood_is_closed_form(rng):
    """With a multinomial start, the exact one-step marginal likelihood equals the
    closed-form update weight."""
    for _ in range(10):
        n = int(rng.integers(2, 6))
        spec = make_spec("seir", n, [0.5, 0.3, 0.2, 0.0], {"beta": 0.9, "rho": 0.4, "gamma": 0.3})
        q = rng.random(4)
        x1 = rng.multinomial(n, spec.pi0 @ spec.K(1, spec.pi0))
        y = rng.binomial(x1, q)
        ex = exact_filter(spec, ObsX(y[None], q[None]), "x", mean_field=True)
        _, lw = update_x(spec.pi0 @ spec.K(1, spec.pi0), y, q, n)
        assert ex.log_increments[0] == pytest.approx(lw, abs=1e-12)


def test_identity_kernel_full_reporting_gives_point_mass():
    from epimult.core import ModelSpec
    from epimult.models import custom_kernel
    spec = ModelSpec(4, [0.5, 0.25, 0.25], custom_kernel(lambda t, eta, th: np.eye(3)))
    y = np.array([[2, 1, 1], [2, 1, 1]])
    ex = exact_filter(spec, ObsX(y, np.ones((2, 3))), "x")
    for t in (1, 2):
        post = ex.posteriors[t]
        assert post.max() == pytest.approx(1.0)
        assert ex.means[t].tolist() == [2, 1, 1]


def test_exact_z_filter_agrees_with_x_filter_when_nothing_observed():
    n = 3
    spec = make_spec("seir", n, seeded_pi0(4, n), {"beta": 1.5, "rho": 0.5, "gamma": 0.3})
    ex = exact_filter(spec, ObsX.missing(3, 4), "x")
    ez = exact_filter(spec, ObsZ.missing(3, 4), "z")
    assert np.allclose(ex.means, ez.means, atol=1e-12)
    assert ez.loglik == pytest.approx(0.0, abs=1e-12)
    # the true chain built from transition_matrix_exact gives the same marginals
    states = enumerate_states(4, n)
    p = multinomial_pmf(states, n, spec.pi0)
    for t in range(1, 4):
        p = p @ transition_matrix_exact(spec, t)
        assert np.allclose(p @ states, ex.means[t])
