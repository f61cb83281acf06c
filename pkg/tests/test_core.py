import numpy as np
import pytest
from hypothesis import given, strategies as st

from epimult.core import (
    TOL, ConfigError, CountExceedsPopulation, ModelSpec, NegativeElement, SumOutOfTolerance,
    check_params, log_factorial, log_multinomial_coeff, safe_xlogy, validate_counts,
    validate_joint_matrix, validate_prob_vector, validate_stoch_matrix,
)
from epimult.models import get_kernel


def test_prob_vector_clamps_tiny_negatives_and_renormalises():
    v = validate_prob_vector([0.5, 0.5 + 1e-12, -1e-12])
    assert v[2] == 0.0
    assert abs(v.sum() - 1.0) < 1e-15
    assert not v.flags.writeable


def test_prob_vector_rejects_negative_and_bad_sum():
    with pytest.raises(NegativeElement):
        validate_prob_vector([1.1, -0.1])
    with pytest.raises(SumOutOfTolerance):
        validate_prob_vector([0.5, 0.5 + 10 * TOL])
    with pytest.raises(SumOutOfTolerance):
        validate_prob_vector([np.nan, 1.0])


def test_matrix_validators():
    K = validate_stoch_matrix([[0.9, 0.1], [0.0, 1.0]])
    assert K.shape == (2, 2)
    with pytest.raises(SumOutOfTolerance):
        validate_stoch_matrix([[0.9, 0.2], [0.0, 1.0]])
    P = validate_joint_matrix([[0.25, 0.25], [0.25, 0.25]])
    assert P.sum() == pytest.approx(1.0)
    with pytest.raises(SumOutOfTolerance):
        validate_joint_matrix([[0.5, 0.5], [0.5, 0.5]])


def test_validate_counts():
    assert validate_counts([1, 2, 3], 6, exact=True).sum() == 6
    validate_counts([1, 2], 6)
    with pytest.raises(CountExceedsPopulation):
        validate_counts([4, 3], 6)
    with pytest.raises(SumOutOfTolerance):
        validate_counts([1, 2], 6, exact=True)
    with pytest.raises(NegativeElement):
        validate_counts([-1, 2])
    with pytest.raises(ValueError):
        validate_counts([1.5, 2])


@given(st.integers(0, 50), st.lists(st.integers(0, 10), min_size=1, max_size=4))
def test_log_multinomial_coeff_matches_direct(n, counts):
    from math import factorial, log
    if sum(counts) > n:
        with pytest.raises(CountExceedsPopulation):
            log_multinomial_coeff(n, counts)
        return
    direct = factorial(n)
    for c in counts + [n - sum(counts)]:
        direct //= factorial(c)
    assert log_multinomial_coeff(n, counts) == pytest.approx(log(direct), abs=1e-9)


def test_log_factorial_and_xlogy():
    assert log_factorial(0) == 0.0
    assert log_factorial(5) == pytest.approx(np.log(120))
    assert safe_xlogy(0, 0) == 0.0
    assert safe_xlogy(2, 0) == -np.inf


def test_check_params():
    check_params({"beta": 0.2, "q23": 1.0, "h": 1.0, "other": "anything"})
    for bad in ({"beta": -0.1}, {"q23": 1.2}, {"h": 0.0}, {"gamma": np.inf}):
        with pytest.raises(ConfigError):
            check_params(bad)


def test_model_spec():
    spec = ModelSpec(10, [0.9, 0.1, 0, 0], get_kernel("seir"), {"beta": 0.5, "rho": 0.2, "gamma": 0.1})
    assert spec.m == 4
    K = spec.K(1, spec.pi0)
    assert np.allclose(K.sum(axis=1), 1.0)
    assert spec.with_theta(beta=1.0).theta["beta"] == 1.0
    with pytest.raises(ConfigError):
        ModelSpec(0, [1.0, 0.0], get_kernel("seir"))
    with pytest.raises(ConfigError):
        ModelSpec(10, [1.0], get_kernel("seir"))
