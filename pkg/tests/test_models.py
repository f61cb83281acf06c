import numpy as np
import pytest
from hypothesis import given, strategies as st

from epimult.core import ConfigError
from epimult.models import (
    COVID_ONSET_TRAVEL, COVID_ONSET_WUHAN, E1T, E1W, I1W, I2W, KERNELS, S, covid_kernel,
    ebola_beta, ebola_kernel, get_kernel, make_spec, seeded_pi0, seir_kernel,
)

SEIR = {"beta": 0.3, "rho": 0.2, "gamma": 0.143}


@given(st.floats(0, 5), st.floats(0, 5), st.floats(0, 5), st.floats(0.1, 3),
       st.lists(st.floats(0, 1), min_size=4, max_size=4))
def test_seir_kernel_row_stochastic(beta, rho, gamma, h, eta):
    K = seir_kernel(1, np.array(eta), {"beta": beta, "rho": rho, "gamma": gamma, "h": h})
    assert np.all(K >= 0)
    assert np.allclose(K.sum(axis=1), 1.0, atol=1e-14)
    assert K[3, 3] == 1.0


def test_seir_kernel_entries():
    eta = np.array([0.7, 0.1, 0.2, 0.0])
    K = seir_kernel(1, eta, SEIR)
    assert K[0, 1] == pytest.approx(1 - np.exp(-0.3 * 0.2))
    assert K[1, 2] == pytest.approx(1 - np.exp(-0.2))
    assert K[2, 3] == pytest.approx(1 - np.exp(-0.143))


def test_kernels_batch_over_particles():
    eta = np.tile([0.7, 0.1, 0.2, 0.0], (5, 1))
    beta = np.linspace(0.1, 0.5, 5)
    K = seir_kernel(1, eta, {**SEIR, "beta": beta})
    assert K.shape == (5, 4, 4)
    for k in range(5):
        assert np.allclose(K[k], seir_kernel(1, eta[k], {**SEIR, "beta": beta[k]}))


def test_ebola_beta_switches_at_t_star():
    th = {"beta": 0.2, "lambda": 0.5, "t_star": 10}
    assert ebola_beta(9, th) == 0.2
    assert ebola_beta(10, th) == 0.2
    assert ebola_beta(12, th) == pytest.approx(0.2 * np.exp(-1.0))
    K = ebola_kernel(12, np.array([0.5, 0.0, 0.5, 0.0]), {**th, "rho": 0.2, "gamma": 0.1})
    assert K[0, 1] == pytest.approx(1 - np.exp(-0.2 * np.exp(-1.0) * 0.5))


def test_covid_kernel_structure():
    th = {"beta": 2.0, "rho": 0.2, "gamma": 0.3, "f": 0.25, "t_restrict": 5}
    eta = np.zeros(10)
    eta[S], eta[I1W], eta[I2W] = 0.9, 0.05, 0.05
    K = covid_kernel(1, eta, th)
    assert np.allclose(K.sum(axis=1), 1.0)
    p = 1 - np.exp(-2.0 * 0.1)
    assert K[S, E1W] == pytest.approx(0.75 * p)
    assert K[S, E1T] == pytest.approx(0.25 * p)
    assert K[COVID_ONSET_WUHAN] == pytest.approx(1 - np.exp(-0.4))
    assert K[COVID_ONSET_TRAVEL] == pytest.approx(1 - np.exp(-0.4))
    assert K[I1W, I2W] == pytest.approx(1 - np.exp(-0.6))
    # after the restriction date nobody departs
    K5 = covid_kernel(5, eta, th)
    assert K5[S, E1T] == 0.0 and K5[S, E1W] == pytest.approx(p)


def test_covid_schedules_are_callables():
    th = {"beta": lambda t: 0.1 * t, "rho": 0.2, "gamma": 0.3, "f": lambda t: 0.0}
    eta = np.zeros(10)
    eta[S], eta[I1W] = 0.5, 0.5
    assert covid_kernel(3, eta, th)[S, E1W] == pytest.approx(1 - np.exp(-0.3 * 0.5))


def test_registry_and_make_spec():
    assert set(KERNELS) == {"seir", "ebola", "covid"}
    with pytest.raises(ConfigError):
        get_kernel("sir")
    with pytest.raises(ConfigError):
        make_spec("seir", 10, seeded_pi0(4, 10), {"beta": 0.1})
    with pytest.raises(ConfigError):
        make_spec("covid", 10, seeded_pi0(4, 10), {"beta": 0.1, "rho": 1, "gamma": 1})
    spec = make_spec("seir", 10, seeded_pi0(4, 10), SEIR)
    assert spec.pi0[1] == pytest.approx(0.1)
