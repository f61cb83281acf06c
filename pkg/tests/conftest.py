import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_kernel(rng, m, zero_frac=0.3):
    """Row-stochastic matrix with some structural zeros (diagonal always positive)."""
    K = rng.random((m, m)) * (rng.random((m, m)) > zero_frac)
    K[np.arange(m), np.arange(m)] += 0.05
    return K / K.sum(axis=1, keepdims=True)


def random_prob(rng, m, zero_frac=0.2):
    p = rng.random(m) * (rng.random(m) > zero_frac)
    p[rng.integers(m)] += 0.1
    return p / p.sum()


def random_reporting(rng, shape):
    """Reporting probabilities mixing exact 0, exact 1 and interior values."""
    q = rng.random(shape)
    u = rng.random(shape)
    q[u < 0.2] = 0.0
    q[u > 0.85] = 1.0
    return q


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion number -> (title, passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k} {'PASS' if ok else 'FAIL'}: {title} | {detail}")
