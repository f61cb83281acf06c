"""Validated numerical primitives shared across the package.

Probability vectors, row-stochastic matrices and joint (matrix-valued)
probability tables are all plain read-only ``numpy`` arrays; the
constructors here are the single place where their invariants are checked.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np
from scipy.special import gammaln, xlogy

#: Absolute tolerance used for every simplex check in the package.
TOL = 1e-10


class EpiError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(EpiError, ValueError):
    pass


class NegativeElement(EpiError, ValueError):
    pass


class SumOutOfTolerance(EpiError, ValueError):
    pass


class CountExceedsPopulation(EpiError, ValueError):
    pass


class ObservationExceedsPopulation(EpiError, ValueError):
    pass


class DegenerateUpdate(EpiError, ArithmeticError):
    pass


class ZeroDenominator(EpiError, ArithmeticError):
    pass


class ZeroExpectedCount(EpiError, ArithmeticError):
    pass


class AllWeightsZero(EpiError, ArithmeticError):
    pass


class TooLarge(EpiError, ValueError):
    pass


class HorizonCapReached(EpiError, RuntimeError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _simplex(values, axes, what: str) -> np.ndarray:
    a = np.array(values, dtype=float)
    if not np.all(np.isfinite(a)):
        raise SumOutOfTolerance(f"{what} has non-finite entries")
    if np.any(a < -TOL):
        raise NegativeElement(f"{what} has negative entries: min={a.min():.3g}")
    a = np.clip(a, 0.0, None)
    s = a.sum(axis=axes, keepdims=True)
    if np.any(np.abs(s - 1.0) > TOL):
        raise SumOutOfTolerance(f"{what} sums to {np.ravel(s)} (tolerance {TOL})")
    return _frozen(a / s)


def validate_prob_vector(values) -> np.ndarray:
    """Return `values` as a validated probability vector.

    Entries within ``TOL`` of the simplex are clamped at zero and
    renormalized so the result sums to one exactly (up to rounding).
    """
    a = np.asarray(values, dtype=float)
    if a.ndim != 1:
        raise ValueError("probability vector must be one-dimensional")
    return _simplex(a, -1, "probability vector")


def validate_stoch_matrix(values) -> np.ndarray:
    a = np.asarray(values, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("stochastic matrix must be square")
    return _simplex(a, -1, "row-stochastic matrix")


def validate_joint_matrix(values) -> np.ndarray:
    a = np.asarray(values, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("joint matrix must be square")
    return _simplex(a, (-2, -1), "joint probability matrix")


def validate_counts(values, n: int | None = None, exact: bool = False) -> np.ndarray:
    """Validate a count vector or count matrix against population size `n`.

    With ``exact=True`` the counts must sum to `n` (latent states);
    otherwise the sum may not exceed it (observations).
    """
    a = np.asarray(values)
    if a.size and not np.all(np.equal(np.mod(a, 1), 0)):
        raise ValueError("counts must be integers")
    a = a.astype(np.int64)
    if np.any(a < 0):
        raise NegativeElement("counts must be nonnegative")
    if n is not None:
        total = int(a.sum())
        if total > n:
            raise CountExceedsPopulation(f"counts sum to {total} > n={n}")
        if exact and total != n:
            raise SumOutOfTolerance(f"latent counts sum to {total}, expected n={n}")
    return _frozen(a)


def log_factorial(k):
    """``log(k!)`` via the log-gamma function; vectorized."""
    return gammaln(np.asarray(k, dtype=float) + 1.0)


def log_multinomial_coeff(n: int, counts) -> float:
    """``log(n! / (prod counts! * (n - sum counts)!))``.

    The leftover ``n - sum(counts)`` acts as an implicit extra category,
    matching the normalising constant of the observation likelihood.
    """
    c = np.asarray(counts, dtype=float)
    rest = n - c.sum()
    if rest < 0:
        raise CountExceedsPopulation(f"counts sum to {c.sum():g} > n={n}")
    if np.any(c < 0):
        raise NegativeElement("counts must be nonnegative")
    return float(log_factorial(n) - log_factorial(c).sum() - log_factorial(rest))


def safe_xlogy(x, y):
    """``x * log(y)`` with ``0 * log(0) == 0``."""
    return xlogy(x, y)


# name -> (lower, upper, lower_open)
PARAM_CONSTRAINTS: dict[str, tuple[float, float, bool]] = {
    "beta": (0.0, np.inf, False),
    "beta0": (0.0, np.inf, False),
    "lambda": (0.0, np.inf, False),
    "rho": (0.0, np.inf, False),
    "gamma": (0.0, np.inf, False),
    "kappa": (0.0, np.inf, False),
    "h": (0.0, np.inf, True),
    "t_star": (0.0, np.inf, False),
    "sigma_V": (0.0, np.inf, False),
    "f": (0.0, 1.0, False),
    "q23": (0.0, 1.0, False),
    "q34": (0.0, 1.0, False),
    "qW": (0.0, 1.0, False),
    "qT": (0.0, 1.0, False),
}


def check_params(theta: Mapping[str, Any]) -> dict[str, Any]:
    """Check every known parameter in `theta` against its declared range.

    Callables (time schedules) and unknown names pass through untouched.
    Array-valued entries are checked elementwise.
    """
    out = dict(theta)
    for name, value in out.items():
        if name not in PARAM_CONSTRAINTS or callable(value):
            continue
        lo, hi, open_lo = PARAM_CONSTRAINTS[name]
        v = np.asarray(value, dtype=float)
        bad = ~np.isfinite(v) | (v < lo) | (v > hi) | ((v == lo) & open_lo)
        if np.any(bad):
            raise ConfigError(f"parameter {name}={value!r} outside its allowed range")
    return out


@dataclass(frozen=True)
class ModelSpec:
    """A compartmental model: population size, initial law and kernel family.

    ``kernel(t, eta, theta)`` must return an ``m x m`` row-stochastic matrix
    (or a stack of them when `eta` or entries of `theta` carry leading batch
    axes).
    """

    n: int
    pi0: np.ndarray
    kernel: Callable[..., np.ndarray]
    theta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if int(self.n) < 1:
            raise ConfigError("population size n must be >= 1")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "pi0", validate_prob_vector(self.pi0))
        if self.m < 2:
            raise ConfigError("need at least two compartments")
        object.__setattr__(self, "theta", check_params(self.theta))

    @property
    def m(self) -> int:
        return self.pi0.shape[0]

    def K(self, t: int, eta, theta: Mapping[str, Any] | None = None) -> np.ndarray:
        return self.kernel(t, np.asarray(eta, dtype=float), self.theta if theta is None else theta)

    def with_theta(self, **updates) -> "ModelSpec":
        return ModelSpec(self.n, self.pi0, self.kernel, {**self.theta, **updates})
