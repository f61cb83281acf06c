"""Builtin kernel families: discrete-time SEIR, the Ebola intervention model
and the two-branch (Wuhan / traveller) COVID-19 model.

All kernels are vectorized: `eta` may carry leading batch axes and any
numeric entry of `theta` may be an array broadcasting against them. This is
what lets the particle filter evaluate one kernel per particle in a single
call.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Mapping

import numpy as np

from .core import ConfigError, ModelSpec

SEIR_COMPARTMENTS = ("S", "E", "I", "R")

COVID_COMPARTMENTS = ("S", "E1W", "E2W", "I1W", "I2W", "E1T", "E2T", "I1T", "I2T", "R")
S, E1W, E2W, I1W, I2W, E1T, E2T, I1T, I2T, R = range(10)

#: Transition observed as "new symptomatic cases" in each branch.
COVID_ONSET_WUHAN = (E2W, I1W)
COVID_ONSET_TRAVEL = (E2T, I1T)


def _at(value, t):
    return value(t) if callable(value) else value


def _batch_shape(eta, *params):
    return np.broadcast_shapes(np.shape(eta)[:-1], *(np.shape(p) for p in params))


def _move(rate, h):
    """Per-step probability of leaving a compartment with the given hazard."""
    return -np.expm1(-h * np.asarray(rate, dtype=float))


def _seir_matrix(beta, rho, gamma, h, eta):
    eta = np.asarray(eta, dtype=float)
    shape = _batch_shape(eta, beta, rho, gamma, h)
    p_inf = np.broadcast_to(_move(np.asarray(beta) * eta[..., 2], h), shape)
    p_c = np.broadcast_to(_move(rho, h), shape)
    p_r = np.broadcast_to(_move(gamma, h), shape)
    K = np.zeros(shape + (4, 4))
    K[..., 0, 0] = 1.0 - p_inf
    K[..., 0, 1] = p_inf
    K[..., 1, 1] = 1.0 - p_c
    K[..., 1, 2] = p_c
    K[..., 2, 2] = 1.0 - p_r
    K[..., 2, 3] = p_r
    K[..., 3, 3] = 1.0
    return K


def seir_kernel(t: int, eta, theta: Mapping[str, Any]) -> np.ndarray:
    """SEIR kernel; only the infective proportion ``eta[2]`` enters."""
    return _seir_matrix(_at(theta["beta"], t), theta["rho"], theta["gamma"],
                        theta.get("h", 1.0), eta)


def ebola_beta(t: int, theta: Mapping[str, Any]):
    """Transmission rate, constant before ``t_star`` then decaying at rate lambda."""
    beta = np.asarray(theta["beta"], dtype=float)
    t_star = theta["t_star"]
    if t < t_star:
        return beta
    return beta * np.exp(-np.asarray(theta["lambda"], dtype=float) * (t - t_star))


def ebola_kernel(t: int, eta, theta: Mapping[str, Any]) -> np.ndarray:
    return _seir_matrix(ebola_beta(t, theta), theta["rho"], theta["gamma"],
                        theta.get("h", 1.0), eta)


def covid_departure(t: int, theta: Mapping[str, Any]):
    """Departure fraction ``f_t``; zero from ``t_restrict`` onwards when given."""
    f = _at(theta.get("f", 0.0), t)
    t_restrict = theta.get("t_restrict")
    if t_restrict is not None and t >= t_restrict:
        return np.zeros_like(np.asarray(f, dtype=float))
    return f


def covid_kernel(t: int, eta, theta: Mapping[str, Any]) -> np.ndarray:
    """Ten-compartment COVID-19 kernel.

    Compartments are ordered as :data:`COVID_COMPARTMENTS`. Newly exposed
    susceptibles either stay in Wuhan or depart (fraction ``f_t``); both
    branches pass through two exposed and two infective stages before
    removal. Transmission is driven by the Wuhan infectives only.
    """
    eta = np.asarray(eta, dtype=float)
    beta = _at(theta["beta"], t)
    f = np.asarray(covid_departure(t, theta), dtype=float)
    h = theta.get("h", 1.0)
    shape = _batch_shape(eta, beta, f, theta["rho"], theta["gamma"], h)
    p = np.broadcast_to(_move(np.asarray(beta) * (eta[..., I1W] + eta[..., I2W]), h), shape)
    f = np.broadcast_to(f, shape)
    p_c = np.broadcast_to(_move(2.0 * np.asarray(theta["rho"], dtype=float), h), shape)
    p_r = np.broadcast_to(_move(2.0 * np.asarray(theta["gamma"], dtype=float), h), shape)

    K = np.zeros(shape + (10, 10))
    K[..., S, S] = 1.0 - p
    K[..., S, E1W] = (1.0 - f) * p
    K[..., S, E1T] = f * p
    for a, b, prob in ((E1W, E2W, p_c), (E2W, I1W, p_c), (I1W, I2W, p_r), (I2W, R, p_r),
                       (E1T, E2T, p_c), (E2T, I1T, p_c), (I1T, I2T, p_r), (I2T, R, p_r)):
        K[..., a, a] = 1.0 - prob
        K[..., a, b] = prob
    K[..., R, R] = 1.0
    return K


@dataclass(frozen=True)
class KernelSpec:
    """Named kernel family: ``fn(t, eta, theta) -> K`` plus its parameter names."""

    family: str
    fn: Callable[..., np.ndarray]
    m: int | None
    params: tuple[str, ...] = ()

    def __call__(self, t, eta, theta):
        return self.fn(t, eta, theta)


KERNELS: dict[str, KernelSpec] = {
    "seir": KernelSpec("seir", seir_kernel, 4, ("beta", "rho", "gamma", "h")),
    "ebola": KernelSpec("ebola", ebola_kernel, 4, ("beta", "lambda", "rho", "gamma", "h", "t_star")),
    "covid": KernelSpec("covid", covid_kernel, 10, ("beta", "rho", "gamma", "h", "f")),
}


def get_kernel(family: str) -> KernelSpec:
    try:
        return KERNELS[family]
    except KeyError:
        raise ConfigError(f"unknown model family {family!r}; choose from {sorted(KERNELS)}") from None


def custom_kernel(fn: Callable[..., np.ndarray], name: str = "custom") -> KernelSpec:
    return KernelSpec(name, fn, None)


def make_spec(family: str, n: int, pi0, theta: Mapping[str, Any]) -> ModelSpec:
    """Build a :class:`ModelSpec` for a named family, checking required parameters."""
    ks = get_kernel(family)
    missing = [p for p in ks.params if p not in theta and p not in ("h", "f")]
    if missing:
        raise ConfigError(f"{family} model missing parameters: {missing}")
    pi0 = np.asarray(pi0, dtype=float)
    if ks.m is not None and pi0.shape != (ks.m,):
        raise ConfigError(f"{family} model needs pi0 of length {ks.m}, got {pi0.shape}")
    return ModelSpec(n, pi0, ks, theta)


def seeded_pi0(m: int, n: int, seed_compartment: int = 1, seeds: float = 1.0) -> np.ndarray:
    """Initial law with `seeds` expected individuals in one compartment, rest susceptible."""
    pi0 = np.zeros(m)
    pi0[seed_compartment] = seeds / n
    pi0[0] = 1.0 - seeds / n
    return pi0
