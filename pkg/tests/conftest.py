"""Shared fixtures: seeded generator, builtin bundles, raw plan factory."""

import math

import pytest

from nonmono import builtin
from nonmono.rules import StepsizePlan
from nonmono.semimono import rng_from_env


@pytest.fixture
def rng():
    """Fresh seeded generator per test (NONMONO_SEED overrides the default)."""
    return rng_from_env()


@pytest.fixture(scope="module")
def saddle():
    return builtin("saddle")


@pytest.fixture(scope="module")
def singvals():
    return builtin("singvals")


@pytest.fixture(scope="module")
def qp_indef():
    return builtin("qp-indef")


@pytest.fixture(scope="module")
def qp_rankdef():
    return builtin("qp-rankdef")


@pytest.fixture(scope="session")
def raw_plan():
    """Factory for unvalidated plans, used to drive the solver at any
    (gamma, tau, lambda) including deliberately unstable relaxations."""

    def make(gamma: float, tau: float, lam: float, normL: float) -> StepsizePlan:
        s = gamma * tau * normL ** 2
        mode = "semidefinite" if abs(s - 1.0) <= 1e-12 else "definite"
        return StepsizePlan(
            gamma=gamma, tau=tau, lam=lam, delta=1.0,
            gamma_min=0.0, gamma_max=math.inf,
            gamma_lo=0.0, gamma_hi=math.inf,
            tau_lo=0.0, tau_hi=1.0 / (gamma * normL ** 2),
            eta=0.5 * lam, eta_prime=math.inf, eta_bar=0.5 * lam,
            mode=mode, source="test",
        )

    return make
