import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bellpost.inequalities import catalog

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SQRT2 = math.sqrt(2.0)


@pytest.fixture(scope="session")
def chsh():
    return catalog("chsh", 2)


@pytest.fixture(scope="session")
def mermin3():
    return catalog("mermin", 3)


@pytest.fixture(scope="session")
def svetlichny():
    return catalog("svetlichny", 3)


def random_table(rng, shape, n_settings_axes):
    """Random conditional table normalised over the trailing (outcome) axes."""
    t = rng.exponential(size=shape)
    axes = tuple(range(n_settings_axes, len(shape)))
    return t / t.sum(axis=axes, keepdims=True)


def brute_evaluate(f, b):
    """Explicit double loop over joint settings and outcomes."""
    total = 0.0
    for x in f.scenario.joint_settings():
        for a in f.scenario.joint_outcomes():
            total += f.coefficients[x + a] * b.table[x + a]
    return total


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
