import json
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from adaptdyn.model import (
    GaussianExample,
    ModelSpec,
    TraitSpace,
    conditioned_gaussian_kernel,
)

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

HERE = os.path.dirname(__file__)


@pytest.fixture(scope="session")
def frozen():
    with open(os.path.join(HERE, "oracles", "frozen_values.json")) as fh:
        return json.load(fh)


def gaussian(sigma_alpha=0.7, sigma=1.0, p=1.0, K=1000, u_K=1.0, epsilon=1.0):
    return GaussianExample(0.9, sigma_alpha, sigma, p=p).to_model(K=K, u_K=u_K, epsilon=epsilon)


@pytest.fixture
def g07():
    return gaussian(0.7)


@pytest.fixture
def g10():
    return gaussian(1.0)


def custom_model(birth, competition, sigma=0.1, p=1.0, death=None) -> ModelSpec:
    space = TraitSpace.interval(-2.0, 2.0)
    return ModelSpec(
        space=space,
        birth=birth,
        death=death or (lambda x: np.zeros_like(np.asarray(x, dtype=float))),
        competition=competition,
        mut_prob=lambda x: np.full_like(np.asarray(x, dtype=float), p),
        mut_kernel=conditioned_gaussian_kernel(space, sigma),
    )


def repulsive_model(sigma=0.1):
    """Birth rate with a minimum at 0 so that a > c there."""
    return custom_model(lambda x: 1.0 + 0.5 * np.asarray(x, dtype=float) ** 2,
                        lambda x, y: np.exp(-(np.asarray(x) - np.asarray(y)) ** 2 / 2.0), sigma)


def no_coexistence_model(sigma=0.1):
    """Competition increasing with trait distance so that a + c < 0 at 0."""
    return custom_model(lambda x: np.exp(-np.asarray(x, dtype=float) ** 2 / (2 * 0.81)),
                        lambda x, y: np.exp((np.asarray(x) - np.asarray(y)) ** 2 / 8.0), sigma)


ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(n, passed, detail)``."""

    def record(n, passed, detail):
        ACCEPTANCE[n] = (bool(passed), detail)
        print(f"CRITERION {n}: {'PASS' if passed else 'FAIL'} - {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"CRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")
