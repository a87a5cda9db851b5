"""Shared fixtures: the shipped model set and cached Riccati solutions.

Solving is deterministic, so session-scoped caches are safe and keep the
suite fast.
"""

import math

import numpy as np
import pytest

from riccati_lab import are, dre, models


@pytest.fixture(scope="session")
def shipped():
    return models.shipped_models(1.0)


@pytest.fixture(scope="session")
def shipped_inf():
    return models.shipped_models(math.inf)


@pytest.fixture(scope="session")
def dre_2000(shipped):
    return {name: dre.solve_dre(m, 2000, "rk4") for name, m in shipped.items()}


@pytest.fixture(scope="session")
def dre_4000(shipped):
    return {name: dre.solve_dre(m, 4000, "rk4") for name, m in shipped.items()}


@pytest.fixture(scope="session")
def dre_im_2000(shipped):
    return {name: dre.solve_dre(m, 2000, "implicit-midpoint")
            for name, m in shipped.items()}


@pytest.fixture(scope="session")
def are_newton(shipped_inf):
    return {name: are.solve_are_newton(m) for name, m in shipped_inf.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(np.random.SeedSequence(20240817))
