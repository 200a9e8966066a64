import numpy as np
import pytest

from antifk import (
    NearestNeighborInteraction,
    QuadraticCoupling,
    cosine_certificate,
    cosine_potential,
)


@pytest.fixture(scope="session")
def cos_potential():
    return cosine_potential()


@pytest.fixture(scope="session")
def cos_cert():
    return cosine_certificate()


@pytest.fixture(scope="session")
def nn_interaction():
    return NearestNeighborInteraction(QuadraticCoupling())


@pytest.fixture()
def rng():
    return np.random.default_rng(20260823)
