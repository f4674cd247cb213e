import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_simplex(rng, k):
    return rng.dirichlet(np.ones(k))
