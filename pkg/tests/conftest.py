import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("qll", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("qll")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_matrix(rng, dim, hermitian=False):
    M = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return 0.5 * (M + M.conj().T) if hermitian else M
