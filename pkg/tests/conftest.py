import numpy as np
import pytest

from smolin_qss.qsim import DensityMatrix


def random_density(labels, rng) -> DensityMatrix:
    """Full-rank random state: G·G† / Tr with complex Gaussian G."""
    d = 2 ** len(labels)
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = g @ g.conj().T
    return DensityMatrix(rho / np.trace(rho), tuple(labels))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def make_density(rng):
    return lambda labels: random_density(labels, rng)
