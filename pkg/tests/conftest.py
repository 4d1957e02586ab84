import numpy as np
import pytest

from opshift.core import HermitianOperator
from opshift.generate import haar_unitary


def random_hermitian(rng, n, lo=-3.0, hi=3.0, cluster_tol=None) -> HermitianOperator:
    """Random Hermitian matrix with spectrum drawn uniformly from [lo, hi]."""
    spectrum = np.sort(rng.uniform(lo, hi, size=n))
    return HermitianOperator.from_spectrum(spectrum, haar_unitary(rng, n), cluster_tol=cluster_tol)


def random_complex(rng, rows, cols, scale=1.0):
    return scale * (rng.normal(size=(rows, cols)) + 1j * rng.normal(size=(rows, cols)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
