import numpy as np
import pytest

from fedshield.ckks import CkksParams, keygen


@pytest.fixture(scope="session")
def tiny_params():
    """Smallest practical ring for fast unit tests."""
    return CkksParams(poly_degree=64, modulus_bits=(60, 40, 60))


@pytest.fixture(scope="session")
def small_params():
    return CkksParams(poly_degree=256, modulus_bits=(60, 40, 60))


@pytest.fixture(scope="session")
def tiny_keys(tiny_params):
    return keygen(tiny_params, seed=7)


@pytest.fixture(scope="session")
def small_keys(small_params):
    return keygen(small_params, seed=11)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
