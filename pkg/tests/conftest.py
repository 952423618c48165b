import numpy as np
import pytest

from salgpode.kernels import RbfKernel, gram
from salgpode.sampling import InducingSet


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def kernel2d():
    return RbfKernel(np.array([1.0, 1.5]), 2.0)


def make_inducing(kernel, Z, mu=None, cov="prior"):
    """Inducing set with Sigma_u = K ('prior'), zero, or a given array."""
    Z = np.atleast_2d(Z)
    d_out = kernel.input_dim
    if mu is None:
        mu = np.zeros((Z.shape[0], d_out))
    if isinstance(cov, str) and cov == "prior":
        # include the KL's prior jitter so Sigma_u = K means KL = 0 exactly
        K = gram(kernel, Z) + 1e-6 * kernel.signal_variance * np.eye(Z.shape[0])
        return InducingSet.from_covariances(Z, mu, np.repeat(K[None], d_out, axis=0))
    if isinstance(cov, str) and cov == "zero":
        L = Z.shape[0]
        return InducingSet(Z, mu, np.zeros((d_out, L, L)))
    return InducingSet.from_covariances(Z, mu, cov)


@pytest.fixture
def inducing2d(kernel2d, rng):
    Z = rng.uniform(-2, 2, size=(8, 2))
    return make_inducing(kernel2d, Z)
