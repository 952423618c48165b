"""RBF kernel with per-dimension lengthscales.

The kernel is the single similarity model used everywhere in the package:
Gram matrices at inducing inputs, cross-kernels for the pathwise update
term, and the spectral density that random Fourier features are drawn from.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError, NumericalDegeneracyError

# Relative diagonal jitter added to Gram matrices before factorization,
# escalated multiplicatively up to JITTER_MAX before giving up.
JITTER_INIT = 1e-6
JITTER_MAX = 1e-2


@dataclass
class RbfKernel:
    """Squared-exponential kernel k(x, x') = s2 * exp(-0.5 sum ((dx_j)/l_j)^2)."""

    lengthscales: np.ndarray
    signal_variance: float = 1.0

    def __post_init__(self):
        self.lengthscales = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        self.signal_variance = float(self.signal_variance)
        if not np.all(np.isfinite(self.lengthscales)) or np.any(self.lengthscales <= 0):
            raise ContractViolationError("lengthscales must be finite and > 0")
        if not np.isfinite(self.signal_variance) or self.signal_variance <= 0:
            raise ContractViolationError("signal_variance must be finite and > 0")

    @property
    def input_dim(self) -> int:
        return self.lengthscales.shape[0]


def kernel_eval(kernel: RbfKernel, x, x2) -> float:
    """Evaluate k(x, x2) for two single points."""
    x = np.asarray(x, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if x.shape[0] != kernel.input_dim or x2.shape[0] != kernel.input_dim:
        raise ContractViolationError(
            f"input dim mismatch: got {x.shape[0]} and {x2.shape[0]}, "
            f"kernel has {kernel.input_dim} lengthscales"
        )
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(x2))):
        raise ContractViolationError("kernel inputs must be finite")
    z = (x - x2) / kernel.lengthscales
    return kernel.signal_variance * float(np.exp(-0.5 * np.dot(z, z)))


def gram(kernel: RbfKernel, X, X2=None) -> np.ndarray:
    """Kernel matrix between rows of X (n x d) and X2 (m x d).

    With X2 omitted returns the symmetric Gram matrix gram(X, X).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    sym = X2 is None
    X2 = X if sym else np.atleast_2d(np.asarray(X2, dtype=float))
    if X.shape[1] != kernel.input_dim or X2.shape[1] != kernel.input_dim:
        raise ContractViolationError("gram: column count must equal kernel input dim")
    a = X / kernel.lengthscales
    b = X2 / kernel.lengthscales
    d2 = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * a @ b.T
    )
    K = kernel.signal_variance * np.exp(-0.5 * np.maximum(d2, 0.0))
    if sym:
        K = 0.5 * (K + K.T)
    return K


def jittered_cholesky(K: np.ndarray, scale: float):
    """Lower Cholesky factor of K + jitter*scale*I with jitter escalation.

    Returns (factor, jitter_used). Raises NumericalDegeneracyError once the
    escalation passes JITTER_MAX.
    """
    jitter = JITTER_INIT
    L = K.shape[0]
    while jitter <= JITTER_MAX:
        try:
            chol = np.linalg.cholesky(K + jitter * scale * np.eye(L))
            return chol, jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalDegeneracyError(
        f"Cholesky failed for {L}x{L} matrix even at jitter {JITTER_MAX}"
    )
