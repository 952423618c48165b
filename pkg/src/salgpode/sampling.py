"""Sparse variational GP state and decoupled pathwise function sampling.

A complete dynamics function is drawn as a random-Fourier-feature prior
sample plus a data-dependent update anchored at the inducing inputs
(Matheron's rule), so a single draw can be rolled out through an ODE
solver as one consistent vector field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ContractViolationError, NumericalDegeneracyError
from .kernels import RbfKernel, gram, jittered_cholesky


@dataclass
class FourierFeatureSet:
    """A finite random-feature expansion of the stationary GP prior.

    Each output dimension gets its own standard-normal weight vector over
    the shared frequencies/phases, so one feature set represents a draw of
    a full R^d -> R^dout prior function.
    """

    frequencies: np.ndarray  # (S, d)
    phases: np.ndarray       # (S,)
    weights: np.ndarray      # (S, dout)
    signal_variance: float

    @property
    def n_features(self) -> int:
        return self.frequencies.shape[0]

    def feature_matrix(self, X) -> np.ndarray:
        """Feature map amp * cos(X w^T + b) for rows of X, shape (n, S)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        amp = np.sqrt(2.0 * self.signal_variance / self.n_features)
        return amp * np.cos(X @ self.frequencies.T + self.phases)

    def __call__(self, X) -> np.ndarray:
        """Evaluate the prior sample at rows of X, shape (n, dout)."""
        return self.feature_matrix(X) @ self.weights


def sample_fourier_features(kernel: RbfKernel, S: int, rng, n_outputs: int = 1):
    """Draw a FourierFeatureSet from the RBF spectral density.

    Frequencies are Gaussian with per-dimension scale 1/l_j, phases uniform
    on [0, 2pi), weights standard normal.
    """
    if S < 1:
        raise ContractViolationError("need at least one Fourier basis")
    freqs = rng.standard_normal((S, kernel.input_dim)) / kernel.lengthscales
    phases = rng.uniform(0.0, 2.0 * np.pi, size=S)
    weights = rng.standard_normal((S, n_outputs))
    return FourierFeatureSet(freqs, phases, weights, kernel.signal_variance)


class InducingSet:
    """Inducing inputs Z with a per-output Gaussian variational posterior.

    The covariance of each output's pseudo-observations is stored as a
    lower-triangular factor A_j with Sigma_j = A_j A_j^T, which keeps
    sampling and the KL closed form cheap and allows semi-definite
    (even zero) covariances.
    """

    def __init__(self, Z, mu, cov_factors):
        self.Z = np.atleast_2d(np.asarray(Z, dtype=float))
        self.mu = np.asarray(mu, dtype=float)
        self.cov_factors = np.asarray(cov_factors, dtype=float)
        L = self.Z.shape[0]
        if L < 1:
            raise ContractViolationError("need at least one inducing input")
        if self.mu.ndim == 1:
            self.mu = self.mu[:, None]
        if self.mu.shape[0] != L:
            raise ContractViolationError("mu must have one row per inducing input")
        dout = self.mu.shape[1]
        if self.cov_factors.shape != (dout, L, L):
            raise ContractViolationError(
                f"cov_factors must have shape ({dout}, {L}, {L})"
            )
        # keep only the lower triangle; the factor convention is Sigma = A A^T
        self.cov_factors = np.tril(self.cov_factors)

    @property
    def n_inducing(self) -> int:
        return self.Z.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.mu.shape[1]

    def covariances(self) -> np.ndarray:
        """Per-output Sigma_j = A_j A_j^T, shape (dout, L, L)."""
        return np.einsum("jab,jcb->jac", self.cov_factors, self.cov_factors)

    @classmethod
    def from_covariances(cls, Z, mu, covariances):
        """Build from explicit per-output covariance matrices.

        Accepts semi-definite matrices (eigenvalues >= -1e-8 after
        symmetrization); negative eigenvalues within that slack are clipped.
        """
        covariances = np.asarray(covariances, dtype=float)
        mu = np.asarray(mu, dtype=float)
        if mu.ndim == 1:
            mu = mu[:, None]
        if covariances.ndim == 2:
            covariances = np.repeat(covariances[None], mu.shape[1], axis=0)
        factors = []
        for C in covariances:
            C = 0.5 * (C + C.T)
            try:
                factors.append(np.linalg.cholesky(C))
            except np.linalg.LinAlgError:
                vals, vecs = np.linalg.eigh(C)
                if np.min(vals) < -1e-8:
                    raise ContractViolationError(
                        f"variational covariance not PSD (min eig {np.min(vals):.3e})"
                    )
                # clip to PSD and re-factor so the stored factor is triangular
                clipped = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
                bump = max(np.trace(clipped) / C.shape[0], 1.0) * 1e-12
                factors.append(np.linalg.cholesky(clipped + bump * np.eye(C.shape[0])))
        return cls(Z, mu, np.stack(factors))


@dataclass
class SampledDynamics:
    """One pathwise function draw g(.|Z, U): prior sample + kernel update.

    Immutable after construction: evaluation is a pure function, so a draw
    can be handed to an ODE solver (or to multiple workers) and always
    describes the same vector field.
    """

    features: FourierFeatureSet
    update_weights: np.ndarray  # (L, dout)
    inducing_inputs: np.ndarray  # (L, d), shared reference
    kernel: RbfKernel

    def __call__(self, x) -> np.ndarray:
        return evaluate_dynamics(self, x)


def evaluate_dynamics(sample: SampledDynamics, x) -> np.ndarray:
    """Evaluate the sampled vector field at x ((d,) or (n, d))."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if not np.all(np.isfinite(X)):
        raise ContractViolationError("dynamics evaluated at non-finite input")
    prior = sample.features(X)
    cross = gram(sample.kernel, X, sample.inducing_inputs)
    out = prior + cross @ sample.update_weights
    return out[0] if single else out


def _draw_pseudo_outputs(inducing: InducingSet, rng) -> np.ndarray:
    """One reparameterized draw U = mu + A zeta, shape (L, dout)."""
    zeta = rng.standard_normal((inducing.n_inducing, inducing.n_outputs))
    return inducing.mu + np.einsum("jab,bj->aj", inducing.cov_factors, zeta)


def draw_function(inducing: InducingSet, kernel: RbfKernel, S: int, rng) -> SampledDynamics:
    """Draw one consistent dynamics function from the sparse posterior."""
    features = sample_fourier_features(kernel, S, rng, n_outputs=inducing.n_outputs)
    U = _draw_pseudo_outputs(inducing, rng)
    K = gram(kernel, inducing.Z)
    chol, _ = jittered_cholesky(K, kernel.signal_variance)
    resid = U - features(inducing.Z)
    half = solve_triangular(chol, resid, lower=True)
    v = solve_triangular(chol.T, half, lower=False)
    return SampledDynamics(features, v, inducing.Z, kernel)


class DynamicsEnsemble:
    """K stacked pathwise draws evaluated jointly.

    Functionally equivalent to K independent draw_function calls but keeps
    everything as (K, ...) arrays so batched rollouts (planner candidates,
    metrics grids) stay vectorized.
    """

    def __init__(self, frequencies, phases, weights, update_weights, Z, kernel):
        self.frequencies = frequencies      # (K, S, d)
        self.phases = phases                # (K, S)
        self.weights = weights              # (K, S, dout)
        self.update_weights = update_weights  # (K, L, dout)
        self.Z = Z
        self.kernel = kernel

    @property
    def n_draws(self) -> int:
        return self.frequencies.shape[0]

    @classmethod
    def draw(cls, inducing: InducingSet, kernel: RbfKernel, S: int, K: int, rng):
        if K < 1 or S < 1:
            raise ContractViolationError("need K >= 1 draws and S >= 1 bases")
        d = kernel.input_dim
        L = inducing.n_inducing
        dout = inducing.n_outputs
        freqs = rng.standard_normal((K, S, d)) / kernel.lengthscales
        phases = rng.uniform(0.0, 2.0 * np.pi, size=(K, S))
        weights = rng.standard_normal((K, S, dout))
        zeta = rng.standard_normal((K, L, dout))
        U = inducing.mu + np.einsum("jab,kbj->kaj", inducing.cov_factors, zeta)

        Kzz = gram(kernel, inducing.Z)
        chol, _ = jittered_cholesky(Kzz, kernel.signal_variance)
        amp = np.sqrt(2.0 * kernel.signal_variance / S)
        # prior evaluated at Z for every draw: (K, L, S) @ (K, S, dout)
        phi_Z = amp * np.cos(np.einsum("ld,ksd->kls", inducing.Z, freqs) + phases[:, None, :])
        resid = U - np.einsum("kls,ksj->klj", phi_Z, weights)
        flat = resid.transpose(1, 0, 2).reshape(L, K * dout)
        half = solve_triangular(chol, flat, lower=True)
        v = solve_triangular(chol.T, half, lower=False)
        v = v.reshape(L, K, dout).transpose(1, 0, 2)
        return cls(freqs, phases, weights, v, inducing.Z, kernel)

    def evaluate(self, X) -> np.ndarray:
        """Evaluate all draws at per-draw batches X (K, B, d) -> (K, B, d_out)."""
        kern = self.kernel
        S = self.frequencies.shape[1]
        amp = np.sqrt(2.0 * kern.signal_variance / S)
        phi = amp * np.cos(
            np.einsum("kbd,ksd->kbs", X, self.frequencies) + self.phases[:, None, :]
        )
        out = np.einsum("kbs,ksj->kbj", phi, self.weights)
        a = X / kern.lengthscales
        b = self.Z / kern.lengthscales
        d2 = (
            np.sum(a * a, axis=-1)[..., None]
            + np.sum(b * b, axis=1)[None, None, :]
            - 2.0 * np.einsum("kbd,ld->kbl", a, b)
        )
        cross = kern.signal_variance * np.exp(-0.5 * np.maximum(d2, 0.0))
        out += np.einsum("kbl,klj->kbj", cross, self.update_weights)
        return out

    def single(self, i: int) -> SampledDynamics:
        """View draw i as a standalone SampledDynamics."""
        feats = FourierFeatureSet(
            self.frequencies[i], self.phases[i], self.weights[i], self.kernel.signal_variance
        )
        return SampledDynamics(feats, self.update_weights[i], self.Z, self.kernel)


def kl_divergence(inducing: InducingSet, kernel: RbfKernel) -> float:
    """KL(q(U) || p(U)) summed over output dimensions.

    q is the per-output N(mu_j, Sigma_j), p the GP prior N(0, K) at the
    inducing inputs.
    """
    K = gram(kernel, inducing.Z)
    chol, _ = jittered_cholesky(K, kernel.signal_variance)
    L = inducing.n_inducing
    logdet_K = 2.0 * float(np.sum(np.log(np.diag(chol))))
    total = 0.0
    for j in range(inducing.n_outputs):
        A = inducing.cov_factors[j]
        diag = np.diag(A)
        if np.any(np.abs(diag) < 1e-154):
            raise NumericalDegeneracyError(
                "variational covariance is singular; KL is undefined"
            )
        logdet_S = 2.0 * float(np.sum(np.log(np.abs(diag))))
        half_A = solve_triangular(chol, A, lower=True)
        trace = float(np.sum(half_A * half_A))
        half_mu = solve_triangular(chol, inducing.mu[:, j], lower=True)
        maha = float(np.dot(half_mu, half_mu))
        total += 0.5 * (trace + maha - L + logdet_K - logdet_S)
    return total
