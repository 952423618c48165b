"""Candidate scoring: Monte-Carlo entropy, covariance spread, safety probability.

All scores are pure functions of immutable sample sets; the planner reuses
one set of K trajectory draws per candidate for both the acquisition value
and the safety probability.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ContractViolationError
from .integrate import Trajectory


@dataclass
class SafetyBounds:
    """Elementwise state box; +-inf disables a side per dimension."""

    x_min: np.ndarray
    x_max: np.ndarray

    def __post_init__(self):
        self.x_min = np.atleast_1d(np.asarray(self.x_min, dtype=float))
        self.x_max = np.atleast_1d(np.asarray(self.x_max, dtype=float))
        finite = np.isfinite(self.x_min) & np.isfinite(self.x_max)
        if np.any(self.x_min[finite] >= self.x_max[finite]):
            raise ContractViolationError("x_min must be < x_max where both finite")

    def contains(self, states) -> np.ndarray:
        """Inclusive box membership reduced over the trailing (..., T, d) axes."""
        states = np.asarray(states)
        ok = (states >= self.x_min) & (states <= self.x_max)
        return np.all(ok, axis=(-2, -1))


@dataclass
class SamplingConfig:
    """How many pathwise draws to spend per candidate and how to start them."""

    K: int = 32
    include_x0_noise: bool = False
    seed: int = 0
    n_fourier: int = 1024
    substeps: int = 8

    def __post_init__(self):
        if self.K < 1:
            raise ContractViolationError("K must be >= 1")


def _as_state_array(traj_samples) -> np.ndarray:
    """Coerce a list of Trajectory or an (K, N, d) array to an array."""
    if isinstance(traj_samples, np.ndarray):
        return traj_samples
    return np.stack([
        t.states if isinstance(t, Trajectory) else np.asarray(t, dtype=float)
        for t in traj_samples
    ])


def _pairwise_loglik(obs, states, sigma, chunk=512):
    """log N(y^m | x^l, sigma^2 I) for all pairs; obs/states (K, N, d)."""
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    K, N, d = states.shape
    const = 0.5 * N * d * np.log(2.0 * np.pi) + N * np.sum(np.log(sigma))
    out = np.empty((obs.shape[0], K))
    xs = states / sigma
    ys = obs / sigma
    for start in range(0, obs.shape[0], chunk):
        diff = ys[start:start + chunk, None] - xs[None]
        out[start:start + chunk] = -0.5 * np.sum(diff * diff, axis=(-2, -1)) - const
    return out


def entropy_acquisition(traj_samples, obs_samples, sigma) -> float:
    """MC estimate of the marginal entropy of the observation sequence.

    -(1/K) sum_m log[(1/K) sum_l N(y^m | x^l, sigma^2 I)], log-sum-exp
    stabilized. Needs K >= 2 so the mixture is nondegenerate.
    """
    states = _as_state_array(traj_samples)
    obs = _as_state_array(obs_samples)
    K = states.shape[0]
    if K < 2:
        raise ContractViolationError("entropy needs at least 2 samples")
    if obs.shape != states.shape:
        raise ContractViolationError("observation and trajectory samples misaligned")
    logp = _pairwise_loglik(obs, states, sigma)
    mix = logsumexp(logp, axis=1) - np.log(K)
    return float(-np.mean(mix))


def covariance_acquisition(traj_samples, scalarization: str = "trace",
                           jitter: float = 1e-9) -> float:
    """Spread of the sampled trajectories, as a scalar.

    Flattens each draw to an N*d vector, forms the unbiased empirical
    covariance, and returns its trace (total variance) or, behind the
    switch, the jittered log-determinant.
    """
    states = _as_state_array(traj_samples)
    K = states.shape[0]
    if K < 2:
        raise ContractViolationError("covariance needs at least 2 samples")
    flat = states.reshape(K, -1)
    if scalarization == "trace":
        return float(np.sum(np.var(flat, axis=0, ddof=1)))
    if scalarization == "logdet":
        cov = np.cov(flat, rowvar=False, ddof=1)
        cov = np.atleast_2d(cov) + jitter * np.eye(flat.shape[1])
        sign, logdet = np.linalg.slogdet(cov)
        return float(logdet)
    raise ContractViolationError(f"unknown scalarization {scalarization!r}")


def safety_probability(traj_samples, bounds: SafetyBounds, diverged=None) -> float:
    """Fraction of sampled trajectories that stay inside the box everywhere.

    traj_samples should include every checked time point (callers pass the
    initial state as the first row). Diverged draws count as violations.
    """
    if not isinstance(traj_samples, np.ndarray):
        if diverged is None:
            diverged = np.array([
                bool(getattr(t, "diverged", False)) for t in traj_samples
            ])
        states = np.stack([
            t.full_states if isinstance(t, Trajectory) else np.asarray(t, dtype=float)
            for t in traj_samples
        ])
    else:
        states = traj_samples
    K = states.shape[0]
    if diverged is None:
        diverged = np.zeros(K, dtype=bool)
    with np.errstate(invalid="ignore"):
        ok = bounds.contains(np.nan_to_num(states, nan=np.inf)) & ~diverged
    return float(np.count_nonzero(ok)) / K


def conditional_entropy_constant(sigma, N: int, d: int) -> float:
    """Entropy of the observation noise: (N*d/2) log(2 pi e sigma^2).

    Candidate-independent by construction; subtracting it from the
    marginal-entropy score turns the entropy into the mutual information
    without changing any argmax.
    """
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    if sigma.shape[0] == 1:
        sigma = np.repeat(sigma, d)
    if sigma.shape[0] != d:
        raise ContractViolationError("sigma must be scalar or length d")
    return float(0.5 * N * np.sum(np.log(2.0 * np.pi * np.e * sigma ** 2)))
