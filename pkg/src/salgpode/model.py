"""GPODE model: dataset containers, ELBO estimation, posterior rollouts.

The generative story: an unknown vector field g drawn from a sparse GP,
an initial state drawn from a Gaussian centered at the episode's first
observation, states obtained by integrating g, and observations that add
i.i.d. Gaussian noise to the states.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError, SchemaError
from .integrate import Trajectory, integrate_batch
from .kernels import RbfKernel
from .sampling import DynamicsEnsemble, InducingSet, kl_divergence

CHECKPOINT_SCHEMA_VERSION = 1

# Log-likelihood assigned to a diverged draw/episode pair so the ELBO stays
# finite for explosive samples early in optimization.
DIVERGED_LOGLIK = -1e6


@dataclass
class Episode:
    """One measured trajectory: commanded initial state, schedule, noisy obs."""

    theta: np.ndarray         # (d,) commanded initial state
    times: np.ndarray         # (N,) strictly increasing, > 0
    observations: np.ndarray  # (N, d)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.times = np.asarray(self.times, dtype=float)
        self.observations = np.atleast_2d(np.asarray(self.observations, dtype=float))
        if self.times.shape[0] < 1:
            raise ContractViolationError("episode needs at least one observation")
        if np.any(np.diff(self.times) <= 0) or self.times[0] <= 0:
            raise ContractViolationError("episode times must be strictly increasing and > 0")
        if self.observations.shape[0] != self.times.shape[0]:
            raise ContractViolationError("observation count must match schedule length")


@dataclass
class GPODEModel:
    """Sparse GP vector field plus noise model and initial-state policy."""

    kernel: RbfKernel
    inducing: InducingSet
    obs_noise: np.ndarray  # (dout,) per-output observation noise std
    x0_std: float = 0.1    # std of the Gaussian x0 policy around the first obs
    seed: int = 0

    def __post_init__(self):
        self.obs_noise = np.atleast_1d(np.asarray(self.obs_noise, dtype=float))
        if np.any(self.obs_noise <= 0):
            raise ContractViolationError("observation noise must be > 0")
        if self.x0_std <= 0:
            raise ContractViolationError("x0 policy std must be > 0")

    @property
    def state_dim(self) -> int:
        return self.kernel.input_dim


def gaussian_loglik(y, x, sigma) -> np.ndarray:
    """Diagonal-Gaussian log density of y (N, d) under means x (..., N, d).

    sigma is the per-output std (d,). Returns an array over the leading
    batch dimensions of x.
    """
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    N = y.shape[-2]
    z = (y - x) / sigma
    const = 0.5 * N * sigma.shape[0] * np.log(2.0 * np.pi) + N * np.sum(np.log(sigma))
    return -0.5 * np.sum(z * z, axis=(-2, -1)) - const


def _group_by_schedule(data):
    """Group episode indices by identical time schedules."""
    groups = {}
    for i, ep in enumerate(data):
        groups.setdefault(tuple(ep.times.tolist()), []).append(i)
    return groups


def elbo(model: GPODEModel, data, k_train: int, rng, substeps: int = 4,
         n_fourier: int = 256) -> float:
    """Monte-Carlo ELBO estimate over k_train joint draws of (g, x0).

    Each draw integrates one consistent pathwise sample of the vector
    field through every episode from a reparameterized x0 draw; diverged
    rollouts contribute the DIVERGED_LOGLIK cap instead of -inf.
    """
    if k_train < 1:
        raise ContractViolationError("k_train must be >= 1")
    kl = kl_divergence(model.inducing, model.kernel)
    if not data:
        return -kl
    ensemble = DynamicsEnsemble.draw(model.inducing, model.kernel, n_fourier, k_train, rng)
    total = 0.0
    for times_key, idx in _group_by_schedule(data).items():
        eps = [data[i] for i in idx]
        times = np.asarray(times_key)
        y1 = np.stack([ep.observations[0] for ep in eps])  # (E, d)
        x0 = y1[None] + model.x0_std * rng.standard_normal((k_train,) + y1.shape)
        states, div = integrate_batch(ensemble.evaluate, x0, times, substeps=substeps)
        Y = np.stack([ep.observations for ep in eps])       # (E, N, d)
        ll = gaussian_loglik(Y[None], states, model.obs_noise)  # (K, E)
        ll = np.where(div, DIVERGED_LOGLIK, ll)
        total += float(np.sum(np.mean(ll, axis=0)))
    return total - kl


def predict_states_batch(model: GPODEModel, X0, times, K: int, rng,
                         x0_noise: bool = False, n_fourier: int = 1024,
                         substeps: int = 8):
    """Roll out K posterior dynamics draws from a batch of initial states.

    Returns (x0_used (K, B, d), states (K, B, N, d), diverged (K, B)).
    """
    if K < 1:
        raise ContractViolationError("need K >= 1 draws")
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    ensemble = DynamicsEnsemble.draw(model.inducing, model.kernel, n_fourier, K, rng)
    starts = np.broadcast_to(X0[None], (K,) + X0.shape).copy()
    if x0_noise:
        starts += model.x0_std * rng.standard_normal(starts.shape)
    states, div = integrate_batch(ensemble.evaluate, starts, times, substeps=substeps)
    return starts, states, div


def predict_trajectories(model: GPODEModel, x0, times, K: int, rng,
                         x0_noise: bool = False, n_fourier: int = 1024,
                         substeps: int = 8):
    """Draw K consistent posterior trajectories from one initial state."""
    starts, states, div = predict_states_batch(
        model, np.asarray(x0, dtype=float)[None], times, K, rng,
        x0_noise=x0_noise, n_fourier=n_fourier, substeps=substeps,
    )
    times = np.asarray(times, dtype=float)
    return [
        Trajectory(times, states[k, 0], starts[k, 0], diverged=bool(div[k, 0]))
        for k in range(K)
    ]


def sample_observations(trajectories, sigma, rng):
    """Add i.i.d. Gaussian observation noise to each trajectory's states."""
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    return [
        traj.states + sigma * rng.standard_normal(traj.states.shape)
        for traj in trajectories
    ]


# --- checkpointing -----------------------------------------------------------

def model_to_dict(model: GPODEModel) -> dict:
    return {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "kernel": {
            "lengthscales": model.kernel.lengthscales.tolist(),
            "signal_variance": model.kernel.signal_variance,
        },
        "inducing": {
            "Z": model.inducing.Z.tolist(),
            "mu": model.inducing.mu.tolist(),
            "cov_factors": model.inducing.cov_factors.tolist(),
        },
        "obs_noise": model.obs_noise.tolist(),
        "x0_std": model.x0_std,
        "seed": model.seed,
    }


def model_from_dict(doc: dict) -> GPODEModel:
    try:
        version = doc["schema_version"]
        if version != CHECKPOINT_SCHEMA_VERSION:
            raise SchemaError(
                f"checkpoint schema_version {version} != {CHECKPOINT_SCHEMA_VERSION}"
            )
        kernel = RbfKernel(
            np.asarray(doc["kernel"]["lengthscales"]),
            doc["kernel"]["signal_variance"],
        )
        inducing = InducingSet(
            np.asarray(doc["inducing"]["Z"]),
            np.asarray(doc["inducing"]["mu"]),
            np.asarray(doc["inducing"]["cov_factors"]),
        )
        return GPODEModel(
            kernel, inducing,
            np.asarray(doc["obs_noise"]),
            float(doc["x0_std"]),
            int(doc["seed"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed model checkpoint: {exc}") from exc


def save_model(model: GPODEModel, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path) -> GPODEModel:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"checkpoint is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("checkpoint must be a JSON object")
    return model_from_dict(doc)
