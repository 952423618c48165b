"""ELBO maximization with reparameterized Monte-Carlo gradients.

Training runs in torch (float64) so gradients flow end-to-end through a
fixed-grid RK4 rollout of the sampled dynamics; the trained parameters are
written back into the numpy-side GPODEModel. Adaptive integration stays on
the prediction/acquisition side, where no gradients are needed.
"""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass

import numpy as np
import torch

from .errors import ContractViolationError, TrainingError
from .model import DIVERGED_LOGLIK, GPODEModel

# Trajectory magnitude past which a training draw is treated as diverged
# and its likelihood replaced with the cap.
_TRAIN_BLOWUP = 1e5


@dataclass
class TrainConfig:
    iterations: int = 200
    learning_rate: float = 0.02
    k_train: int = 8
    seed: int = 0
    sigma_trainable: bool = True
    n_fourier: int = 256
    substeps: int = 2  # RK4 substeps per observation interval

    def __post_init__(self):
        if self.iterations < 1 or self.k_train < 1:
            raise ContractViolationError("iterations and k_train must be >= 1")


def _apply_thread_cap():
    cap = os.environ.get("SALGPODE_THREADS")
    if cap:
        try:
            torch.set_num_threads(max(1, int(cap)))
        except ValueError:
            pass


def _kl_term(mu, A, chol_K):
    """KL(q(U)||p(U)) summed over outputs; mu (L, dout), A (dout, L, L)."""
    L = mu.shape[0]
    logdet_K = 2.0 * torch.sum(torch.log(torch.diagonal(chol_K)))
    half_A = torch.linalg.solve_triangular(chol_K, A, upper=False)
    trace = torch.sum(half_A * half_A, dim=(1, 2))
    half_mu = torch.linalg.solve_triangular(chol_K, mu.T.unsqueeze(-1), upper=False)
    maha = torch.sum(half_mu.squeeze(-1) ** 2, dim=1)
    logdet_S = 2.0 * torch.sum(
        torch.log(torch.abs(torch.diagonal(A, dim1=1, dim2=2))), dim=1
    )
    return torch.sum(0.5 * (trace + maha - L + logdet_K - logdet_S))


class _TorchElbo:
    """Differentiable ELBO estimator mirroring model.elbo's formulas."""

    def __init__(self, model: GPODEModel, data, config: TrainConfig):
        dtype = torch.float64
        self.config = config
        self.Z = torch.as_tensor(model.inducing.Z, dtype=dtype)
        self.L, self.d = self.Z.shape
        self.dout = model.inducing.n_outputs
        self.x0_std = model.x0_std

        self.log_lengthscales = torch.tensor(
            np.log(model.kernel.lengthscales), dtype=dtype, requires_grad=True
        )
        self.log_signal_variance = torch.tensor(
            float(np.log(model.kernel.signal_variance)), dtype=dtype, requires_grad=True
        )
        self.mu = torch.tensor(model.inducing.mu, dtype=dtype, requires_grad=True)
        # unconstrained factor: strict lower triangle raw, diagonal through exp
        A0 = model.inducing.cov_factors
        diag0 = np.abs(np.einsum("jii->ji", A0.copy()))
        raw = np.tril(A0, -1) + np.stack([np.diag(np.log(np.maximum(d, 1e-10))) for d in diag0])
        self.raw_factor = torch.tensor(raw, dtype=dtype, requires_grad=True)
        self.log_sigma = torch.tensor(
            np.log(model.obs_noise), dtype=dtype, requires_grad=config.sigma_trainable
        )

        # episodes grouped by identical schedules so each group integrates once
        groups = {}
        for ep in data:
            groups.setdefault(tuple(ep.times.tolist()), []).append(ep)
        self.groups = []
        for times, eps in groups.items():
            Y = torch.as_tensor(np.stack([ep.observations for ep in eps]), dtype=dtype)
            self.groups.append((np.asarray(times), Y))
        self.n_episodes = len(data)

    def parameters(self):
        params = [self.log_lengthscales, self.log_signal_variance, self.mu, self.raw_factor]
        if self.config.sigma_trainable:
            params.append(self.log_sigma)
        return params

    def factor(self):
        strict = torch.tril(self.raw_factor, diagonal=-1)
        diag = torch.exp(torch.diagonal(self.raw_factor, dim1=1, dim2=2))
        return strict + torch.diag_embed(diag)

    def value(self, generator) -> torch.Tensor:
        cfg = self.config
        K_draws, S = cfg.k_train, cfg.n_fourier
        dtype = torch.float64
        ell = torch.exp(self.log_lengthscales)
        sf2 = torch.exp(self.log_signal_variance)
        sigma = torch.exp(self.log_sigma)
        A = self.factor()

        def randn(*shape):
            return torch.randn(*shape, generator=generator, dtype=dtype)

        # pathwise draws: Fourier prior + Matheron update, reparameterized
        omega = randn(K_draws, S, self.d) / ell
        phase = torch.rand(K_draws, 1, S, generator=generator, dtype=dtype) * (2 * np.pi)
        w = randn(K_draws, S, self.dout)
        zeta_u = randn(K_draws, self.L, self.dout)
        amp = torch.sqrt(2.0 * sf2 / S)

        Zs = self.Z / ell
        d2_zz = torch.cdist(Zs, Zs) ** 2
        Kzz = sf2 * torch.exp(-0.5 * d2_zz) + (1e-6 * sf2 + 1e-12) * torch.eye(self.L, dtype=dtype)
        chol_K = torch.linalg.cholesky(Kzz)

        U = self.mu + torch.einsum("jab,kbj->kaj", A, zeta_u)
        phi_Z = amp * torch.cos(torch.einsum("ld,ksd->kls", self.Z, omega) + phase)
        resid = U - torch.einsum("kls,ksj->klj", phi_Z, w)
        v = torch.cholesky_solve(resid, chol_K)

        z_norm2 = torch.sum(Zs * Zs, dim=1)

        def field(X):
            # X: (K, B, d) -> (K, B, dout)
            feat = amp * torch.cos(torch.einsum("kbd,ksd->kbs", X, omega) + phase)
            out = torch.einsum("kbs,ksj->kbj", feat, w)
            Xs = X / ell
            d2 = (
                torch.sum(Xs * Xs, dim=-1, keepdim=True)
                + z_norm2
                - 2.0 * torch.einsum("kbd,ld->kbl", Xs, Zs)
            )
            cross = sf2 * torch.exp(-0.5 * torch.clamp(d2, min=0.0))
            return out + torch.einsum("kbl,klj->kbj", cross, v)

        total = torch.zeros((), dtype=dtype)
        for times, Y in self.groups:
            E, N, dd = Y.shape
            x = Y[None, :, 0, :] + self.x0_std * randn(K_draws, E, dd)
            bad = torch.zeros(K_draws, E, dtype=torch.bool)
            t = 0.0
            states = []
            for t_target in times:
                h = (t_target - t) / cfg.substeps
                for _ in range(cfg.substeps):
                    k1 = field(x)
                    k2 = field(x + 0.5 * h * k1)
                    k3 = field(x + 0.5 * h * k2)
                    k4 = field(x + h * k3)
                    x_new = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                    x_new = torch.nan_to_num(
                        x_new, nan=0.0, posinf=_TRAIN_BLOWUP, neginf=-_TRAIN_BLOWUP
                    ).clamp(-_TRAIN_BLOWUP, _TRAIN_BLOWUP)
                    bad |= torch.amax(torch.abs(x_new), dim=-1) >= _TRAIN_BLOWUP
                    x = x_new
                t = t_target
                states.append(x)
            traj = torch.stack(states, dim=2)  # (K, E, N, d)
            z = (Y[None] - traj) / sigma
            const = 0.5 * N * dd * np.log(2 * np.pi) + N * torch.sum(torch.log(sigma))
            ll = -0.5 * torch.sum(z * z, dim=(-2, -1)) - const
            ll = torch.where(bad, torch.full_like(ll, DIVERGED_LOGLIK), ll)
            total = total + torch.sum(torch.mean(ll, dim=0))

        return total - _kl_term(self.mu, A, chol_K)

    def export(self, model: GPODEModel) -> GPODEModel:
        """Write trained parameters back into a copy of the numpy model."""
        from .kernels import RbfKernel
        from .sampling import InducingSet

        new = copy.deepcopy(model)
        new.kernel = RbfKernel(
            np.exp(self.log_lengthscales.detach().numpy()),
            float(np.exp(self.log_signal_variance.detach().item())),
        )
        new.inducing = InducingSet(
            model.inducing.Z.copy(),
            self.mu.detach().numpy().copy(),
            self.factor().detach().numpy().copy(),
        )
        new.obs_noise = np.exp(self.log_sigma.detach().numpy().copy())
        return new


def train(model: GPODEModel, data, config: TrainConfig):
    """Maximize the MC ELBO with Adam; returns (trained model, ELBO trace)."""
    if not data:
        raise ContractViolationError("training needs at least one episode")
    _apply_thread_cap()
    estimator = _TorchElbo(model, data, config)
    opt = torch.optim.Adam(estimator.parameters(), lr=config.learning_rate)
    generator = torch.Generator().manual_seed(int(config.seed) & 0x7FFFFFFFFFFFFFFF)
    trace = []
    for it in range(config.iterations):
        opt.zero_grad()
        value = estimator.value(generator)
        if not torch.isfinite(value):
            raise TrainingError(f"non-finite ELBO at iteration {it}", iteration=it)
        loss = -value
        loss.backward()
        opt.step()
        trace.append(float(value.detach()))
    return estimator.export(model), trace
