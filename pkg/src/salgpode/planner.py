"""Constrained acquisition maximization over candidate initial states.

Safety-filtered random search: sample candidates uniformly from the search
box, score all of them against one shared set of K pathwise dynamics
draws, discard the ones whose estimated safety probability falls below the
threshold, and return the feasible argmax (optionally polished by a local
coordinate hill-climb that only accepts feasible improvements).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .acquisition import (
    SafetyBounds,
    SamplingConfig,
    covariance_acquisition,
    entropy_acquisition,
    safety_probability,
)
from .errors import ContractViolationError, NoFeasibleCandidateError
from .integrate import integrate_batch
from .model import GPODEModel
from .sampling import DynamicsEnsemble

LOCAL_REFINE_STEPS = 20
LOCAL_REFINE_FRACTION = 0.05  # perturbation step as a fraction of box width


@dataclass
class Box:
    """Axis-aligned candidate search domain."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if np.any(self.lo >= self.hi):
            raise ContractViolationError("domain box must have lo < hi")

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def sample(self, rng, n: int) -> np.ndarray:
        return self.lo + self.width * rng.uniform(size=(n, self.dim))

    def clip(self, x) -> np.ndarray:
        return np.clip(x, self.lo, self.hi)


@dataclass
class PlannerConfig:
    domain: Box
    safety: SafetyBounds
    delta: float = 0.9
    n_candidates: int = 30
    strategy: str = "random-search"  # or "refine-local"
    sampling: SamplingConfig = field(default_factory=SamplingConfig)

    def __post_init__(self):
        if not (0.0 <= self.delta < 1.0):
            raise ContractViolationError("delta must be in [0, 1)")
        if self.n_candidates < 1:
            raise ContractViolationError("need at least one candidate")
        if self.strategy not in ("random-search", "refine-local"):
            raise ContractViolationError(f"unknown strategy {self.strategy!r}")


@dataclass
class PlanResult:
    theta: np.ndarray
    acquisition: float
    xi: float
    evaluated_candidates: list  # [(theta, alpha, xi), ...] in evaluation order


class _CandidateScorer:
    """Scores candidate batches against one shared dynamics-draw ensemble."""

    def __init__(self, model, times, config: PlannerConfig, acquisition, draw_rng, noise_rng):
        sc = config.sampling
        self.model = model
        self.times = np.asarray(times, dtype=float)
        self.config = config
        self.acquisition = acquisition
        self.noise_rng = noise_rng
        self.ensemble = DynamicsEnsemble.draw(
            model.inducing, model.kernel, sc.n_fourier, sc.K, draw_rng
        )
        self.x0_rng = draw_rng

    def score(self, candidates):
        """Return (alpha (n,), xi (n,)) for candidate rows."""
        sc = self.config.sampling
        n = candidates.shape[0]
        starts = np.broadcast_to(candidates[None], (sc.K,) + candidates.shape).copy()
        if sc.include_x0_noise:
            # drawn candidate-major so candidate i's draws do not depend on n
            starts += self.model.x0_std * self.x0_rng.standard_normal(
                (n, sc.K, candidates.shape[1])
            ).transpose(1, 0, 2)
        states, div = integrate_batch(
            self.ensemble.evaluate, starts, self.times, substeps=sc.substeps
        )
        # checked grid = x0 plus the measurement times
        full = np.concatenate([starts[:, :, None, :], states], axis=2)
        alphas = np.full(n, -np.inf)
        xis = np.empty(n)
        noise = self.noise_rng.standard_normal((n, sc.K) + states.shape[2:])
        for i in range(n):
            xis[i] = safety_probability(full[:, i], self.config.safety, diverged=div[:, i])
            keep = ~div[:, i]
            if np.count_nonzero(keep) < 2:
                continue
            xs = states[keep, i]
            if self.acquisition == "entropy":
                ys = xs + self.model.obs_noise * noise[i][keep]
                alphas[i] = entropy_acquisition(xs, ys, self.model.obs_noise)
            else:
                alphas[i] = covariance_acquisition(xs)
        return alphas, xis


def propose(model: GPODEModel, times, config: PlannerConfig,
            acquisition: str = "entropy", rng=None) -> PlanResult:
    """Solve argmax_theta alpha(theta) s.t. xi(theta) >= delta by random search."""
    if acquisition not in ("entropy", "covariance"):
        raise ContractViolationError(f"unknown acquisition {acquisition!r}")
    if rng is None:
        rng = np.random.default_rng(config.sampling.seed)
    cand_rng, draw_rng, noise_rng, refine_rng = rng.spawn(4)

    candidates = config.domain.sample(cand_rng, config.n_candidates)
    scorer = _CandidateScorer(model, times, config, acquisition, draw_rng, noise_rng)
    alphas, xis = scorer.score(candidates)
    evaluated = [
        (candidates[i].copy(), float(alphas[i]), float(xis[i]))
        for i in range(config.n_candidates)
    ]

    feasible = xis >= config.delta
    if not np.any(feasible):
        i_best = int(np.argmax(xis))
        raise NoFeasibleCandidateError(
            f"no candidate reached xi >= {config.delta}",
            best_candidate=candidates[i_best].copy(),
            best_xi=float(xis[i_best]),
        )
    masked = np.where(feasible, alphas, -np.inf)
    i_star = int(np.argmax(masked))
    best = candidates[i_star].copy()
    best_alpha, best_xi = float(alphas[i_star]), float(xis[i_star])

    if config.strategy == "refine-local":
        step = LOCAL_REFINE_FRACTION * config.domain.width
        d = config.domain.dim
        for k in range(LOCAL_REFINE_STEPS):
            direction = np.zeros(d)
            direction[k % d] = step[k % d] * (1.0 if refine_rng.uniform() < 0.5 else -1.0)
            trial = config.domain.clip(best + direction)[None]
            a, x = scorer.score(trial)
            evaluated.append((trial[0].copy(), float(a[0]), float(x[0])))
            if x[0] >= config.delta and a[0] > best_alpha:
                best, best_alpha, best_xi = trial[0].copy(), float(a[0]), float(x[0])

    return PlanResult(best, best_alpha, best_xi, evaluated)


def random_baseline_propose(domain: Box, rng) -> np.ndarray:
    """Non-active baseline: one uniform draw from the box, no filtering."""
    return domain.sample(rng, 1)[0]


def safe_random_propose(model: GPODEModel, times, config: PlannerConfig, rng):
    """Ablation variant: uniform draw, rejected until the safety estimate passes."""
    cand_rng, draw_rng, noise_rng, _ = rng.spawn(4)
    candidates = config.domain.sample(cand_rng, config.n_candidates)
    scorer = _CandidateScorer(model, times, config, "covariance", draw_rng, noise_rng)
    _, xis = scorer.score(candidates)
    feasible = np.nonzero(xis >= config.delta)[0]
    if feasible.size == 0:
        i_best = int(np.argmax(xis))
        raise NoFeasibleCandidateError(
            f"no candidate reached xi >= {config.delta}",
            best_candidate=candidates[i_best].copy(),
            best_xi=float(xis[i_best]),
        )
    i = int(feasible[0])
    return PlanResult(candidates[i].copy(), float("nan"), float(xis[i]),
                      [(candidates[j].copy(), float("nan"), float(xis[j]))
                       for j in range(candidates.shape[0])])
