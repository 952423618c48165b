"""The full measure-train-plan loop, metrics, and persistence.

One run = one (seed, method) pair: seed the dataset with the system's
designated initial episode, then alternate training, metrics recording,
planning and measuring for M rounds. All randomness is derived from the
run seed and the round index, so an interrupted run resumed from its state
file reproduces the uninterrupted results exactly.
"""

from __future__ import annotations

import copy
import csv
import json
import math
import os
import time
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.stats import qmc

from .acquisition import SamplingConfig, safety_probability
from .errors import (
    ConfigError,
    MeasurementFailureError,
    NoFeasibleCandidateError,
    SchemaError,
)
from .kernels import RbfKernel, gram
from .model import (
    Episode,
    GPODEModel,
    gaussian_loglik,
    model_from_dict,
    model_to_dict,
    predict_states_batch,
)
from .planner import PlannerConfig, propose, random_baseline_propose
from .sampling import InducingSet, jittered_cholesky
from .systems import SystemSpec, get_system, is_truly_safe, measure
from .training import TrainConfig, train

STATE_SCHEMA_VERSION = 1
METRICS_HEADER = "seed,budget,method,acquisition,nll,f1,theta_0,theta_1,xi_est,truly_safe,seconds"

# role tags for deriving independent per-round RNG streams from the run seed
_TAG_MEASURE, _TAG_PLAN, _TAG_VALIDATION, _TAG_METRICS, _TAG_TRAIN, _TAG_INIT = range(1, 7)


def _rng(seed: int, *tags) -> np.random.Generator:
    return np.random.default_rng([int(seed), *map(int, tags)])


def _derived_seed(seed: int, *tags) -> int:
    return int(np.random.SeedSequence([int(seed), *map(int, tags)]).generate_state(1)[0])


# --- configuration -----------------------------------------------------------

@dataclass
class PlannerSection:
    delta: float = 0.9
    n_candidates: int = 30
    strategy: str = "random-search"
    k_planning: int = 32
    n_fourier: int = 1024
    substeps: int = 8
    include_x0_noise: bool = False


@dataclass
class TrainSection:
    iterations: int = 200
    warm_iterations: int = 100
    learning_rate: float = 0.02
    k_train: int = 8
    n_fourier: int = 256
    substeps: int = 2
    sigma_trainable: bool = True


@dataclass
class ModelSection:
    n_inducing: int = 20
    lengthscale_fraction: float = 0.25  # initial lengthscale as fraction of box width
    init_signal_variance: float = 1.0
    x0_std: float = 0.1


@dataclass
class MetricsSection:
    k_metrics: int = 64
    n_fourier: int = 1024
    substeps: int = 8
    f1_grid: int = 15
    validation_grid: int = 5
    n_validation: int = 20


@dataclass
class ExperimentConfig:
    system: str = "vdp"
    m_measurements: int = 8
    seeds: list = field(default_factory=lambda: [0])
    acquisition: str = "entropy"
    output_dir: str = "results"
    planner: PlannerSection = field(default_factory=PlannerSection)
    train: TrainSection = field(default_factory=TrainSection)
    model: ModelSection = field(default_factory=ModelSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)
    system_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.m_measurements < 1:
            raise ConfigError("m_measurements must be >= 1")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if self.acquisition not in ("entropy", "covariance"):
            raise ConfigError(f"unknown acquisition {self.acquisition!r}")


_SECTIONS = {"planner": PlannerSection, "train": TrainSection,
             "model": ModelSection, "metrics": MetricsSection}


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Build a config from a plain dict, rejecting unknown keys."""
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    top_fields = {f.name for f in fields(ExperimentConfig)}
    unknown = set(doc) - top_fields
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in doc.items():
        if key in _SECTIONS:
            cls = _SECTIONS[key]
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be a mapping")
            allowed = {f.name for f in fields(cls)}
            bad = set(value) - allowed
            if bad:
                raise ConfigError(f"unknown keys in section {key!r}: {sorted(bad)}")
            kwargs[key] = cls(**value)
        else:
            kwargs[key] = value
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    import yaml

    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    return config_from_dict(doc or {})


# --- metrics records ---------------------------------------------------------

@dataclass
class MetricsRecord:
    seed: int
    budget: int
    method: str
    acquisition: str
    nll: float
    f1: float
    theta: np.ndarray | None
    xi_est: float | None
    truly_safe: bool | None
    seconds: float

    def to_row(self):
        theta = [np.nan, np.nan] if self.theta is None else list(self.theta)
        return [
            str(self.seed), str(self.budget), self.method, self.acquisition,
            repr(float(self.nll)), repr(float(self.f1)),
            "" if math.isnan(theta[0]) else repr(float(theta[0])),
            "" if math.isnan(theta[1]) else repr(float(theta[1])),
            "" if self.xi_est is None or math.isnan(self.xi_est) else repr(float(self.xi_est)),
            "" if self.truly_safe is None else str(bool(self.truly_safe)),
            repr(float(self.seconds)),
        ]


def save_metrics(records, path):
    tmp = str(path) + ".tmp"
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER.split(","))
        for rec in records:
            writer.writerow(rec.to_row())
    os.replace(tmp, path)


def load_metrics_rows(path):
    """Read a metrics CSV into a list of dicts keyed by the schema header."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or ",".join(header) != METRICS_HEADER:
            raise SchemaError(f"{path}: metrics header does not match schema")
        return [dict(zip(header, row)) for row in reader]


# --- model construction ------------------------------------------------------

def build_initial_model(system: SystemSpec, config: ExperimentConfig, seed: int) -> GPODEModel:
    """Fresh model: Latin-hypercube inducing inputs over the safety box,
    q(U) initialized at the prior (mu = 0, Sigma = K) so the initial KL is 0."""
    lo = np.where(np.isfinite(system.safety.x_min), system.safety.x_min, system.candidate_box.lo)
    hi = np.where(np.isfinite(system.safety.x_max), system.safety.x_max, system.candidate_box.hi)
    d = lo.shape[0]
    mc = config.model
    sampler = qmc.LatinHypercube(d=d, seed=_derived_seed(seed, _TAG_INIT))
    Z = lo + (hi - lo) * sampler.random(mc.n_inducing)
    kernel = RbfKernel(mc.lengthscale_fraction * (hi - lo), mc.init_signal_variance)
    chol, _ = jittered_cholesky(gram(kernel, Z), kernel.signal_variance)
    factors = np.repeat(chol[None], d, axis=0)
    inducing = InducingSet(Z, np.zeros((mc.n_inducing, d)), factors)
    return GPODEModel(kernel, inducing, np.full(d, system.obs_noise),
                      x0_std=mc.x0_std, seed=seed)


# --- evaluation metrics ------------------------------------------------------

NLL_CAP = 1e6  # applied per episode before per-entry normalization


def validation_nll(model: GPODEModel, validation_episodes, K: int, rng,
                   n_fourier: int = 1024, substeps: int = 8, predict_fn=None) -> float:
    """Per-entry-normalized mixture NLL of held-out episodes.

    For each episode, K posterior trajectory draws started at the true
    initial state form a Gaussian mixture over the observation sequence;
    diverged draws are dropped from the mixture, and an episode where every
    draw diverges contributes the cap.
    """
    if not validation_episodes:
        raise ConfigError("validation set is empty")
    times = validation_episodes[0].times
    X0 = np.stack([ep.theta for ep in validation_episodes])
    if predict_fn is not None:
        states, div = predict_fn(X0, times, K, rng)
    else:
        _, states, div = predict_states_batch(
            model, X0, times, K, rng, n_fourier=n_fourier, substeps=substeps
        )
    total = 0.0
    for e, ep in enumerate(validation_episodes):
        n_entries = ep.observations.size
        keep = ~div[:, e]
        if not np.any(keep):
            total += NLL_CAP / n_entries
            continue
        ll = gaussian_loglik(ep.observations, states[keep, e], model.obs_noise)
        m = np.max(ll)
        logmix = m + np.log(np.mean(np.exp(ll - m)))
        total += -logmix / n_entries
    return total / len(validation_episodes)


def f1_score(pred, truth) -> float:
    """F1 with 'safe' as the positive class; all-zero confusion counts -> 1."""
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    tp = int(np.count_nonzero(pred & truth))
    fp = int(np.count_nonzero(pred & ~truth))
    fn = int(np.count_nonzero(~pred & truth))
    if tp + fp + fn == 0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def uniform_grid(box, points_per_dim: int) -> np.ndarray:
    axes = [np.linspace(box.lo[j], box.hi[j], points_per_dim) for j in range(box.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


_TRUTH_CACHE: dict = {}


def true_safety_labels(system: SystemSpec, grid: np.ndarray) -> np.ndarray:
    key = (system.name, tuple(sorted(system.params.items())),
           system.horizon, system.n_obs, grid.tobytes())
    if key not in _TRUTH_CACHE:
        _TRUTH_CACHE[key] = np.array([is_truly_safe(system, x0) for x0 in grid])
    return _TRUTH_CACHE[key]


def f1_safe_set(model: GPODEModel, system: SystemSpec, grid, delta: float,
                sampling: SamplingConfig, rng, truth=None) -> float:
    """F1 of the model's xi >= delta safe-set prediction against ground truth."""
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if truth is None:
        truth = true_safety_labels(system, grid)
    starts, states, div = predict_states_batch(
        model, grid, system.schedule, sampling.K, rng,
        x0_noise=sampling.include_x0_noise,
        n_fourier=sampling.n_fourier, substeps=sampling.substeps,
    )
    full = np.concatenate([starts[:, :, None, :], states], axis=2)
    xi = np.array([
        safety_probability(full[:, i], system.safety, diverged=div[:, i])
        for i in range(grid.shape[0])
    ])
    return f1_score(xi >= delta, truth)


def build_validation_set(system: SystemSpec, config: ExperimentConfig, seed: int):
    """Held-out noisy episodes from truly-safe starts on a fixed grid over Theta.

    Depends on the run seed only (not the method), so SAL and random runs
    with the same seed are scored against the same validation data.
    """
    grid = uniform_grid(system.candidate_box, config.metrics.validation_grid)
    safe = [x0 for x0 in grid if is_truly_safe(system, x0)]
    if not safe:
        raise ConfigError("no truly-safe validation start found on the grid")
    rng = _rng(seed, _TAG_VALIDATION)
    return [measure(system, x0, rng) for x0 in safe[: config.metrics.n_validation]]


# --- run state persistence ---------------------------------------------------

def _episode_to_dict(ep: Episode) -> dict:
    return {"theta": ep.theta.tolist(), "times": ep.times.tolist(),
            "observations": ep.observations.tolist()}


def _episode_from_dict(doc: dict) -> Episode:
    return Episode(np.asarray(doc["theta"]), np.asarray(doc["times"]),
                   np.asarray(doc["observations"]))


def save_run_state(path, *, seed, method, acquisition, next_budget, episodes,
                   plan_log, records, model):
    doc = {
        "schema_version": STATE_SCHEMA_VERSION,
        "seed": seed,
        "method": method,
        "acquisition": acquisition,
        "next_budget": next_budget,
        "episodes": [_episode_to_dict(ep) for ep in episodes],
        "plan_log": plan_log,
        "records": [rec.to_row() for rec in records],
        "model": model_to_dict(model) if model is not None else None,
    }
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh)
    os.replace(tmp, path)


def load_run_state(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, OSError) as exc:
        raise SchemaError(f"run state unreadable: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("schema_version") != STATE_SCHEMA_VERSION:
        raise SchemaError(
            f"run state schema_version mismatch (want {STATE_SCHEMA_VERSION})"
        )
    doc = dict(doc)
    doc["episodes"] = [_episode_from_dict(d) for d in doc["episodes"]]
    if doc["model"] is not None:
        doc["model"] = model_from_dict(doc["model"])
    doc["records"] = [_record_from_row(row) for row in doc["records"]]
    return doc


def _record_from_row(row) -> MetricsRecord:
    theta = None
    if row[6] != "" and row[7] != "":
        theta = np.array([float(row[6]), float(row[7])])
    return MetricsRecord(
        seed=int(row[0]), budget=int(row[1]), method=row[2], acquisition=row[3],
        nll=float(row[4]), f1=float(row[5]), theta=theta,
        xi_est=float(row[8]) if row[8] != "" else None,
        truly_safe=(row[9] == "True") if row[9] != "" else None,
        seconds=float(row[10]),
    )


# --- the loop ----------------------------------------------------------------

def _plan_next(model, system, config: ExperimentConfig, seed: int, round_index: int,
               method: str):
    """One planning decision; returns (theta, xi_estimate or None)."""
    rng = _rng(seed, _TAG_PLAN, round_index)
    if method == "random":
        return random_baseline_propose(system.candidate_box, rng), None
    pc = config.planner
    planner_config = PlannerConfig(
        domain=system.candidate_box,
        safety=system.safety,
        delta=pc.delta,
        n_candidates=pc.n_candidates,
        strategy=pc.strategy,
        sampling=SamplingConfig(K=pc.k_planning, include_x0_noise=pc.include_x0_noise,
                                n_fourier=pc.n_fourier, substeps=pc.substeps),
    )
    try:
        result = propose(model, system.schedule, planner_config, config.acquisition, rng)
    except NoFeasibleCandidateError:
        planner_config = copy.deepcopy(planner_config)
        planner_config.n_candidates *= 4
        result = propose(model, system.schedule, planner_config, config.acquisition,
                         _rng(seed, _TAG_PLAN, round_index, 1))
    return result.theta, result.xi


def run_loop(config: ExperimentConfig, seed: int, method: str, run_dir=None,
             resume_state: dict | None = None):
    """Run one (seed, method) loop; returns (records, episodes, model).

    With run_dir set, metrics.csv and state.json are kept current after
    every budget step. resume_state (from load_run_state) continues an
    interrupted run and yields results identical to an uninterrupted one.
    """
    if method not in ("sal", "random"):
        raise ConfigError(f"unknown method {method!r}")
    system = get_system(config.system, **config.system_overrides)
    val_episodes = build_validation_set(system, config, seed)
    f1_grid = uniform_grid(system.candidate_box, config.metrics.f1_grid)
    f1_truth = true_safety_labels(system, f1_grid)
    M = config.m_measurements

    if resume_state is not None:
        episodes = resume_state["episodes"]
        plan_log = {int(k): v for k, v in resume_state["plan_log"].items()}
        records = list(resume_state["records"])
        model = resume_state["model"]
        start_budget = int(resume_state["next_budget"])
    else:
        episodes = [measure(system, system.initial_theta, _rng(seed, _TAG_MEASURE, 0))]
        plan_log = {0: (system.initial_theta.tolist(), None, True)}
        records = []
        model = build_initial_model(system, config, seed)
        start_budget = 0

    tc = config.train
    mc = config.metrics
    for budget in range(start_budget, M + 1):
        t_start = time.monotonic()
        iters = tc.iterations if budget == 0 else tc.warm_iterations
        model, _ = train(model, episodes, TrainConfig(
            iterations=iters, learning_rate=tc.learning_rate, k_train=tc.k_train,
            seed=_derived_seed(seed, _TAG_TRAIN, budget), sigma_trainable=tc.sigma_trainable,
            n_fourier=tc.n_fourier, substeps=tc.substeps,
        ))
        nll = validation_nll(model, val_episodes, mc.k_metrics,
                             _rng(seed, _TAG_METRICS, budget, 0),
                             n_fourier=mc.n_fourier, substeps=mc.substeps)
        f1 = f1_safe_set(model, system, f1_grid, config.planner.delta,
                         SamplingConfig(K=mc.k_metrics, n_fourier=mc.n_fourier,
                                        substeps=mc.substeps),
                         _rng(seed, _TAG_METRICS, budget, 1), truth=f1_truth)
        theta_b, xi_b = plan_log.get(budget, (None, None, False))[:2]
        theta_arr = None if theta_b is None else np.asarray(theta_b, dtype=float)
        truly = None if theta_arr is None else bool(is_truly_safe(system, theta_arr))
        records.append(MetricsRecord(
            seed=seed, budget=budget, method=method, acquisition=config.acquisition,
            nll=nll, f1=f1, theta=theta_arr, xi_est=xi_b, truly_safe=truly,
            seconds=time.monotonic() - t_start,
        ))

        if budget < M:
            try:
                theta, xi = _plan_next(model, system, config, seed, budget + 1, method)
            except NoFeasibleCandidateError:
                plan_log[budget + 1] = (None, None, False)  # skipped round
            else:
                entry = (np.asarray(theta).tolist(),
                         None if xi is None else float(xi))
                try:
                    episodes.append(measure(system, theta,
                                            _rng(seed, _TAG_MEASURE, budget + 1)))
                    plan_log[budget + 1] = entry + (True,)
                except MeasurementFailureError:
                    # unsafe event: the chosen start diverged on the true
                    # system; keep the decision on record, drop the episode
                    plan_log[budget + 1] = entry + (False,)

        if run_dir is not None:
            os.makedirs(run_dir, exist_ok=True)
            save_metrics(records, os.path.join(run_dir, "metrics.csv"))
            save_run_state(
                os.path.join(run_dir, "state.json"),
                seed=seed, method=method, acquisition=config.acquisition,
                next_budget=budget + 1, episodes=episodes,
                plan_log={str(k): v for k, v in plan_log.items()},
                records=records, model=model,
            )
    return records, episodes, model


def run_sal_loop(config: ExperimentConfig, seed: int, **kwargs):
    return run_loop(config, seed, "sal", **kwargs)


def run_random_loop(config: ExperimentConfig, seed: int, **kwargs):
    return run_loop(config, seed, "random", **kwargs)


def run_experiment(config: ExperimentConfig, method: str, resume: bool = False):
    """Run all configured seeds sequentially; returns the combined records.

    Writes per-seed run directories plus one combined CSV
    <output_dir>/<method>_<acquisition>.csv.
    """
    all_records = []
    for seed in config.seeds:
        run_dir = os.path.join(
            config.output_dir, f"{method}_{config.acquisition}_seed{seed}"
        )
        state = None
        state_path = os.path.join(run_dir, "state.json")
        if resume and os.path.exists(state_path):
            state = load_run_state(state_path)
        records, _, _ = run_loop(config, seed, method, run_dir=run_dir,
                                 resume_state=state)
        all_records.extend(records)
    os.makedirs(config.output_dir, exist_ok=True)
    combined = os.path.join(config.output_dir, f"{method}_{config.acquisition}.csv")
    save_metrics(all_records, combined)
    return all_records, combined


# --- aggregation -------------------------------------------------------------

def _naive_mean_std(values):
    """Plain left-to-right sums so other-language consumers can reproduce
    the exact IEEE doubles."""
    n = len(values)
    total = 0.0
    for v in values:
        total += v
    mean = total / n
    if n < 2:
        return mean, 0.0
    acc = 0.0
    for v in values:
        acc += (v - mean) * (v - mean)
    return mean, math.sqrt(acc / (n - 1))


AGGREGATE_HEADER = ("method,acquisition,budget,n_seeds,"
                    "nll_mean,nll_std,nll_lo,nll_hi,f1_mean,f1_std,f1_lo,f1_hi")


def aggregate(rows):
    """Per (method, acquisition, budget): mean, sample std, mean +- 2 std.

    rows are dicts as returned by load_metrics_rows; seeds are processed in
    ascending order so the reductions are order-fixed.
    """
    groups = {}
    for row in rows:
        key = (row["method"], row["acquisition"], int(row["budget"]))
        groups.setdefault(key, []).append((int(row["seed"]), float(row["nll"]), float(row["f1"])))
    out = []
    for key in sorted(groups):
        entries = sorted(groups[key])
        seeds = [e[0] for e in entries]
        if len(set(seeds)) != len(seeds):
            raise SchemaError(f"duplicate (seed, budget) rows for group {key}")
        nll_mean, nll_std = _naive_mean_std([e[1] for e in entries])
        f1_mean, f1_std = _naive_mean_std([e[2] for e in entries])
        out.append({
            "method": key[0], "acquisition": key[1], "budget": key[2],
            "n_seeds": len(entries),
            "nll_mean": nll_mean, "nll_std": nll_std,
            "nll_lo": nll_mean - 2.0 * nll_std, "nll_hi": nll_mean + 2.0 * nll_std,
            "f1_mean": f1_mean, "f1_std": f1_std,
            "f1_lo": f1_mean - 2.0 * f1_std, "f1_hi": f1_mean + 2.0 * f1_std,
        })
    return out


def save_aggregate(summary, path):
    cols = AGGREGATE_HEADER.split(",")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in summary:
            writer.writerow([
                row[c] if c in ("method", "acquisition") else
                (str(row[c]) if c in ("budget", "n_seeds") else repr(float(row[c])))
                for c in cols
            ])
