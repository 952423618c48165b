"""End-to-end acceptance suite.

These tests run complete multi-seed active-learning experiments on both
benchmark systems and check the headline claims: the safety contract holds,
SAL's validation NLL and safe-set F1 beat or match uniform random sampling,
and the numerical building blocks (entropy estimator, decoupled sampling,
integrators) hit their stated tolerances. Expect this file to dominate the
suite's runtime.

Set SALGPODE_ACCEPT_DIR to a directory with previously written experiment
CSVs to skip re-running the loops during development; CI must leave it unset.
"""

import math
import os
import time

import numpy as np
import pytest
from scipy.linalg import cho_factor, cho_solve

from conftest import make_inducing
from salgpode.acquisition import (
    SafetyBounds,
    SamplingConfig,
    conditional_entropy_constant,
    entropy_acquisition,
)
from salgpode.harness import (
    ExperimentConfig,
    MetricsSection,
    ModelSection,
    PlannerSection,
    TrainSection,
    load_metrics_rows,
    run_experiment,
    run_loop,
)
from salgpode.integrate import IntegratorConfig, integrate
from salgpode.kernels import RbfKernel, gram
from salgpode.model import GPODEModel, elbo, load_model, save_model
from salgpode.planner import Box, PlannerConfig, propose
from salgpode.sampling import draw_function, kl_divergence
from salgpode.systems import get_system, is_truly_safe

DELTA = 0.9
SEEDS = [0, 1, 2, 3, 4]


def experiment_config(system: str, m: int, output_dir: str) -> ExperimentConfig:
    """Budget-calibrated for a single laptop-class core."""
    return ExperimentConfig(
        system=system,
        m_measurements=m,
        seeds=SEEDS,
        acquisition="entropy",
        output_dir=output_dir,
        planner=PlannerSection(delta=DELTA, n_candidates=40, k_planning=48,
                               n_fourier=256, substeps=4,
                               strategy="refine-local"),
        train=TrainSection(iterations=150, warm_iterations=80, substeps=1),
        model=ModelSection(),
        metrics=MetricsSection(k_metrics=32, n_fourier=256, substeps=4,
                               f1_grid=9, n_validation=15),
    )


def _run_or_load(system, m, tmp_dir):
    reuse = os.environ.get("SALGPODE_ACCEPT_DIR")
    base = os.path.join(reuse, system) if reuse else str(tmp_dir)
    config = experiment_config(system, m, base)
    out = {}
    t0 = time.monotonic()
    for method in ("sal", "random"):
        combined = os.path.join(base, f"{method}_entropy.csv")
        if not (reuse and os.path.exists(combined)):
            run_experiment(config, method)
        out[method] = load_metrics_rows(combined)
    return out, time.monotonic() - t0


@pytest.fixture(scope="session")
def vdp_runs(tmp_path_factory):
    return _run_or_load("vdp", 8, tmp_path_factory.mktemp("vdp"))


@pytest.fixture(scope="session")
def lv_runs(tmp_path_factory):
    return _run_or_load("lotka-volterra", 6, tmp_path_factory.mktemp("lv"))


def _nll_by_seed(rows, budgets):
    out = {}
    for row in rows:
        if int(row["budget"]) in budgets:
            out.setdefault(int(row["seed"]), []).append(float(row["nll"]))
    return {seed: float(np.mean(v)) for seed, v in out.items()}


def _mean_final_f1(rows):
    final = max(int(r["budget"]) for r in rows)
    return float(np.mean([float(r["f1"]) for r in rows
                          if int(r["budget"]) == final]))


class TestLearningCurves:
    def test_vdp_nll_ordering(self, vdp_runs):
        runs, elapsed = vdp_runs
        sal = _nll_by_seed(runs["sal"], {2, 3})
        rnd = _nll_by_seed(runs["random"], {2, 3})
        wins = sum(sal[s] <= rnd[s] for s in SEEDS)
        assert wins >= 4, f"SAL beat random on NLL in only {wins}/5 seeds"
        assert elapsed <= 3600.0, f"VdP experiment took {elapsed:.0f}s"

    def test_vdp_f1_ordering(self, vdp_runs):
        runs, _ = vdp_runs
        assert _mean_final_f1(runs["sal"]) >= _mean_final_f1(runs["random"])

    def test_lv_f1_ordering(self, lv_runs):
        runs, _ = lv_runs
        assert _mean_final_f1(runs["sal"]) >= _mean_final_f1(runs["random"])


class TestSafetyContract:
    def test_logged_xi_respects_threshold(self, vdp_runs, lv_runs):
        for runs, _ in (vdp_runs, lv_runs):
            planned = [r for r in runs["sal"] if r["xi_est"] != ""]
            assert planned, "no planner decisions were logged"
            assert all(float(r["xi_est"]) >= DELTA for r in planned)

    def test_true_violation_rate(self, vdp_runs, lv_runs):
        executed = []
        for runs, _ in (vdp_runs, lv_runs):
            executed += [r for r in runs["sal"]
                         if r["xi_est"] != "" and r["truly_safe"] != ""]
        violations = sum(r["truly_safe"] == "False" for r in executed)
        rate = violations / len(executed)
        assert rate <= (1.0 - DELTA) + 0.10, f"violation rate {rate:.3f}"


class TestEntropyOracle:
    def test_static_gaussian(self):
        tau, sigma, K = 1.0, 0.5, 4096
        target = 0.5 * math.log(2 * math.pi * math.e * (tau**2 + sigma**2))
        errors = []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            x = tau * rng.standard_normal((K, 1, 1))
            y = x + sigma * rng.standard_normal((K, 1, 1))
            est = entropy_acquisition(x, y, np.array([sigma]))
            errors.append(abs(est - target) / abs(target))
        assert np.median(errors) < 0.05


def _planning_instance(seed):
    rng = np.random.default_rng(seed)
    kernel = RbfKernel(np.array([1.0, 1.0]), 0.5)
    g = np.linspace(-1.5, 1.5, 3)
    Z = np.stack(np.meshgrid(g, g), axis=-1).reshape(-1, 2)
    K = gram(kernel, Z) + 1e-8 * np.eye(len(Z))
    inducing = make_inducing(kernel, Z, mu=0.1 * rng.standard_normal((len(Z), 2)),
                             cov=1e-2 * K)
    model = GPODEModel(kernel, inducing, np.array([0.1, 0.1]), x0_std=0.05)
    config = PlannerConfig(
        domain=Box(np.array([-1.0, -1.0]), np.array([1.0, 1.0])),
        safety=SafetyBounds(np.array([-4.0, -4.0]), np.array([4.0, 4.0])),
        delta=DELTA,
        n_candidates=12,
        sampling=SamplingConfig(K=16, n_fourier=64, substeps=2),
    )
    return model, config


class TestArgmaxInvariance:
    def test_constant_shift_preserves_choice(self):
        times = np.array([0.25, 0.5, 0.75])
        for seed in range(10):
            model, config = _planning_instance(seed)
            result = propose(model, times, config, "entropy",
                             rng=np.random.default_rng(100 + seed))
            shift = conditional_entropy_constant(model.obs_noise[0],
                                                 len(times), 2)
            feasible = [(theta, alpha) for theta, alpha, xi
                        in result.evaluated_candidates if xi >= DELTA]
            raw = max(feasible, key=lambda t: t[1])[0]
            shifted = max(feasible, key=lambda t: t[1] - shift)[0]
            assert np.array_equal(raw, shifted)
            assert np.array_equal(result.theta, raw)


class TestDecoupledMoments:
    def test_mean_and_covariance(self):
        rng = np.random.default_rng(12)
        kernel = RbfKernel(np.array([0.7]), 1.2)
        Z = np.linspace(-2, 2, 8)[:, None]
        K = gram(kernel, Z) + 1e-8 * np.eye(8)
        mu = rng.standard_normal((8, 1))
        S_half = 0.4 * rng.standard_normal((8, 8))
        inducing = make_inducing(kernel, Z, mu=mu, cov=S_half @ S_half.T + 0.01 * np.eye(8))
        X = np.linspace(-1.8, 1.8, 10)[:, None]

        n_draws = 2000
        draws = np.empty((n_draws, 10))
        for i in range(n_draws):
            f = draw_function(inducing, kernel, 2048, rng)
            draws[i] = f(X)[:, 0]

        cf = cho_factor(K, lower=True)
        kxz = gram(kernel, X, Z)
        A = cho_solve(cf, kxz.T).T  # K_xz K_zz^{-1}
        mean_true = (A @ mu)[:, 0]
        S = inducing.cov_factors[0] @ inducing.cov_factors[0].T
        cov_true = gram(kernel, X) - A @ kxz.T + A @ S @ A.T

        se_mean = np.sqrt(np.diag(cov_true) / n_draws)
        assert np.all(np.abs(draws.mean(axis=0) - mean_true) <= 3 * se_mean)

        cov_emp = np.cov(draws, rowvar=False)
        c = np.diag(cov_true)
        se_cov = np.sqrt((np.outer(c, c) + cov_true**2) / n_draws)
        assert np.all(np.abs(cov_emp - cov_true) <= 3 * se_cov)


class TestIntegrators:
    def test_rk4_order_on_exponential(self):
        cfg_h = IntegratorConfig(method="rk4-fixed", initial_step=0.1)
        cfg_h2 = IntegratorConfig(method="rk4-fixed", initial_step=0.05)
        times = np.array([1.0])
        exact = math.e
        err = [abs(integrate(lambda x: x, np.array([1.0]), times, c).states[-1, 0] - exact)
               for c in (cfg_h, cfg_h2)]
        ratio = err[0] / err[1]
        assert 12.0 <= ratio <= 20.0

    def test_dopri_endpoint_accuracy(self):
        cfg = IntegratorConfig(method="dopri45", rtol=1e-8, atol=1e-10)
        out = integrate(lambda x: x, np.array([1.0]), np.array([1.0]), cfg)
        rel = abs(out.states[-1, 0] - math.e) / math.e
        assert rel < 1e-6


class TestNumericalHygiene:
    def test_gram_psd(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            kernel = RbfKernel(rng.uniform(0.3, 2.0, size=3), rng.uniform(0.5, 3.0))
            X = rng.uniform(-3, 3, size=(40, 3))
            eigs = np.linalg.eigvalsh(gram(kernel, X))
            assert eigs.min() >= -1e-10

    def test_kl_zero_at_prior_and_nonnegative(self):
        rng = np.random.default_rng(0)
        kernel = RbfKernel(np.array([0.8]), 1.5)
        Z = np.linspace(-2, 2, 6)[:, None]
        prior = make_inducing(kernel, Z, cov="prior")
        assert kl_divergence(prior, kernel) == pytest.approx(0.0, abs=1e-8)
        for seed in range(5):
            rng = np.random.default_rng(seed)
            S_half = rng.standard_normal((6, 6))
            shifted = make_inducing(kernel, Z, mu=rng.standard_normal((6, 1)),
                                    cov=S_half @ S_half.T + 0.1 * np.eye(6))
            assert kl_divergence(shifted, kernel) >= 0.0

    def test_checkpoint_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        kernel = RbfKernel(np.array([0.9, 1.1]), 0.7)
        Z = rng.uniform(-2, 2, size=(7, 2))
        K = gram(kernel, Z) + 1e-6 * np.eye(7)
        inducing = make_inducing(kernel, Z, mu=rng.standard_normal((7, 2)),
                                 cov=0.5 * K)
        model = GPODEModel(kernel, inducing, np.array([0.05, 0.08]), x0_std=0.1)
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        data = []  # empty dataset: ELBO = -KL, a pure function of parameters
        assert elbo(loaded, data, 4, np.random.default_rng(0)) == \
            elbo(model, data, 4, np.random.default_rng(0))
        assert np.array_equal(loaded.inducing.Z, model.inducing.Z)
        assert np.array_equal(loaded.inducing.mu, model.inducing.mu)
        assert np.array_equal(loaded.obs_noise, model.obs_noise)

    def test_two_round_sal_determinism(self):
        config = ExperimentConfig(
            system="vdp", m_measurements=2, seeds=[0],
            system_overrides={"n_obs": 4},
            planner=PlannerSection(n_candidates=4, k_planning=4, delta=0.5,
                                   n_fourier=32, substeps=2),
            train=TrainSection(iterations=15, warm_iterations=8, k_train=2,
                               n_fourier=32, substeps=1),
            model=ModelSection(n_inducing=10),
            metrics=MetricsSection(k_metrics=8, n_fourier=64, substeps=4,
                                   f1_grid=3, validation_grid=3, n_validation=4),
        )
        runs = [run_loop(config, 0, "sal")[0] for _ in range(2)]
        rows = [[rec.to_row()[:-1] for rec in records] for records in runs]
        assert rows[0] == rows[1]  # identical apart from wall-clock seconds
