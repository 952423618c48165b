"""Ground-truth benchmark systems standing in for the physical test bench.

Each system bundles its vector field, safety box, measurement schedule,
observation noise, and candidate search box; measurements integrate the
true dynamics at high accuracy and add Gaussian noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .acquisition import SafetyBounds
from .errors import (
    ContractViolationError,
    DivergenceError,
    MeasurementFailureError,
    StepBudgetError,
)
from .integrate import IntegratorConfig, integrate
from .model import Episode
from .planner import Box

# high-accuracy reference settings for ground-truth integration
_REFERENCE = IntegratorConfig(method="dopri45", rtol=1e-9, atol=1e-11, max_steps=2_000_000)


def vdp_rhs(x, mu: float = 0.5, classical: bool = False) -> np.ndarray:
    """Van der Pol style field (x2, mu*(1-x1)^2*x2 - x1).

    The damping term uses (1-x1)^2; `classical` switches to the textbook
    (1-x1^2) form.
    """
    x = np.asarray(x, dtype=float)
    damp = (1.0 - x[0] ** 2) if classical else (1.0 - x[0]) ** 2
    return np.array([x[1], mu * damp * x[1] - x[0]])


def lv_rhs(x, alpha: float = 0.5, beta: float = 0.05,
           gamma: float = 0.5, delta_lv: float = 0.05) -> np.ndarray:
    """Lotka-Volterra predator-prey field."""
    x = np.asarray(x, dtype=float)
    return np.array([
        alpha * x[0] - beta * x[0] * x[1],
        -gamma * x[1] + delta_lv * x[0] * x[1],
    ])


@dataclass
class SystemSpec:
    name: str
    rhs: callable                  # true vector field, x (d,) -> dx (d,)
    params: dict
    safety: SafetyBounds
    horizon: float                 # T
    n_obs: int                     # N measurements at t_i = i*T/N
    obs_noise: float               # sigma_true
    candidate_box: Box             # Theta
    initial_theta: np.ndarray      # designated seed episode start

    def __post_init__(self):
        if self.n_obs < 1 or self.horizon <= 0:
            raise ContractViolationError("need n_obs >= 1 and horizon > 0")
        self.initial_theta = np.asarray(self.initial_theta, dtype=float)

    @property
    def schedule(self) -> np.ndarray:
        """Uniform measurement grid t_i = i*T/N, i = 1..N."""
        return self.horizon * np.arange(1, self.n_obs + 1) / self.n_obs


def make_vdp(mu: float = 0.5, classical: bool = True, n_obs: int = 16,
             obs_noise: float = 0.05) -> SystemSpec:
    """Van der Pol benchmark over [0, 3] with the +-4 state box.

    The registered benchmark defaults to the classical (1-x1^2) damping:
    the (1-x1)^2 variant injects energy everywhere and blows up from the
    designated initial state, which would make the benchmark unusable.
    """
    bounds = SafetyBounds(np.array([-4.0, -4.0]), np.array([4.0, 4.0]))
    return SystemSpec(
        name="vdp",
        rhs=lambda x: vdp_rhs(x, mu=mu, classical=classical),
        params={"mu": mu, "classical": classical},
        safety=bounds,
        horizon=3.0,
        n_obs=n_obs,
        obs_noise=obs_noise,
        candidate_box=Box(bounds.x_min.copy(), bounds.x_max.copy()),
        initial_theta=np.array([-1.5, 2.5]),
    )


def make_lotka_volterra(alpha: float = 0.5, beta: float = 0.05, gamma: float = 0.5,
                        delta_lv: float = 0.05, n_obs: int = 20,
                        obs_noise: float = 0.1) -> SystemSpec:
    # populations must stay positive and bounded; search box sits inside
    return SystemSpec(
        name="lotka-volterra",
        rhs=lambda x: lv_rhs(x, alpha=alpha, beta=beta, gamma=gamma, delta_lv=delta_lv),
        params={"alpha": alpha, "beta": beta, "gamma": gamma, "delta": delta_lv},
        safety=SafetyBounds(np.array([0.2, 0.2]), np.array([25.0, 25.0])),
        horizon=10.0,
        n_obs=n_obs,
        obs_noise=obs_noise,
        candidate_box=Box(np.array([1.0, 1.0]), np.array([15.0, 15.0])),
        initial_theta=np.array([5.0, 5.0]),
    )


SYSTEMS = {
    "vdp": make_vdp,
    "lotka-volterra": make_lotka_volterra,
}


def get_system(name: str, **overrides) -> SystemSpec:
    if name not in SYSTEMS:
        raise ContractViolationError(
            f"unknown system {name!r}; available: {sorted(SYSTEMS)}"
        )
    return SYSTEMS[name](**overrides)


def measure(system: SystemSpec, x0, rng) -> Episode:
    """Take one noisy measurement episode from the true system."""
    x0 = np.asarray(x0, dtype=float)
    try:
        traj = integrate(system.rhs, x0, system.schedule, _REFERENCE)
    except (DivergenceError, StepBudgetError) as exc:
        raise MeasurementFailureError(
            f"{system.name} diverged while measuring from {x0.tolist()}"
        ) from exc
    noise = system.obs_noise * rng.standard_normal(traj.states.shape)
    return Episode(theta=x0, times=traj.times, observations=traj.states + noise)


def is_truly_safe(system: SystemSpec, x0, check_factor: int = 10) -> bool:
    """Ground-truth safety label via noiseless high-accuracy integration.

    Checked on a grid at least check_factor times denser than the
    measurement schedule, over [0, T]; box membership is inclusive and
    divergence counts as unsafe.
    """
    x0 = np.asarray(x0, dtype=float)
    if not np.all((x0 >= system.safety.x_min) & (x0 <= system.safety.x_max)):
        return False
    n_check = check_factor * system.n_obs
    grid = system.horizon * np.arange(1, n_check + 1) / n_check
    try:
        traj = integrate(system.rhs, x0, grid, _REFERENCE)
    except (DivergenceError, StepBudgetError):
        return False
    return bool(system.safety.contains(traj.states))
