"""ODE integration: fixed-grid RK4 and adaptive Dormand-Prince 4(5).

Both schemes integrate an autonomous vector field from t=0 and report the
solution on a caller-supplied strictly increasing output schedule. The
adaptive method steps exactly onto each output time (no dense-output
interpolation), so the reported states are themselves error-controlled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError, DivergenceError, StepBudgetError

# Dormand-Prince 5(4) tableau. The propagated solution is 5th order; the
# embedded 4th-order solution is used only for the error estimate.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)

# State magnitude beyond which a trajectory is declared diverged.
BLOWUP = 1e8


@dataclass
class IntegratorConfig:
    method: str = "dopri45"  # "rk4-fixed" or "dopri45"
    rtol: float = 1e-6
    atol: float = 1e-8
    initial_step: float = 0.01  # fixed step for rk4-fixed, first trial step for dopri45
    max_steps: int = 100_000

    def __post_init__(self):
        if self.method not in ("rk4-fixed", "dopri45"):
            raise ContractViolationError(f"unknown integrator method {self.method!r}")
        if self.rtol <= 0 or self.atol <= 0 or self.initial_step <= 0:
            raise ContractViolationError("rtol, atol and initial_step must be > 0")
        if self.max_steps < 1:
            raise ContractViolationError("max_steps must be >= 1")


@dataclass
class Trajectory:
    """Solution on the output schedule; x0 at t=0 is stored separately."""

    times: np.ndarray   # (N,), strictly increasing, > 0
    states: np.ndarray  # (N, d)
    x0: np.ndarray      # (d,)
    diverged: bool = False

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.times.shape[0] != self.states.shape[0]:
            raise ContractViolationError("times and states must have equal length")

    @property
    def full_states(self) -> np.ndarray:
        """States including the initial state, shape (N+1, d)."""
        return np.vstack([self.x0, self.states])


def _check_schedule(times):
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.shape[0] < 1:
        raise ContractViolationError("schedule must be a nonempty 1-d array")
    if times[0] <= 0 or np.any(np.diff(times) <= 0):
        raise ContractViolationError("schedule must be strictly increasing and > 0")
    return times


def _rk4_step(rhs, y, h):
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * h * k1)
    k3 = rhs(y + 0.5 * h * k2)
    k4 = rhs(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _integrate_rk4(rhs, x0, times, config):
    y = np.asarray(x0, dtype=float).copy()
    out = np.empty((times.shape[0], y.shape[0]))
    t = 0.0
    n_steps = 0
    for i, t_target in enumerate(times):
        span = t_target - t
        n_sub = max(1, int(np.ceil(span / config.initial_step - 1e-12)))
        h = span / n_sub
        for _ in range(n_sub):
            n_steps += 1
            if n_steps > config.max_steps:
                raise StepBudgetError(f"rk4-fixed exceeded max_steps={config.max_steps}")
            y = _rk4_step(rhs, y, h)
            if not np.all(np.isfinite(y)):
                raise DivergenceError(
                    f"state became non-finite near t={t:.6g}",
                    partial=Trajectory(times[:i], out[:i], np.asarray(x0, float), True),
                )
        t = t_target
        out[i] = y
    return out


def _error_norm(err, y_old, y_new, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y_old), np.abs(y_new))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _integrate_dopri(rhs, x0, times, config):
    y = np.asarray(x0, dtype=float).copy()
    d = y.shape[0]
    out = np.empty((times.shape[0], d))
    t = 0.0
    h = min(config.initial_step, float(times[0]))
    err_prev = 1.0
    n_steps = 0
    for i, t_target in enumerate(times):
        while t < t_target - 1e-14 * max(1.0, t_target):
            h = min(h, t_target - t)
            n_steps += 1
            if n_steps > config.max_steps:
                raise StepBudgetError(f"dopri45 exceeded max_steps={config.max_steps}")
            ks = np.empty((7, d))
            ks[0] = rhs(y)
            for s in range(1, 7):
                ys = y + h * (np.array(_DP_A[s]) @ ks[:s])
                ks[s] = rhs(ys)
            y5 = y + h * (_DP_B5 @ ks)
            y4 = y + h * (_DP_B4 @ ks)
            if not np.all(np.isfinite(y5)) or np.max(np.abs(y5)) > BLOWUP:
                raise DivergenceError(
                    f"state became non-finite near t={t:.6g}",
                    partial=Trajectory(times[:i], out[:i], np.asarray(x0, float), True),
                )
            err = _error_norm(y5 - y4, y, y5, config.rtol, config.atol)
            if err <= 1.0:
                t += h
                y = y5
                # PI controller (order-5 propagation): damped factor uses the
                # previous accepted error to avoid oscillating step sizes.
                fac = 0.9 * (max(err, 1e-10) ** -0.14) * (err_prev ** 0.08)
                err_prev = max(err, 1e-10)
            else:
                fac = max(0.2, 0.9 * err ** -0.2)
            h *= min(5.0, max(0.2, fac))
        out[i] = y
        t = t_target
    return out


def integrate(rhs, x0, times, config: IntegratorConfig) -> Trajectory:
    """Integrate dx/dt = rhs(x) from x0 at t=0 and report states at `times`."""
    times = _check_schedule(times)
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise ContractViolationError("x0 must be finite")
    if config.method == "rk4-fixed":
        states = _integrate_rk4(rhs, x0, times, config)
    else:
        states = _integrate_dopri(rhs, x0, times, config)
    return Trajectory(times, states, x0)


def integrate_batch(eval_fn, X0, times, substeps: int = 8):
    """Fixed-grid RK4 rollout of a batch of initial states.

    eval_fn maps states (K, B, d) -> derivatives (K, B, d); X0 has shape
    (K, B, d). Returns (states (K, B, N, d), diverged (K, B)). Diverged
    rows (non-finite or |x| > BLOWUP) are frozen at their last finite value
    and flagged instead of raising, so one exploding GP sample cannot sink
    a whole batch.
    """
    times = _check_schedule(times)
    X = np.array(X0, dtype=float)
    K, B, d = X.shape
    N = times.shape[0]
    out = np.empty((K, B, N, d))
    diverged = np.zeros((K, B), dtype=bool)
    t = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for i, t_target in enumerate(times):
            span = t_target - t
            h = span / substeps
            for _ in range(substeps):
                k1 = eval_fn(X)
                k2 = eval_fn(X + 0.5 * h * k1)
                k3 = eval_fn(X + 0.5 * h * k2)
                k4 = eval_fn(X + h * k3)
                X_new = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                bad = ~np.all(np.isfinite(X_new), axis=-1) | (
                    np.max(np.abs(np.nan_to_num(X_new)), axis=-1) > BLOWUP
                )
                diverged |= bad
                X = np.where(diverged[..., None], X, X_new)
            t = t_target
            out[:, :, i, :] = X
    return out, diverged
