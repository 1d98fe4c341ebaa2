"""Losses, warmup schedule, Adam loop, noise injection, and fine-tuning.

The training loss is

    total = mse + lambda_cr(t) * cr

where ``mse`` is the mean over samples of the squared error in both velocity
components, ``cr`` is the mean squared violation of the Cauchy-Riemann
relations (zero iff the field is holomorphic at every sample), and the
penalty weight ramps linearly from 0 to ``lambda_max`` over the first
``warmup_steps`` steps, then stays saturated.  Each step samples a fresh
uniform batch from the system domain; gradients are clipped to a global norm
before the Adam update.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DivergedError, NonFiniteError
from .model import KanNetwork, MlpNetwork, Network, calibrate_hidden_grid
from .rng import Rng
from .systems import SystemSpec, field_fn, _sample_with


@dataclass
class TrainConfig:
    learning_rate: float = 1e-2
    batch_size: int = 128
    steps: int = 500
    lambda_max: float = 0.5
    warmup_steps: int = 100
    clip_norm: float = 1.0
    patience: int = 50
    seed: int = 42
    noise_level: float = 0.0
    improvement_tolerance: float = 1e-6

    def validate(self) -> None:
        positives = {
            "learning_rate": self.learning_rate, "batch_size": self.batch_size,
            "steps": self.steps, "warmup_steps": self.warmup_steps,
            "clip_norm": self.clip_norm, "patience": self.patience,
            "improvement_tolerance": self.improvement_tolerance,
        }
        for name, value in positives.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.lambda_max < 0:
            raise ValueError("lambda_max must be >= 0")
        if not 0.0 <= self.noise_level <= 1.0:
            raise ValueError("noise_level must be a fraction in [0, 1]")
        if self.patience > self.steps:
            raise ValueError("patience must not exceed steps")


@dataclass
class LossReport:
    step: int
    mse: float
    cr: float
    lambda_cr: float
    total: float
    grad_norm_preclip: float


@dataclass
class TrainHistory:
    reports: list[LossReport] = field(default_factory=list)
    stopped_early: bool = False
    best_step: int = -1

    CSV_COLUMNS = ("step", "mse", "cr", "lambda", "total", "grad_norm")

    def rows(self) -> list[list]:
        return [[r.step, r.mse, r.cr, r.lambda_cr, r.total, r.grad_norm_preclip]
                for r in self.reports]


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over samples of the squared error in both components."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or len(pred) < 1:
        raise ValueError("pred and target must be equal-length, nonempty")
    return float(np.mean(((pred - target) ** 2).sum(axis=1)))


def cr_residuals(jac: np.ndarray) -> np.ndarray:
    """Per-sample Cauchy-Riemann violation (u_x - v_y)^2 + (u_y + v_x)^2."""
    jac = np.asarray(jac, dtype=np.float64)
    d1 = jac[:, 0, 0] - jac[:, 1, 1]
    d2 = jac[:, 0, 1] + jac[:, 1, 0]
    return d1 * d1 + d2 * d2


def cr_loss(jac: np.ndarray) -> float:
    if len(jac) < 1:
        raise ValueError("need at least one Jacobian")
    return float(np.mean(cr_residuals(jac)))


def warmup_weight(step: int, config: TrainConfig) -> float:
    """Linear ramp to lambda_max over the first warmup_steps steps."""
    if step < 0:
        raise ValueError("step must be >= 0")
    return min(config.lambda_max, (step / config.warmup_steps) * config.lambda_max)


def loss_adjoints(out: np.ndarray, target: np.ndarray, jac: np.ndarray, lam: float):
    """Adjoints (r, rho) of the total loss wrt outputs and Jacobian entries."""
    n = len(out)
    r = 2.0 * (out - target) / n
    if lam == 0.0:
        return r, None
    d1 = jac[:, 0, 0] - jac[:, 1, 1]
    d2 = jac[:, 0, 1] + jac[:, 1, 0]
    rho = np.zeros_like(jac)
    rho[:, 0, 0] = 2.0 * lam * d1 / n
    rho[:, 1, 1] = -2.0 * lam * d1 / n
    rho[:, 0, 1] = 2.0 * lam * d2 / n
    rho[:, 1, 0] = 2.0 * lam * d2 / n
    return r, rho


def parameter_gradient(net: Network, X: np.ndarray, targets: np.ndarray,
                       lambda_cr: float) -> np.ndarray:
    """Gradient of the total loss with respect to every parameter.

    The forward-with-input-Jacobian computation is the function being
    differentiated, so the penalty's dependence on the input derivatives is
    included exactly.
    """
    _, _, grad = _loss_and_gradient(net, X, targets, lambda_cr)
    return grad


def _loss_and_gradient(net: Network, X: np.ndarray, targets: np.ndarray, lam: float):
    cache = net._cache(X, second=lam > 0.0)
    out, jac = cache["out"], cache["J"]
    mse = mse_loss(out, targets)
    cr = cr_loss(jac)
    r, rho = loss_adjoints(out, targets, jac, lam)
    grad, _ = net.backward(cache, r, rho)
    return mse, cr, grad


def clip_gradient(grad: np.ndarray, max_norm: float = 1.0) -> np.ndarray:
    """Scale grad to 2-norm max_norm if it exceeds it; otherwise unchanged."""
    norm = float(np.linalg.norm(grad))
    if norm <= max_norm:
        return grad
    return grad * (max_norm / norm)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def for_parameters(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n), t=0)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> np.ndarray:
    """One Adam update with bias correction; mutates state, returns new params."""
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1 ** state.t)
    v_hat = state.v / (1.0 - beta2 ** state.t)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps)


def inject_noise(targets: np.ndarray, level: float, seed: int) -> np.ndarray:
    """Gaussian perturbation scaled to level * per-component RMS; 0 is identity."""
    return _inject_noise(np.asarray(targets, dtype=np.float64), level, Rng(seed))


def _inject_noise(targets: np.ndarray, level: float, rng: Rng) -> np.ndarray:
    if level < 0:
        raise ValueError("noise level must be >= 0")
    if level == 0.0:
        return targets
    rms = np.sqrt(np.mean(targets ** 2, axis=0))
    noise = rng.normal(targets.size).reshape(targets.shape)
    return targets + level * rms[None, :] * noise


def _run_loop(spec: SystemSpec, net: Network, config: TrainConfig, *,
              lambda_of_step, stop_watch_from: int,
              calibrate_at: int | None = None) -> TrainHistory:
    rng = Rng(config.seed)
    truth = field_fn(spec)
    state = AdamState.for_parameters(net.parameter_count)
    history = TrainHistory()
    best_mse = np.inf
    best_params: np.ndarray | None = None
    best_step = -1
    prev_mse = np.inf
    streak = 0

    for step in range(config.steps):
        if step == calibrate_at:
            calibrate_hidden_grid(net, spec, seed=config.seed)
        z = _sample_with(rng, spec, config.batch_size)
        X = np.column_stack([z.real, z.imag])
        w = truth(z)
        targets = np.column_stack([w.real, w.imag])
        if config.noise_level > 0.0:
            targets = _inject_noise(targets, config.noise_level, rng)

        lam = lambda_of_step(step)
        try:
            mse, cr, grad = _loss_and_gradient(net, X, targets, lam)
        except NonFiniteError as e:
            raise DivergedError(f"network overflowed at step {step}: {e}") from e
        total = mse + lam * cr
        if not np.isfinite(total):
            raise DivergedError(f"loss became non-finite at step {step}")
        norm = float(np.linalg.norm(grad))
        history.reports.append(LossReport(step, mse, cr, lam, total, norm))

        # Safety stop: a run of `patience` consecutive steps in which the
        # batch MSE never improves on the previous step signals a stall or
        # collapse; stop and fall back to the best parameters seen.
        if step >= stop_watch_from:
            if mse < best_mse - config.improvement_tolerance:
                best_mse = mse
                best_step = step
                best_params = net.get_parameters()
            streak = streak + 1 if mse >= prev_mse - config.improvement_tolerance else 0
            if streak >= config.patience:
                history.stopped_early = True
                break
        prev_mse = mse

        params = adam_step(state, net.get_parameters(),
                           clip_gradient(grad, config.clip_norm), config.learning_rate)
        net.set_parameters(params)

    if history.stopped_early and best_params is not None:
        net.set_parameters(best_params)
    history.best_step = best_step
    return history


def train(spec: SystemSpec, net: Network, config: TrainConfig, *,
          use_cr: bool | None = None, calibrate: bool = True) -> tuple[Network, TrainHistory]:
    """Supervised velocity matching with the CR warmup schedule.

    The hidden knot grid of a fresh spline network is calibrated once before
    the first step.  The MLP baseline trains on the MSE term alone.  Early
    stopping is a safety net active after the warmup: it fires only when the
    per-step batch MSE fails to improve for `patience` consecutive steps,
    then falls back to the best parameters seen.
    """
    config.validate()
    if use_cr is None:
        use_cr = isinstance(net, KanNetwork)
    calibrate_at = 0 if (calibrate and isinstance(net, KanNetwork)) else None
    if use_cr:
        lam_of = lambda step: warmup_weight(step, config)
    else:
        lam_of = lambda step: 0.0
    history = _run_loop(spec, net, config, lambda_of_step=lam_of,
                        stop_watch_from=config.warmup_steps,
                        calibrate_at=calibrate_at)
    return net, history


def fine_tune(net: Network, spec: SystemSpec, config: TrainConfig,
              steps: int = 100) -> tuple[Network, TrainHistory]:
    """Continue training a pre-trained network on another system.

    Fresh Adam moments, no grid recalibration, and the CR weight starts
    already saturated at lambda_max.  Early stopping is live from step 0.
    """
    if steps == 0:
        return net, TrainHistory()
    cfg = replace(config, steps=steps, patience=min(config.patience, steps))
    cfg.validate()
    use_cr = isinstance(net, KanNetwork)
    lam_of = (lambda step: cfg.lambda_max) if use_cr else (lambda step: 0.0)
    history = _run_loop(spec, net, cfg, lambda_of_step=lam_of, stop_watch_from=0)
    return net, history


def _rk4_states(field, z0: np.ndarray, n_steps: int, dt: float):
    """Fixed-step RK4 on a complex->complex field, keeping stage inputs."""
    z = np.asarray(z0, dtype=np.complex128)
    states = [z]
    stages = []
    for _ in range(n_steps):
        k1 = field(z)
        s2 = z + 0.5 * dt * k1
        k2 = field(s2)
        s3 = z + 0.5 * dt * k2
        k3 = field(s3)
        s4 = z + dt * k3
        k4 = field(s4)
        z = z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        stages.append((states[-1], s2, s3, s4))
        states.append(z)
    return np.array(states), stages


def _net_field(net: Network):
    def f(z: np.ndarray) -> np.ndarray:
        X = np.column_stack([z.real, z.imag])
        out = net.forward(X)
        return out[:, 0] + 1j * out[:, 1]
    return f


def trajectory_loss(net: Network, spec: SystemSpec, z0: np.ndarray, horizon: float,
                    dt: float, bailout: float = 10.0) -> float:
    """MSE between net-integrated and analytically-integrated trajectories.

    Both fields are integrated with the same fixed-step RK4 from the same
    initial points; the loss averages the squared state error over all
    sample times and initial points.
    """
    if dt <= 0 or horizon < dt:
        raise ValueError("need dt > 0 and horizon >= dt")
    n_steps = int(round(horizon / dt))
    z0 = np.atleast_1d(np.asarray(z0, dtype=np.complex128))
    states_net, _ = _rk4_states(_net_field(net), z0, n_steps, dt)
    states_true, _ = _rk4_states(field_fn(spec), z0, n_steps, dt)
    for name, states in (("model", states_net), ("analytic", states_true)):
        if not np.isfinite(states).all() or np.abs(states).max() > bailout:
            raise DivergedError(f"{name} trajectory left bailout radius {bailout}")
    err = states_net[1:] - states_true[1:]
    return float(np.mean(np.abs(err) ** 2))


def trajectory_gradient(net: Network, spec: SystemSpec, z0: np.ndarray, horizon: float,
                        dt: float, bailout: float = 10.0) -> tuple[float, np.ndarray]:
    """Trajectory loss and its parameter gradient by unrolled differentiation.

    Reverse-sweeps the stored RK4 stages, accumulating one vector-Jacobian
    product per stage evaluation.
    """
    if dt <= 0 or horizon < dt:
        raise ValueError("need dt > 0 and horizon >= dt")
    n_steps = int(round(horizon / dt))
    z0 = np.atleast_1d(np.asarray(z0, dtype=np.complex128))
    f = _net_field(net)
    states_net, stages = _rk4_states(f, z0, n_steps, dt)
    states_true, _ = _rk4_states(field_fn(spec), z0, n_steps, dt)
    for name, states in (("model", states_net), ("analytic", states_true)):
        if not np.isfinite(states).all() or np.abs(states).max() > bailout:
            raise DivergedError(f"{name} trajectory left bailout radius {bailout}")

    count = n_steps * z0.size
    err = states_net[1:] - states_true[1:]
    loss = float(np.mean(np.abs(err) ** 2))

    def vjp_at(z: np.ndarray, adj: np.ndarray):
        X = np.column_stack([z.real, z.imag])
        r = np.column_stack([adj.real, adj.imag])
        _, grad, x_adj = net.vjp(X, r)
        return grad, x_adj[:, 0] + 1j * x_adj[:, 1]

    grad = np.zeros(net.parameter_count)
    mu = np.zeros(z0.size, dtype=np.complex128)
    for n in range(n_steps - 1, -1, -1):
        mu = mu + 2.0 * err[n] / count  # loss adjoint of state n+1
        zn, s2, s3, s4 = stages[n]
        g4 = (dt / 6.0) * mu
        dg, a4 = vjp_at(s4, g4)
        grad += dg
        g3 = (2.0 * dt / 6.0) * mu + dt * a4
        dg, a3 = vjp_at(s3, g3)
        grad += dg
        g2 = (2.0 * dt / 6.0) * mu + 0.5 * dt * a3
        dg, a2 = vjp_at(s2, g2)
        grad += dg
        g1 = (dt / 6.0) * mu + 0.5 * dt * a2
        dg, a1 = vjp_at(zn, g1)
        grad += dg
        mu = mu + a1 + a2 + a3 + a4
    return loss, grad
