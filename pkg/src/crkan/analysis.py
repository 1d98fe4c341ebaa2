"""Evaluation metrics and dynamical diagnostics.

Provides field accuracy metrics (MSE, R^2, CR residual) over deterministic
lattices, escape-time fractal masks with boundary agreement, Lyapunov
exponent grids for the discrete map z -> z + dt*f(z), and fixed-step RK4
trajectory integration.

Row-major grid convention: index = iy * nx + ix with iy = 0 the lowest-y row.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .errors import DegenerateVarianceError, ResolutionMismatchError
from .systems import SystemSpec, field_fn

ComplexMap = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class EvalGrid:
    nx: int
    ny: int
    lo: float
    hi: float
    points: np.ndarray  # complex cell centers, exclusion-respecting

    @property
    def xy(self) -> np.ndarray:
        return np.column_stack([self.points.real, self.points.imag])


def build_eval_grid(spec: SystemSpec, nx: int = 100, ny: int = 100) -> EvalGrid:
    """Cell-center lattice over the system domain, minus any exclusion disk."""
    lo, hi = spec.domain.lo, spec.domain.hi
    z = _lattice(lo, hi, nx, ny)
    if spec.exclusion_radius > 0:
        z = z[np.abs(z) > spec.exclusion_radius]
    return EvalGrid(nx=nx, ny=ny, lo=lo, hi=hi, points=z)


def _lattice(lo: float, hi: float, nx: int, ny: int) -> np.ndarray:
    xs = lo + (np.arange(nx) + 0.5) * (hi - lo) / nx
    ys = lo + (np.arange(ny) + 0.5) * (hi - lo) / ny
    X, Y = np.meshgrid(xs, ys)  # row iy spans x at fixed y
    return (X + 1j * Y).ravel()


class AnalyticField:
    """Adapter exposing an analytic system as evaluate/jacobian on batches.

    Jacobians come from central finite differences of the closed form, which
    keeps this path independent of the model module's exact derivatives.
    """

    def __init__(self, spec: SystemSpec, fd_step: float = 1e-5):
        self.spec = spec
        self.fd_step = fd_step
        self._f = field_fn(spec)

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        return self._f(np.asarray(z, dtype=np.complex128))

    def as_map(self) -> ComplexMap:
        return self._f

    def jacobian(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.complex128)
        h = self.fd_step
        jac = np.empty((z.size, 2, 2))
        dx = (self._f(z + h) - self._f(z - h)) / (2.0 * h)
        dy = (self._f(z + 1j * h) - self._f(z - 1j * h)) / (2.0 * h)
        jac[:, 0, 0] = dx.real
        jac[:, 1, 0] = dx.imag
        jac[:, 0, 1] = dy.real
        jac[:, 1, 1] = dy.imag
        return jac


class ModelField:
    """Adapter exposing a trained network on complex batches."""

    def __init__(self, net):
        self.net = net

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.complex128)
        out = self.net.forward(np.column_stack([z.real, z.imag]))
        return out[:, 0] + 1j * out[:, 1]

    def as_map(self) -> ComplexMap:
        return self.evaluate

    def jacobian(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.complex128)
        _, jac = self.net.forward_with_input_jacobian(np.column_stack([z.real, z.imag]))
        return jac


@dataclass(frozen=True)
class FieldMetrics:
    mse: float
    r_squared: float
    cr_residual: float


def evaluate_field(candidate, reference, grid: EvalGrid) -> FieldMetrics:
    """Accuracy of ``candidate`` against ``reference`` over the lattice.

    mse is the mean squared error over all 2N velocity components, var the
    pooled variance of the reference components, r_squared = 1 - mse/var.
    The CR residual averages the candidate's own squared CR violations.
    """
    z = grid.points
    a = candidate.evaluate(z)
    b = reference.evaluate(z)
    comp_a = np.concatenate([a.real, a.imag])
    comp_b = np.concatenate([b.real, b.imag])
    var = float(np.var(comp_b))
    if var < 1e-12:
        raise DegenerateVarianceError("reference field is (near-)constant on the grid")
    mse = float(np.mean((comp_a - comp_b) ** 2))
    jac = candidate.jacobian(z)
    d1 = jac[:, 0, 0] - jac[:, 1, 1]
    d2 = jac[:, 0, 1] + jac[:, 1, 0]
    cr = float(np.mean(d1 * d1 + d2 * d2))
    return FieldMetrics(mse=mse, r_squared=1.0 - mse / var, cr_residual=cr)


class IterationMode(str, Enum):
    DIRECT = "direct"  # z <- f(z), the standard discrete-map convention
    EULER = "euler"    # z <- z + f(z)


@dataclass(frozen=True)
class EscapeMask:
    nx: int
    ny: int
    lo: float
    hi: float
    max_iter: int
    escaped: np.ndarray     # (ny, nx) bool
    iterations: np.ndarray  # (ny, nx) int, first escape step or max_iter


def escape_mask(field_map: ComplexMap, lo: float = -1.5, hi: float = 1.5,
                nx: int = 200, ny: int = 200, max_iter: int = 50,
                bailout: float = 2.0, mode: IterationMode | str = IterationMode.DIRECT,
                ) -> EscapeMask:
    """Escape-time grid of the discrete iteration induced by the field.

    Cells whose orbit exceeds the bailout radius (or overflows) within
    max_iter applications are marked escaped with their first escape step.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    mode = IterationMode(mode)
    z = _lattice(lo, hi, nx, ny)
    n = z.size
    iterations = np.full(n, max_iter, dtype=np.int64)
    active = np.arange(n)
    cur = z.copy()
    for it in range(1, max_iter + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            fz = field_map(cur)
            cur = cur + fz if mode is IterationMode.EULER else fz
            gone = ~np.isfinite(cur) | (np.abs(cur) > bailout)
        if gone.any():
            iterations[active[gone]] = it
            keep = ~gone
            active = active[keep]
            cur = cur[keep]
        if active.size == 0:
            break
    iterations = iterations.reshape(ny, nx)
    return EscapeMask(nx=nx, ny=ny, lo=lo, hi=hi, max_iter=max_iter,
                      escaped=iterations < max_iter, iterations=iterations)


def boundary_agreement(a: EscapeMask, b: EscapeMask) -> float:
    """Percentage of cells whose escaped flags match."""
    if a.escaped.shape != b.escaped.shape:
        raise ResolutionMismatchError(f"{a.escaped.shape} vs {b.escaped.shape}")
    return 100.0 * float(np.mean(a.escaped == b.escaped))


class Stability(str, Enum):
    CHAOTIC = "chaotic"
    STABLE = "stable"


@dataclass(frozen=True)
class LyapunovReport:
    mean_lambda: float
    classification: Stability
    lambdas: np.ndarray  # (ny, nx), NaN where no step was accumulated


def lyapunov_grid(field_map: ComplexMap, lo: float = -1.5, hi: float = 1.5,
                  nx: int = 200, ny: int = 200, n_iter: int = 50,
                  delta0: float = 1e-8, dt: float = 1.0,
                  bailout: float = 10.0) -> LyapunovReport:
    """Lyapunov exponents of the discrete map z -> z + dt*f(z).

    Each cell tracks a reference orbit and a companion kept at distance
    delta0; every step accumulates log(separation/delta0) and renormalizes
    the companion.  Steps that take the reference outside the bailout radius
    (or overflow) are not accumulated and the orbit stops.  The per-cell
    exponent is the accumulated sum divided by n_iter; cells that never
    accumulated a step are excluded from the mean.
    """
    if delta0 <= 0:
        raise ValueError("delta0 must be positive")
    z0 = _lattice(lo, hi, nx, ny)
    n = z0.size
    sums = np.zeros(n)
    counts = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    z = z0.copy()
    w = z0 + delta0
    for _ in range(n_iter):
        with np.errstate(over="ignore", invalid="ignore"):
            zn = z + dt * field_map(z)
            wn = w + dt * field_map(w)
            sep = np.abs(wn - zn)
        ok = np.isfinite(zn) & (np.abs(zn) <= bailout) & np.isfinite(sep) & (sep > 0)
        idx = active[ok]
        sums[idx] += np.log(sep[ok] / delta0)
        counts[idx] += 1
        z = zn[ok]
        w = zn[ok] + (wn[ok] - zn[ok]) * (delta0 / sep[ok])
        active = idx
        if active.size == 0:
            break
    lam = np.full(n, np.nan)
    seen = counts > 0
    lam[seen] = sums[seen] / n_iter
    mean_lambda = float(np.mean(lam[seen])) if seen.any() else float("nan")
    cls = Stability.CHAOTIC if mean_lambda > 0 else Stability.STABLE
    return LyapunovReport(mean_lambda=mean_lambda, classification=cls,
                          lambdas=lam.reshape(ny, nx))


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # complex
    diverged: bool


def integrate_trajectory(field_map: ComplexMap, z0: complex, horizon: float,
                         dt: float, bailout: float = 10.0) -> Trajectory:
    """Classical fixed-step RK4 on the plane; truncates past the bailout radius."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    n_steps = int(round(horizon / dt))
    times = [0.0]
    states = [complex(z0)]
    z = complex(z0)
    diverged = False
    for i in range(n_steps):
        k1 = complex(field_map(np.asarray([z]))[0])
        k2 = complex(field_map(np.asarray([z + 0.5 * dt * k1]))[0])
        k3 = complex(field_map(np.asarray([z + 0.5 * dt * k2]))[0])
        k4 = complex(field_map(np.asarray([z + dt * k3]))[0])
        z = z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not (np.isfinite(z.real) and np.isfinite(z.imag)) or abs(z) > bailout:
            diverged = True
            break
        times.append((i + 1) * dt)
        states.append(z)
    return Trajectory(times=np.asarray(times), states=np.asarray(states), diverged=diverged)
