"""Spline-to-formula fitting and symbolic family classification.

After training, every edge activation is swept over the domain, evaluated on
a uniform grid spanning its active input range, and fitted to each member of
the candidate library

    { 1, x, x^2, x^3, sin(x), cos(x), e^x, x e^x }

by closed-form affine least squares y ~ a*b(x) + c0.  The best candidate per
edge maximizes R^2; the most important edges (largest activation spread)
vote for the symbolic family of the system.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateFitError
from .model import KanNetwork
from .systems import Family, SystemSpec


class Candidate(str, Enum):
    ONE = "1"
    X = "x"
    X2 = "x^2"
    X3 = "x^3"
    SIN = "sin"
    COS = "cos"
    EXP = "exp"
    XEXP = "x*exp"

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self is Candidate.ONE:
            return np.ones_like(x)
        if self is Candidate.X:
            return x
        if self is Candidate.X2:
            return x * x
        if self is Candidate.X3:
            return x * x * x
        if self is Candidate.SIN:
            return np.sin(x)
        if self is Candidate.COS:
            return np.cos(x)
        if self is Candidate.EXP:
            return np.exp(x)
        return x * np.exp(x)


LIBRARY = (Candidate.ONE, Candidate.X, Candidate.X2, Candidate.X3,
           Candidate.SIN, Candidate.COS, Candidate.EXP, Candidate.XEXP)

FAMILY_OF_CANDIDATE = {
    Candidate.ONE: Family.CONSTANT,
    Candidate.X: Family.LINEAR,
    Candidate.X2: Family.POLY_X2,
    Candidate.X3: Family.POLY_X3,
    Candidate.SIN: Family.TRIGONOMETRIC,
    Candidate.COS: Family.TRIGONOMETRIC,
    Candidate.EXP: Family.EXPONENTIAL,
    Candidate.XEXP: Family.MIXED_EXP,
}

FLAT_EDGE_STD = 1e-6
R2_TIE = 1e-9


@dataclass
class EdgeSweep:
    layer: int
    from_node: int
    to_node: int
    inputs: np.ndarray       # observed scalar inputs over the domain sweep
    activations: np.ndarray  # observed activations at those inputs
    fit_inputs: np.ndarray   # uniform grid over the active range
    fit_activations: np.ndarray

    @property
    def active_range(self) -> tuple[float, float]:
        return float(self.inputs.min()), float(self.inputs.max())

    @property
    def importance(self) -> float:
        return float(np.std(self.activations))


@dataclass
class EdgeFit:
    layer: int
    from_node: int
    to_node: int
    candidate: Candidate
    scale: float
    offset: float
    r_squared: float
    active_range: tuple[float, float]
    importance: float


@dataclass
class FamilyReport:
    detected_family: Family
    dominant_fits: list[EdgeFit]
    mean_r2: float


def sweep_edges(net: KanNetwork, spec: SystemSpec, resolution: tuple[int, int] = (100, 100),
                fit_points: int = 200) -> list[EdgeSweep]:
    """Record every edge's scalar input/output over a domain lattice.

    The lattice respects the system's exclusion disk.  Each edge is then
    re-evaluated on a uniform grid over its observed input range for fitting.
    """
    from .analysis import build_eval_grid

    grid = build_eval_grid(spec, *resolution)
    _, records = net.forward(grid.xy, record=True)
    sweeps = []
    for rec in records:
        lo, hi = float(rec.inputs.min()), float(rec.inputs.max())
        if hi - lo < 1e-12:
            fit_inputs = np.full(fit_points, lo)
        else:
            fit_inputs = np.linspace(lo, hi, fit_points)
        phi = net.edge_function(rec.layer, rec.from_node, rec.to_node)
        sweeps.append(EdgeSweep(
            layer=rec.layer, from_node=rec.from_node, to_node=rec.to_node,
            inputs=rec.inputs, activations=rec.outputs,
            fit_inputs=fit_inputs, fit_activations=phi(fit_inputs),
        ))
    return sweeps


def fit_candidate(xs: np.ndarray, ys: np.ndarray, candidate: Candidate,
                  ) -> tuple[float, float, float]:
    """Affine least squares ys ~ a*b(xs) + c0; returns (a, c0, r_squared)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.size < 3:
        raise ValueError("need at least 3 samples")
    if xs.max() - xs.min() < 1e-12:
        raise ValueError("xs must span a nondegenerate range")
    with np.errstate(over="ignore", invalid="ignore"):
        b = candidate.evaluate(xs)
    if not np.isfinite(b).all():
        raise DegenerateFitError(f"candidate {candidate.value} overflows on the range")
    var_b = float(np.var(b))
    if var_b < 1e-12:
        raise DegenerateFitError(f"candidate {candidate.value} is constant on the range")
    a = float(np.mean((b - b.mean()) * (ys - ys.mean())) / var_b)
    c0 = float(ys.mean() - a * b.mean())
    ss_res = float(np.sum((ys - (a * b + c0)) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    if ss_tot < 1e-300:
        return a, c0, 1.0 if ss_res < 1e-300 else -np.inf
    return a, c0, 1.0 - ss_res / ss_tot


def best_fit(sweep: EdgeSweep) -> EdgeFit:
    """Highest-R^2 candidate for one edge.

    A flat edge (activation std below 1e-6) is constant by definition; the
    remaining candidates are compared by R^2 with ties broken by library
    order.
    """
    common = dict(layer=sweep.layer, from_node=sweep.from_node, to_node=sweep.to_node,
                  active_range=sweep.active_range, importance=sweep.importance)
    if sweep.importance < FLAT_EDGE_STD:
        return EdgeFit(candidate=Candidate.ONE, scale=0.0,
                       offset=float(np.mean(sweep.fit_activations)), r_squared=1.0, **common)
    best: EdgeFit | None = None
    for cand in LIBRARY:
        try:
            a, c0, r2 = fit_candidate(sweep.fit_inputs, sweep.fit_activations, cand)
        except DegenerateFitError:
            continue
        if not np.isfinite(r2):
            continue
        if best is None or r2 > best.r_squared + R2_TIE:
            best = EdgeFit(candidate=cand, scale=a, offset=c0, r_squared=r2, **common)
    assert best is not None  # X is never degenerate on a nonflat range
    return best


def classify_family(fits: list[EdgeFit], dominant_count: int = 4) -> FamilyReport:
    """Family vote among the most important edges.

    The top edges by importance are mapped to families through their fitted
    candidates; the majority family wins, with ties broken by the higher
    mean R^2 within the tied family.
    """
    if not fits:
        raise ValueError("need at least one edge fit")
    ranked = sorted(fits, key=lambda f: f.importance, reverse=True)
    dominant = ranked[:min(dominant_count, len(ranked))]
    votes: dict[Family, list[EdgeFit]] = {}
    for f in dominant:
        votes.setdefault(FAMILY_OF_CANDIDATE[f.candidate], []).append(f)
    best_family = max(
        votes.items(),
        key=lambda kv: (len(kv[1]), float(np.mean([f.r_squared for f in kv[1]]))),
    )[0]
    mean_r2 = float(np.mean([f.r_squared for f in dominant]))
    return FamilyReport(detected_family=best_family, dominant_fits=dominant, mean_r2=mean_r2)


def extract_family(net: KanNetwork, spec: SystemSpec,
                   resolution: tuple[int, int] = (100, 100),
                   dominant_count: int = 4) -> tuple[FamilyReport, list[EdgeFit]]:
    """Sweep, fit, and classify in one call; returns the report and all fits."""
    sweeps = sweep_edges(net, spec, resolution)
    fits = [best_fit(s) for s in sweeps]
    return classify_family(fits, dominant_count), fits
