"""Registry of the analytic dynamical systems used for training and truth.

Each system is a holomorphic velocity field f on (a subset of) the complex
plane.  The pure systems share one complex parameter c; the potential-flow
system models inviscid flow around a cylinder of radius ``a`` with free
stream ``U`` and is singular at the origin, so its spec carries an exclusion
disk that sampling and evaluation stay out of.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .errors import NonFiniteError, SingularInputError
from .rng import Rng

DEFAULT_C = complex(-0.4, 0.6)


class SystemId(str, Enum):
    QUADRATIC = "quadratic"
    CUBIC = "cubic"
    EXPONENTIAL = "exp"
    SINE = "sin"
    COSINE = "cos"
    MIXED_EXP = "zexp"
    POTENTIAL_FLOW = "potential"


class Family(str, Enum):
    """Coarse symbolic class of a velocity field."""

    POLY_X2 = "poly_x2"
    POLY_X3 = "poly_x3"
    EXPONENTIAL = "exponential"
    TRIGONOMETRIC = "trigonometric"
    MIXED_EXP = "mixed_exp"
    LINEAR = "linear"
    CONSTANT = "constant"


_FAMILY_OF: dict[SystemId, Family] = {
    SystemId.QUADRATIC: Family.POLY_X2,
    SystemId.CUBIC: Family.POLY_X3,
    SystemId.EXPONENTIAL: Family.EXPONENTIAL,
    SystemId.SINE: Family.TRIGONOMETRIC,
    SystemId.COSINE: Family.TRIGONOMETRIC,
    SystemId.MIXED_EXP: Family.MIXED_EXP,
    SystemId.POTENTIAL_FLOW: Family.LINEAR,
}

PURE_SYSTEMS = (
    SystemId.QUADRATIC,
    SystemId.CUBIC,
    SystemId.EXPONENTIAL,
    SystemId.SINE,
    SystemId.COSINE,
    SystemId.MIXED_EXP,
)


@dataclass(frozen=True)
class Domain:
    """Axis-aligned square [lo, hi]^2."""

    lo: float = -2.0
    hi: float = 2.0

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, z: complex) -> bool:
        return self.lo <= z.real <= self.hi and self.lo <= z.imag <= self.hi


@dataclass(frozen=True)
class SystemSpec:
    id: SystemId
    c: complex = DEFAULT_C
    free_stream: float = 1.0  # U, potential flow only
    radius: float = 1.0  # a, potential flow only
    domain: Domain = field(default_factory=Domain)
    exclusion_radius: float = 0.0
    family_label: Family = Family.POLY_X2

    def __post_init__(self):
        if not (cmath.isfinite(self.c)):
            raise ValueError("parameter c must be finite")
        if self.exclusion_radius < 0:
            raise ValueError("exclusion radius must be >= 0")
        if self.exclusion_radius >= self.domain.width / 2:
            raise ValueError("exclusion disk must fit inside the domain")

    def excluded(self, z: complex) -> bool:
        return abs(z) <= self.exclusion_radius if self.exclusion_radius > 0 else False


def make_system(
    system_id: SystemId | str,
    c: complex | None = None,
    free_stream: float = 1.0,
    radius: float = 1.0,
    domain: Domain | None = None,
    exclusion_margin: float = 1.1,
) -> SystemSpec:
    """Build a SystemSpec with the registry defaults.

    The potential-flow exclusion radius is ``exclusion_margin * radius`` so
    training targets stay clear of the singularity at the origin.
    """
    sid = SystemId(system_id)
    excl = exclusion_margin * radius if sid is SystemId.POTENTIAL_FLOW else 0.0
    return SystemSpec(
        id=sid,
        c=DEFAULT_C if c is None else c,
        free_stream=free_stream,
        radius=radius,
        domain=domain or Domain(),
        exclusion_radius=excl,
        family_label=_FAMILY_OF[sid],
    )


def field_fn(spec: SystemSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized, unchecked evaluator on complex arrays.

    Overflow and singular points produce inf/nan entries; callers that
    iterate maps treat those as escaped.
    """
    c = spec.c
    sid = spec.id
    if sid is SystemId.QUADRATIC:
        return lambda z: z * z + c
    if sid is SystemId.CUBIC:
        return lambda z: z * z * z + c
    if sid is SystemId.EXPONENTIAL:
        return lambda z: np.exp(z) + c
    if sid is SystemId.SINE:
        return lambda z: np.sin(z) + c
    if sid is SystemId.COSINE:
        return lambda z: np.cos(z) + c
    if sid is SystemId.MIXED_EXP:
        return lambda z: z * np.exp(z) + c
    U, a = spec.free_stream, spec.radius

    def potential(z: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return U * z + U * a * a / z

    return potential


def velocity(spec: SystemSpec, z: complex) -> complex:
    """Ground-truth velocity f(z); checked scalar form of the registry."""
    if spec.excluded(z):
        raise SingularInputError(f"|z|={abs(z):.4g} inside exclusion disk r={spec.exclusion_radius}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = complex(field_fn(spec)(np.asarray(z, dtype=np.complex128)))
    if not cmath.isfinite(out):
        raise NonFiniteError(f"velocity overflow at z={z}")
    return out


@dataclass(frozen=True)
class DomainSample:
    points: np.ndarray  # complex, shape (count,)
    seed: int
    count: int


def sample_domain(spec: SystemSpec, n: int, seed: int) -> DomainSample:
    """n points uniform over the domain square, outside the exclusion disk.

    Rejected points are redrawn so the sample size is exact; the draw
    sequence is fixed by the seed.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    rng = Rng(seed)
    pts = _sample_with(rng, spec, n)
    return DomainSample(points=pts, seed=seed, count=n)


def _sample_with(rng: Rng, spec: SystemSpec, n: int) -> np.ndarray:
    lo, hi = spec.domain.lo, spec.domain.hi
    out = np.empty(n, dtype=np.complex128)
    filled = 0
    while filled < n:
        need = n - filled
        xs = rng.uniform(need, lo, hi)
        ys = rng.uniform(need, lo, hi)
        z = xs + 1j * ys
        if spec.exclusion_radius > 0:
            z = z[np.abs(z) > spec.exclusion_radius]
        out[filled:filled + z.size] = z
        filled += z.size
    return out
