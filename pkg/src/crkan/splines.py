"""Uniform B-spline bases and their derivatives.

A knot grid covers ``[lo, hi]`` with ``G`` intervals of spacing ``h`` and is
extended ``k`` steps past each end, giving ``G + 2k + 1`` stored knots.  One
basis bump is attached to every stored knot: bump ``m`` is the degree-``k``
cardinal B-spline centered at ``knots[m]`` with support radius ``(k+1)h/2``.
Equivalently these are the Cox-de Boor basis functions of the once-more
extended uniform knot vector, so the usual properties hold on ``[lo, hi]``:
non-negativity, partition of unity, and at most ``k+1`` nonzero bumps at any
point.

Inputs outside ``[lo, hi]`` are clamped before evaluation; derivatives in the
clamped region are zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class KnotGrid:
    lo: float
    hi: float
    intervals: int
    order: int = 3

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"knot range must satisfy lo < hi, got [{self.lo}, {self.hi}]")
        if self.intervals < 1 or self.order < 1:
            raise ValueError("intervals and order must be positive")

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / self.intervals

    @property
    def n_basis(self) -> int:
        """One coefficient per stored knot."""
        return self.intervals + 2 * self.order + 1

    @property
    def knots(self) -> np.ndarray:
        """Stored knots: uniform, extended ``order`` steps past [lo, hi]."""
        k = self.order
        return self.lo + (np.arange(self.n_basis) - k) * self.spacing


def _eval_knots(grid: KnotGrid) -> np.ndarray:
    # Cox-de Boor knot vector whose one-sided splines are our centered bumps.
    k = grid.order
    n = grid.n_basis
    return grid.lo + (np.arange(n + k + 1) - k - 0.5 * (k + 1)) * grid.spacing


def basis_arrays(grid: KnotGrid, x: np.ndarray, second: bool = False):
    """Basis values and derivatives at each point of ``x``.

    Returns ``(B, Bp)`` or ``(B, Bp, Bpp)``, each of shape ``(len(x), n_basis)``.
    Derivatives vanish where ``x`` was clamped to ``[lo, hi]``.
    """
    x = np.asarray(x, dtype=np.float64)
    flat = x.ravel()
    k = grid.order
    n = grid.n_basis
    h = grid.spacing
    u = _eval_knots(grid)

    inside = (flat >= grid.lo) & (flat <= grid.hi)
    xc = np.clip(flat, grid.lo, grid.hi)

    # degree-0 indicators, one-hot on the containing knot interval
    pos = np.floor((xc - u[0]) / h).astype(np.int64)
    pos = np.clip(pos, 0, n + k - 1)
    level = np.zeros((flat.size, n + k))
    level[np.arange(flat.size), pos] = 1.0

    keep: dict[int, np.ndarray] = {}
    for d in range(1, k + 1):
        cols = n + k - d
        left = (xc[:, None] - u[None, :cols]) * level[:, :cols]
        right = (u[None, d + 1:d + 1 + cols] - xc[:, None]) * level[:, 1:cols + 1]
        level = (left + right) / (d * h)
        if d in (k - 2, k - 1):
            keep[d] = level

    B = level  # (N, n)
    low1 = keep[k - 1]
    Bp = (low1[:, :n] - low1[:, 1:n + 1]) / h
    Bp[~inside] = 0.0

    out = x.shape + (n,)
    if not second:
        return B.reshape(out), Bp.reshape(out)
    if k < 2:
        raise ValueError("second derivatives require order >= 2")
    low2 = keep[k - 2]
    Bpp = (low2[:, :n] - 2.0 * low2[:, 1:n + 1] + low2[:, 2:n + 2]) / (h * h)
    Bpp[~inside] = 0.0
    return B.reshape(out), Bp.reshape(out), Bpp.reshape(out)


def basis_values(grid: KnotGrid, x) -> np.ndarray:
    """Basis bump values at ``x`` (scalar or array; clamped to the range)."""
    B, _ = basis_arrays(grid, np.atleast_1d(np.asarray(x, dtype=np.float64)))
    return B[0] if np.isscalar(x) or np.ndim(x) == 0 else B


def basis_derivatives(grid: KnotGrid, x) -> np.ndarray:
    """First derivatives of the bumps; zero outside [lo, hi]."""
    _, Bp = basis_arrays(grid, np.atleast_1d(np.asarray(x, dtype=np.float64)))
    return Bp[0] if np.isscalar(x) or np.ndim(x) == 0 else Bp
