"""Deterministic random numbers shared by every module.

A single counter-based 64-bit generator (SplitMix64) drives all sampling:
draw ``i`` of stream ``seed`` is ``mix64(seed + (i+1) * GOLDEN)``.  Because
each draw depends only on its counter position, sequences are reproducible
bit for bit regardless of how draws are batched.  Gaussian variates come
from the Box-Muller transform applied to consecutive uniform pairs.

Reproducibility is promised within this implementation only.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_A = np.uint64(0xBF58476D1CE4E5B9)
_MIX_B = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1

# 2^-53, so uniforms use the top 53 bits of each word
_U53 = 1.0 / float(1 << 53)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX_A
    z = (z ^ (z >> np.uint64(27))) * _MIX_B
    return z ^ (z >> np.uint64(31))


class Rng:
    """SplitMix64 stream addressed by (seed, draw counter)."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK
        self._counter = 0

    def _words(self, n: int) -> np.ndarray:
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        state = np.uint64(self.seed) + idx * _GOLDEN
        return _mix64(state)

    def uniform(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        """n uniforms in [lo, hi)."""
        u = (self._words(n) >> np.uint64(11)).astype(np.float64) * _U53
        return lo + (hi - lo) * u

    def normal(self, n: int, mu: float = 0.0, sigma: float = 1.0) -> np.ndarray:
        """n Gaussian draws via Box-Muller on consecutive uniform pairs."""
        pairs = (n + 1) // 2
        u = (self._words(2 * pairs) >> np.uint64(11)).astype(np.float64) * _U53
        u1 = u[0::2]
        u2 = u[1::2]
        # 1 - u1 is in (0, 1], so the log never sees zero
        r = np.sqrt(-2.0 * np.log1p(-u1))
        theta = 2.0 * np.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return mu + sigma * out[:n]
