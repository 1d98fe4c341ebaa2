"""Trainable field approximators: the spline-edge network and the MLP baseline.

Both map (x, y) to (u, v).  The spline-edge network has width [2, H, 2]; every
edge carries a learnable univariate activation

    phi(t) = w_b * silu(t) + w_s * sum_m c_m * B_m(t)

over a shared knot grid per layer, and nodes sum their incoming edges (no
biases).  Per edge that is ``n_basis + 2`` parameters, 280 in the default
configuration.  The MLP baseline is 2 -> 64 -> 64 -> 2 with tanh hidden
activations (4,482 parameters).

Besides plain evaluation both networks expose
  * exact input-Jacobians, computed by forwarding derivative channels
    through the chain rule (not finite differences), and
  * a vector-Jacobian product ``backward`` that accepts adjoints for the
    outputs and, optionally, for the input-Jacobian entries.  The latter is
    what makes derivative-penalty losses differentiable in the parameters.

Forward passes are pure; training mutates parameters single-writer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRangeError, NonFiniteError
from .rng import Rng
from .splines import KnotGrid, basis_arrays
from .systems import SystemSpec, sample_domain


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(x: np.ndarray) -> np.ndarray:
    return x * _sigmoid(x)


def silu_grad(x: np.ndarray) -> np.ndarray:
    s = _sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def silu_grad2(x: np.ndarray) -> np.ndarray:
    s = _sigmoid(x)
    return s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s))


@dataclass
class EdgeRecord:
    """Scalar input/output trace of one edge over a batch (observation only)."""

    layer: int  # 1 or 2
    from_node: int
    to_node: int
    inputs: np.ndarray
    outputs: np.ndarray


class _KanLayer:
    def __init__(self, n_in: int, n_out: int, grid: KnotGrid, coef: np.ndarray,
                 wb: np.ndarray, ws: np.ndarray):
        self.n_in = n_in
        self.n_out = n_out
        self.grid = grid
        self.coef = coef  # (n_in, n_out, n_basis)
        self.wb = wb      # (n_in, n_out)
        self.ws = ws      # (n_in, n_out)

    @property
    def parameter_count(self) -> int:
        return self.coef.size + self.wb.size + self.ws.size


class KanNetwork:
    """Width [2, H, 2] spline-edge network."""

    kind = "kan"

    def __init__(self, layer1: _KanLayer, layer2: _KanLayer):
        self.layer1 = layer1
        self.layer2 = layer2

    @classmethod
    def create(cls, hidden: int = 5, grid_size: int = 5, order: int = 3, seed: int = 0,
               input_range: tuple[float, float] = (-2.5, 2.5),
               hidden_range: tuple[float, float] = (-2.5, 2.5),
               coef_std: float = 0.1) -> "KanNetwork":
        """Fresh network: spline coefficients ~ N(0, coef_std^2), w_b = w_s = 1.

        The near-silu start gives a smooth trainable field.  The hidden-layer
        knot range is provisional until ``calibrate_hidden_grid`` observes
        real hidden values.
        """
        g1 = KnotGrid(input_range[0], input_range[1], grid_size, order)
        g2 = KnotGrid(hidden_range[0], hidden_range[1], grid_size, order)
        rng = Rng(seed)
        m = g1.n_basis
        coef1 = coef_std * rng.normal(2 * hidden * m).reshape(2, hidden, m)
        coef2 = coef_std * rng.normal(hidden * 2 * m).reshape(hidden, 2, m)
        l1 = _KanLayer(2, hidden, g1, coef1, np.ones((2, hidden)), np.ones((2, hidden)))
        l2 = _KanLayer(hidden, 2, g2, coef2, np.ones((hidden, 2)), np.ones((hidden, 2)))
        return cls(l1, l2)

    @property
    def hidden(self) -> int:
        return self.layer1.n_out

    @property
    def widths(self) -> list[int]:
        return [2, self.hidden, 2]

    @property
    def parameter_count(self) -> int:
        return self.layer1.parameter_count + self.layer2.parameter_count

    # parameter vector layout: layer1 coef, wb, ws, then layer2 coef, wb, ws
    def get_parameters(self) -> np.ndarray:
        l1, l2 = self.layer1, self.layer2
        return np.concatenate([
            l1.coef.ravel(), l1.wb.ravel(), l1.ws.ravel(),
            l2.coef.ravel(), l2.wb.ravel(), l2.ws.ravel(),
        ])

    def set_parameters(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.parameter_count,):
            raise ValueError(f"expected {self.parameter_count} parameters, got {vec.shape}")
        pos = 0
        for layer in (self.layer1, self.layer2):
            for arr in (layer.coef, layer.wb, layer.ws):
                arr[...] = vec[pos:pos + arr.size].reshape(arr.shape)
                pos += arr.size

    def hidden_values(self, X: np.ndarray) -> np.ndarray:
        """Hidden node values for inputs X of shape (N, 2)."""
        l1 = self.layer1
        B1, _ = basis_arrays(l1.grid, X)
        S1 = np.einsum("nim,ijm->nij", B1, l1.coef)
        E1 = l1.wb[None] * silu(X)[:, :, None] + l1.ws[None] * S1
        return E1.sum(axis=1)

    def forward(self, X: np.ndarray, record: bool = False):
        """Outputs (N, 2); with record=True also per-edge input/output traces."""
        X = np.asarray(X, dtype=np.float64)
        l1, l2 = self.layer1, self.layer2
        B1, _ = basis_arrays(l1.grid, X)
        S1 = np.einsum("nim,ijm->nij", B1, l1.coef)
        E1 = l1.wb[None] * silu(X)[:, :, None] + l1.ws[None] * S1
        Hn = E1.sum(axis=1)
        B2, _ = basis_arrays(l2.grid, Hn)
        S2 = np.einsum("njm,jim->nji", B2, l2.coef)
        E2 = l2.wb[None] * silu(Hn)[:, :, None] + l2.ws[None] * S2
        out = E2.sum(axis=1)
        if not np.isfinite(out).all():
            raise NonFiniteError("network output overflowed (divergent parameters?)")
        if not record:
            return out
        records = []
        for q in range(l1.n_in):
            for j in range(l1.n_out):
                records.append(EdgeRecord(1, q, j, X[:, q].copy(), E1[:, q, j].copy()))
        for j in range(l2.n_in):
            for i in range(l2.n_out):
                records.append(EdgeRecord(2, j, i, Hn[:, j].copy(), E2[:, j, i].copy()))
        return out, records

    def edge_function(self, layer: int, from_node: int, to_node: int):
        """Standalone callable for one edge activation."""
        lay = self.layer1 if layer == 1 else self.layer2
        coef = lay.coef[from_node, to_node].copy()
        wb = float(lay.wb[from_node, to_node])
        ws = float(lay.ws[from_node, to_node])
        grid = lay.grid

        def phi(x: np.ndarray) -> np.ndarray:
            x = np.asarray(x, dtype=np.float64)
            B, _ = basis_arrays(grid, x)
            return wb * silu(x) + ws * (B @ coef)

        return phi

    def _cache(self, X: np.ndarray, second: bool) -> dict:
        """Forward pass retaining everything backward needs.

        ``second=True`` additionally stores the curvature terms required to
        backpropagate adjoints on the input-Jacobian.
        """
        X = np.asarray(X, dtype=np.float64)
        l1, l2 = self.layer1, self.layer2
        c: dict = {"X": X, "second": second}

        if second:
            B1, B1p, B1pp = basis_arrays(l1.grid, X, second=True)
            c["B1pp"] = B1pp
        else:
            B1, B1p = basis_arrays(l1.grid, X)
        c["B1"], c["B1p"] = B1, B1p
        c["S1"] = np.einsum("nim,ijm->nij", B1, l1.coef)
        c["S1p"] = np.einsum("nim,ijm->nij", B1p, l1.coef)
        c["A1"], c["A1p"] = silu(X), silu_grad(X)
        E1 = l1.wb[None] * c["A1"][:, :, None] + l1.ws[None] * c["S1"]
        Hn = E1.sum(axis=1)
        c["Hn"] = Hn
        # dH_j/dx_q: only the edge leaving input q contributes
        c["G"] = l1.wb[None] * c["A1p"][:, :, None] + l1.ws[None] * c["S1p"]

        if second:
            B2, B2p, B2pp = basis_arrays(l2.grid, Hn, second=True)
            c["B2pp"] = B2pp
            c["S2pp"] = np.einsum("njm,jim->nji", B2pp, l2.coef)
            c["A1pp"] = silu_grad2(X)
            c["A2pp"] = silu_grad2(Hn)
            c["S1pp"] = np.einsum("nim,ijm->nij", c["B1pp"], l1.coef)
        else:
            B2, B2p = basis_arrays(l2.grid, Hn)
        c["B2"], c["B2p"] = B2, B2p
        c["S2"] = np.einsum("njm,jim->nji", B2, l2.coef)
        c["S2p"] = np.einsum("njm,jim->nji", B2p, l2.coef)
        c["A2"], c["A2p"] = silu(Hn), silu_grad(Hn)
        E2 = l2.wb[None] * c["A2"][:, :, None] + l2.ws[None] * c["S2"]
        c["out"] = E2.sum(axis=1)
        c["P2"] = l2.wb[None] * c["A2p"][:, :, None] + l2.ws[None] * c["S2p"]
        c["J"] = np.einsum("nji,nqj->niq", c["P2"], c["G"])
        if not np.isfinite(c["out"]).all():
            raise NonFiniteError("network output overflowed (divergent parameters?)")
        return c

    def forward_with_input_jacobian(self, X: np.ndarray):
        """Outputs and exact d(u,v)/d(x,y), shape (N, 2) and (N, 2, 2)."""
        c = self._cache(X, second=False)
        return c["out"], c["J"]

    def backward(self, cache: dict, r: np.ndarray, rho: np.ndarray | None = None):
        """VJP through the forward (and Jacobian) computation.

        r:   adjoint of the outputs, (N, 2)
        rho: adjoint of the input-Jacobian entries, (N, 2, 2) or None
        Returns (flat parameter gradient, input adjoint of shape (N, 2)).
        """
        l1, l2 = self.layer1, self.layer2
        A2, A2p, S2, S2p = cache["A2"], cache["A2p"], cache["S2"], cache["S2p"]
        B2, B2p, G, P2 = cache["B2"], cache["B2p"], cache["G"], cache["P2"]

        d_wb2 = np.einsum("ni,nj->ji", r, A2)
        d_ws2 = np.einsum("ni,nji->ji", r, S2)
        d_coef2 = np.einsum("ni,njm->jim", r, B2)
        Hbar = np.einsum("ni,nji->nj", r, P2)
        Gbar = None

        if rho is not None:
            if not cache["second"]:
                raise ValueError("jacobian adjoints need a cache built with second=True")
            P2bar = np.einsum("niq,nqj->nji", rho, G)
            Gbar = np.einsum("niq,nji->nqj", rho, P2)
            d_wb2 += np.einsum("nji,nj->ji", P2bar, A2p)
            d_ws2 += np.einsum("nji,nji->ji", P2bar, S2p)
            d_coef2 += np.einsum("nji,njm->jim", P2bar, B2p)
            phi2pp = l2.wb[None] * cache["A2pp"][:, :, None] + l2.ws[None] * cache["S2pp"]
            Hbar = Hbar + np.einsum("nji,nji->nj", P2bar, phi2pp)
        d_coef2 *= l2.ws[:, :, None]

        A1, A1p, S1, S1p = cache["A1"], cache["A1p"], cache["S1"], cache["S1p"]
        B1, B1p = cache["B1"], cache["B1p"]

        d_wb1 = np.einsum("nj,nq->qj", Hbar, A1)
        d_ws1 = np.einsum("nj,nqj->qj", Hbar, S1)
        d_coef1 = np.einsum("nj,nqm->qjm", Hbar, B1)
        x_adj = np.einsum("nj,nqj->nq", Hbar, G)

        if Gbar is not None:
            d_wb1 += np.einsum("nqj,nq->qj", Gbar, A1p)
            d_ws1 += np.einsum("nqj,nqj->qj", Gbar, S1p)
            d_coef1 += np.einsum("nqj,nqm->qjm", Gbar, B1p)
            phi1pp = l1.wb[None] * cache["A1pp"][:, :, None] + l1.ws[None] * cache["S1pp"]
            x_adj = x_adj + np.einsum("nqj,nqj->nq", Gbar, phi1pp)
        d_coef1 *= l1.ws[:, :, None]

        grad = np.concatenate([
            d_coef1.ravel(), d_wb1.ravel(), d_ws1.ravel(),
            d_coef2.ravel(), d_wb2.ravel(), d_ws2.ravel(),
        ])
        return grad, x_adj

    def vjp(self, X: np.ndarray, r: np.ndarray):
        """One-call VJP of the plain forward map (no Jacobian adjoints)."""
        cache = self._cache(X, second=False)
        grad, x_adj = self.backward(cache, r)
        return cache["out"], grad, x_adj


def calibrate_hidden_grid(net: KanNetwork, spec: SystemSpec, n: int = 512, seed: int = 0,
                          pad: float = 0.1, fit_samples: int = 256) -> KanNetwork:
    """Set the hidden-layer knot range from observed hidden values.

    Samples ``n`` domain points, reads the hidden node values, widens their
    [min, max] span by ``pad`` about its center, and re-expresses every
    hidden-layer edge spline on the new grid by a dense least-squares refit
    so the learned curves are preserved.  The input-layer grid is untouched.
    Calibrating twice on the same samples is a no-op.
    """
    sample = sample_domain(spec, n, seed)
    X = np.column_stack([sample.points.real, sample.points.imag])
    Hn = net.hidden_values(X)
    lo, hi = float(Hn.min()), float(Hn.max())
    if hi - lo < 1e-9:
        raise DegenerateRangeError(f"hidden values span only [{lo}, {hi}] (dead hidden units?)")
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo) * (1.0 + pad)
    old = net.layer2
    new_grid = KnotGrid(center - half, center + half, old.grid.intervals, old.grid.order)

    xs = np.linspace(new_grid.lo, new_grid.hi, fit_samples)
    Bold, _ = basis_arrays(old.grid, xs)
    targets = np.einsum("nm,jim->nji", Bold, old.coef).reshape(fit_samples, -1)
    Bnew, _ = basis_arrays(new_grid, xs)
    refit, *_ = np.linalg.lstsq(Bnew, targets, rcond=None)
    net.layer2 = _KanLayer(old.n_in, old.n_out, new_grid,
                           refit.T.reshape(old.n_in, old.n_out, new_grid.n_basis),
                           old.wb, old.ws)
    return net


class MlpNetwork:
    """2 -> 64 -> 64 -> 2 baseline, tanh hidden activations, linear output."""

    kind = "mlp"

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        self.weights = weights
        self.biases = biases

    @classmethod
    def create(cls, hidden_dim: int = 64, seed: int = 0) -> "MlpNetwork":
        rng = Rng(seed)
        dims = [2, hidden_dim, hidden_dim, 2]
        weights, biases = [], []
        for fan_in, fan_out in zip(dims, dims[1:]):
            std = np.sqrt(2.0 / (fan_in + fan_out))
            weights.append(rng.normal(fan_in * fan_out, sigma=std).reshape(fan_in, fan_out))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def hidden_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def parameter_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def get_parameters(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def set_parameters(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.parameter_count,):
            raise ValueError(f"expected {self.parameter_count} parameters, got {vec.shape}")
        pos = 0
        for w, b in zip(self.weights, self.biases):
            w[...] = vec[pos:pos + w.size].reshape(w.shape)
            pos += w.size
            b[...] = vec[pos:pos + b.size]
            pos += b.size

    def forward(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        a = np.tanh(X @ self.weights[0] + self.biases[0])
        a = np.tanh(a @ self.weights[1] + self.biases[1])
        out = a @ self.weights[2] + self.biases[2]
        if not np.isfinite(out).all():
            raise NonFiniteError("network output overflowed (divergent parameters?)")
        return out

    def _cache(self, X: np.ndarray, second: bool = False) -> dict:
        X = np.asarray(X, dtype=np.float64)
        W1, W2, W3 = self.weights
        a1 = np.tanh(X @ W1 + self.biases[0])
        t1 = 1.0 - a1 * a1
        a2 = np.tanh(a1 @ W2 + self.biases[1])
        t2 = 1.0 - a2 * a2
        out = a2 @ W3 + self.biases[2]
        D1 = t1[:, None, :] * W1[None, :, :]            # (N, 2, d1)
        C2 = np.einsum("nqh,hm->nqm", D1, W2)
        D2 = t2[:, None, :] * C2
        J = np.einsum("nqm,mi->niq", D2, W3)
        if not np.isfinite(out).all():
            raise NonFiniteError("network output overflowed (divergent parameters?)")
        return {"X": X, "a1": a1, "t1": t1, "a2": a2, "t2": t2, "out": out,
                "D1": D1, "C2": C2, "D2": D2, "J": J, "second": second}

    def forward_with_input_jacobian(self, X: np.ndarray):
        c = self._cache(X)
        return c["out"], c["J"]

    def backward(self, cache: dict, r: np.ndarray, rho: np.ndarray | None = None):
        """Same contract as KanNetwork.backward."""
        W1, W2, W3 = self.weights
        X, a1, t1, a2, t2 = cache["X"], cache["a1"], cache["t1"], cache["a2"], cache["t2"]
        D1, C2, D2 = cache["D1"], cache["C2"], cache["D2"]

        d_W3 = np.einsum("nm,ni->mi", a2, r)
        d_b3 = r.sum(axis=0)
        a2bar = r @ W3.T
        t2bar = None
        if rho is not None:
            d_W3 += np.einsum("niq,nqm->mi", rho, D2)
            D2bar = np.einsum("niq,mi->nqm", rho, W3)
            t2bar = np.einsum("nqm,nqm->nm", D2bar, C2)
            C2bar = D2bar * t2[:, None, :]

        z2bar = a2bar * t2
        if t2bar is not None:
            z2bar = z2bar + t2bar * (-2.0 * a2 * t2)
        d_W2 = np.einsum("nh,nm->hm", a1, z2bar)
        d_b2 = z2bar.sum(axis=0)
        a1bar = z2bar @ W2.T
        t1bar = None
        if rho is not None:
            d_W2 += np.einsum("nqh,nqm->hm", D1, C2bar)
            D1bar = np.einsum("nqm,hm->nqh", C2bar, W2)
            t1bar = np.einsum("nqh,qh->nh", D1bar, W1)

        z1bar = a1bar * t1
        if t1bar is not None:
            z1bar = z1bar + t1bar * (-2.0 * a1 * t1)
        d_W1 = np.einsum("nq,nh->qh", X, z1bar)
        d_b1 = z1bar.sum(axis=0)
        if rho is not None:
            d_W1 += np.einsum("nqh,nh->qh", D1bar, t1)
        x_adj = z1bar @ W1.T

        grad = np.concatenate([
            d_W1.ravel(), d_b1, d_W2.ravel(), d_b2, d_W3.ravel(), d_b3,
        ])
        return grad, x_adj

    def vjp(self, X: np.ndarray, r: np.ndarray):
        cache = self._cache(X)
        grad, x_adj = self.backward(cache, r)
        return cache["out"], grad, x_adj


Network = KanNetwork | MlpNetwork
