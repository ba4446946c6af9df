"""Composite Gauss-Legendre panels on an interval, in double and extended precision.

Provides the panel grid used everywhere (orthogonalization, kernels, the
half-integration transform) plus the per-panel partial-integral matrix that
turns nodal values into values of the antiderivative at the same nodes.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import mpmath as mp
import numpy as np

DEFAULT_PANELS = 64
DEFAULT_NODES = 24


@dataclass(frozen=True)
class QuadSpec:
    """Composite rule: `panels` equal panels with `nodes` Gauss-Legendre points each."""

    panels: int = DEFAULT_PANELS
    nodes: int = DEFAULT_NODES

    def refined(self) -> "QuadSpec":
        return QuadSpec(self.panels * 2, self.nodes)


@lru_cache(maxsize=32)
def gauss_legendre_mp(m: int, dps: int):
    """Nodes/weights of the m-point rule on [-1,1] at dps digits (Newton on P_m)."""
    with mp.workdps(dps + 10):
        xs, ws = [], []
        for k in range(1, m + 1):
            x = mp.cos(mp.pi * (4 * k - 1) / (4 * m + 2))
            dp = mp.mpf(1)
            for _ in range(100):
                p0, p1 = mp.mpf(1), x
                for j in range(2, m + 1):
                    p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
                dp = m * (x * p1 - p0) / (x * x - 1)
                dx = p1 / dp
                x -= dx
                if abs(dx) < mp.mpf(10) ** (-(dps + 5)):
                    break
            xs.append(+x)
            ws.append(2 / ((1 - x * x) * dp * dp))
    return xs, ws


@lru_cache(maxsize=16)
def _partial_integral_matrix_mp(m: int, dps: int):
    """Extended-precision version of the partial-integral matrix (list of rows)."""
    with mp.workdps(dps + 10):
        xg, wg = gauss_legendre_mp(m, dps)
        P = [[mp.mpf(1)] * m, list(xg)]
        for l in range(2, m + 1):
            P.append([((2 * l - 1) * xg[j] * P[l - 1][j] - (l - 1) * P[l - 2][j]) / l
                      for j in range(m)])
        B = []
        for i in range(m):
            row = []
            for j in range(m):
                s = wg[j] * (xg[i] + 1) / 2
                for l in range(1, m):
                    ql = (P[l + 1][i] - P[l - 1][i]) / (2 * l + 1)
                    s += (2 * l + 1) / mp.mpf(2) * wg[j] * P[l][j] * ql
                row.append(+s)
            B.append(row)
    return B


@lru_cache(maxsize=32)
def _derivative_matrix(m: int) -> np.ndarray:
    """D with D[i,j] = weight of f(x_j) in f'(x_i) on [-1,1], exact for deg < m."""
    xg, wg = np.polynomial.legendre.leggauss(m)
    P = np.zeros((m, m))
    P[0] = 1.0
    P[1] = xg
    for l in range(2, m):
        P[l] = ((2 * l - 1) * xg * P[l - 1] - (l - 1) * P[l - 2]) / l
    coef = ((2 * np.arange(m) + 1) / 2)[:, None] * wg[None, :] * P
    dP = np.zeros((m, m))
    for l in range(1, m):
        dP[l] = l * (xg * P[l] - P[l - 1]) / (xg * xg - 1.0)
    return dP.T @ coef


@lru_cache(maxsize=32)
def _partial_integral_matrix(m: int) -> np.ndarray:
    """B with B[i,j] = weight of f(x_j) in ∫_{-1}^{x_i} f, exact for deg < m.

    Built from the Legendre expansion of the nodal interpolant:
    ∫_{-1}^{x} P_l = (P_{l+1} - P_{l-1})/(2l+1) for l ≥ 1, and x+1 for l = 0.
    """
    xg, wg = np.polynomial.legendre.leggauss(m)
    P = np.zeros((m + 1, m))
    P[0] = 1.0
    P[1] = xg
    for l in range(2, m + 1):
        P[l] = ((2 * l - 1) * xg * P[l - 1] - (l - 1) * P[l - 2]) / l
    coef = ((2 * np.arange(m) + 1) / 2)[:, None] * wg[None, :] * P[:m]
    Q = np.zeros((m, m))
    Q[:, 0] = xg + 1.0
    for l in range(1, m):
        Q[:, l] = (P[l + 1] - P[l - 1]) / (2 * l + 1)
    return Q @ coef


class PanelGrid:
    """Composite Gauss-Legendre grid on [a, b] with cumulative-integration support."""

    def __init__(self, a: float, b: float, spec: QuadSpec = QuadSpec()):
        self.a = float(a)
        self.b = float(b)
        self.spec = spec
        xg, wg = np.polynomial.legendre.leggauss(spec.nodes)
        h = (self.b - self.a) / spec.panels
        centers = self.a + h * (np.arange(spec.panels) + 0.5)
        self.nodes = (centers[:, None] + (h / 2) * xg[None, :]).ravel()
        self.weights = np.tile((h / 2) * wg, spec.panels)
        self._h = h
        self._B = _partial_integral_matrix(spec.nodes)

    @property
    def size(self) -> int:
        return self.nodes.size

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return values @ self.weights

    def antiderivative(self, values: np.ndarray) -> np.ndarray:
        """F with F(x_i) = ∫_a^{x_i} f, rows of `values` treated independently."""
        v = np.atleast_2d(values)
        shp = v.shape
        v = v.reshape(-1, self.spec.panels, self.spec.nodes)
        pint = (v * self.weights.reshape(self.spec.panels, self.spec.nodes)).sum(axis=2)
        cum = np.concatenate(
            [np.zeros((v.shape[0], 1)), np.cumsum(pint, axis=1)[:, :-1]], axis=1
        )
        inner = np.einsum("ij,kpj->kpi", self._B, v) * (self._h / 2)
        F = (cum[:, :, None] + inner).reshape(shp)
        return F if values.ndim > 1 else F[0]

    def epsilon(self, values: np.ndarray) -> np.ndarray:
        """Half-integration (εf)(x) = ½(∫_a^x f − ∫_x^b f) at the nodes."""
        F = np.atleast_2d(self.antiderivative(values))
        total = np.atleast_2d(values) @ self.weights
        out = F - total[:, None] / 2
        return out if values.ndim > 1 else out[0]

    def derivative(self, values: np.ndarray) -> np.ndarray:
        """Per-panel spectral derivative of the nodal interpolant."""
        v = np.atleast_2d(values)
        shp = v.shape
        v = v.reshape(-1, self.spec.panels, self.spec.nodes)
        D = _derivative_matrix(self.spec.nodes)
        out = np.einsum("ij,kpj->kpi", D, v) * (2.0 / self._h)
        out = out.reshape(shp)
        return out if values.ndim > 1 else out[0]


class PanelGridMP:
    """Extended-precision mirror of PanelGrid (lists of mpf)."""

    def __init__(self, a, b, spec: QuadSpec, dps: int):
        self.spec = spec
        self.dps = dps
        with mp.workdps(dps):
            xg, wg = gauss_legendre_mp(spec.nodes, dps)
            a, b = mp.mpf(a), mp.mpf(b)
            h = (b - a) / spec.panels
            self.h = h
            self.nodes = []
            self.weights = []
            for p in range(spec.panels):
                c = a + p * h + h / 2
                for x, w in zip(xg, wg):
                    self.nodes.append(c + (h / 2) * x)
                    self.weights.append((h / 2) * w)
            self._B = _partial_integral_matrix_mp(spec.nodes, dps)

    @property
    def size(self) -> int:
        return len(self.nodes)

    def integrate(self, values) -> mp.mpf:
        return mp.fdot(self.weights, values)

    def epsilon(self, values):
        """εf at the nodes; `values` is a flat list of mpf."""
        m, P = self.spec.nodes, self.spec.panels
        with mp.workdps(self.dps):
            scale = self.h / 2
            pint = []
            for p in range(P):
                pint.append(mp.fdot(self.weights[p * m:(p + 1) * m],
                                    values[p * m:(p + 1) * m]))
            total = mp.fsum(pint)
            out = []
            run = mp.mpf(0)
            for p in range(P):
                seg = values[p * m:(p + 1) * m]
                for i in range(m):
                    inner = mp.fdot(self._B[i], seg) * scale
                    out.append(run + inner - total / 2)
                run += pint[p]
        return out
