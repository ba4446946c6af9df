"""Orthonormal system for the varying weight e^{-nV_t} on σ_d.

Recurrence coefficients come from a discretized Stieltjes procedure run in
extended precision (mpmath) over the composite Gauss-Legendre grid; the
working representation is the weighted functions ψ_k = p_k e^{-nV_t/2}, whose
three-term recurrence has the same coefficients and whose values stay O(1).
Basis evaluation, the half-integration transform εψ, and the antisymmetric
overlap matrix M_{j,l} = n(ψ_j, εψ_l) are built on the same grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath as mp
import numpy as np

from .potential import Potential
from .quadrature import PanelGrid, PanelGridMP, QuadSpec

DEFAULT_PRECISION = 40
GRAM_TOL = 1e-9
MAX_REFINEMENTS = 3


class PrecisionError(RuntimeError):
    """Computed norm lost positivity: raise the working precision."""


class RangeError(ValueError):
    pass


@dataclass
class RecurrenceTable:
    """Jacobi coefficients of the weight e^{-nV_t} on σ_d.

    J[k], q[k] for k = 0..K-1 (J_{-1} = 0 by convention).  For exactly even
    potentials q is zeroed (symmetric grid makes it vanish to working
    precision; hard-zeroing keeps downstream parity exact).
    """

    n: int
    t: float
    J: np.ndarray
    q: np.ndarray
    K: int
    precision_digits: int
    quad: QuadSpec
    coeff_error: float          # |J| drift of the last re-orthogonalization check
    _mp: dict = field(default=None, repr=False)  # extended-precision basis payload

    def jacobi_matrix(self, size: int | None = None) -> np.ndarray:
        m = self.K if size is None else size
        if m > self.K:
            raise RangeError(f"requested Jacobi block {m} exceeds table K={self.K}")
        Jm = np.zeros((m, m))
        idx = np.arange(m)
        Jm[idx, idx] = self.q[:m]
        Jm[idx[:-1], idx[:-1] + 1] = self.J[: m - 1]
        Jm[idx[:-1] + 1, idx[:-1]] = self.J[: m - 1]
        return Jm


def _mp_polyval(coeffs, x):
    acc = mp.mpf(0)
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def _mp_potential_value(pot: Potential, x):
    """V_t(x) as mpf."""
    v = _mp_polyval([mp.mpf(c) for c in pot.coeffs], x)
    if pot.perturbation is not None:
        phi, t, n = pot.perturbation
        if t != 0.0:
            v += mp.mpf(t) / n * _mp_polyval([mp.mpf(c) for c in phi.coeffs], x)
    return v


def build_recurrence(pot: Potential, n: int, K: int | None = None,
                     quad: QuadSpec = QuadSpec(),
                     precision_digits: int = DEFAULT_PRECISION,
                     keep_mp_basis: bool = False) -> RecurrenceTable:
    """Discretized Stieltjes orthogonalization of the weight e^{-nV_t} on σ_d.

    n must be even (the β=1 kernel path requires it and the parity shortcuts
    assume a symmetric index convention); K defaults to n + ⌈n^{4/5}⌉ and may
    not exceed it.  precision_digits ≥ 30 required for n ≥ 30: the weight
    spans ~n·max V decades and the inner-product recurrence loses digits
    linearly in K without headroom.
    """
    if n < 2 or n % 2 != 0:
        raise RangeError("n must be an even integer >= 2")
    # floor of 8 keeps small-n kernel bands buildable; the n^{4/5} cap is the
    # meaningful constraint at scale
    kmax_allowed = n + max(int(math.ceil(n ** 0.8)), 8)
    if K is None:
        K = kmax_allowed
    if K > kmax_allowed:
        raise RangeError(f"K={K} exceeds n + n^(4/5) = {kmax_allowed}")
    if n >= 30 and precision_digits < 30:
        raise PrecisionError("precision_digits must be >= 30 for n >= 30")

    t = pot.perturbation[1] if pot.perturbation is not None else 0.0
    lo, hi = pot.sigma
    mp.mp.dps = precision_digits
    grid = PanelGridMP(lo, hi, quad, precision_digits)
    nodes, weights = grid.nodes, grid.weights
    N = grid.size

    nhalf = mp.mpf(n) / 2
    f0 = [mp.e ** (-nhalf * _mp_potential_value(pot, x)) for x in nodes]
    nrm2 = mp.fsum(w * v * v for w, v in zip(weights, f0))
    if nrm2 <= 0:
        raise PrecisionError("weight norm lost positivity at the requested precision")
    nrm = mp.sqrt(nrm2)
    psi_prev = [mp.mpf(0)] * N
    psi_cur = [v / nrm for v in f0]
    psis = [list(psi_cur)] if keep_mp_basis else None
    J: list = []
    q: list = []
    even = pot.is_even
    for k in range(K):
        y = [x * v for x, v in zip(nodes, psi_cur)]
        if even:
            qk = mp.mpf(0)  # symmetric grid + even weight: exact parity zero
        else:
            qk = mp.fsum(w * yy * v for w, yy, v in zip(weights, y, psi_cur))
        Jm1 = J[-1] if J else mp.mpf(0)
        z = [yy - qk * v - Jm1 * u for yy, v, u in zip(y, psi_cur, psi_prev)]
        Jk2 = mp.fsum(w * zz * zz for w, zz in zip(weights, z))
        if Jk2 <= 0:
            raise PrecisionError(
                f"norm positivity lost at k={k}: increase precision_digits "
                f"(currently {precision_digits})")
        Jk = mp.sqrt(Jk2)
        J.append(Jk)
        q.append(qk)
        psi_prev = psi_cur
        psi_cur = [zz / Jk for zz in z]
        if keep_mp_basis:
            psis.append(list(psi_cur))

    # residual orthogonality of the last two members, as a coefficient error proxy
    cross = mp.fdot([w * a for w, a in zip(weights, psi_cur)], psi_prev)
    coeff_error = abs(float(cross))

    payload = None
    if keep_mp_basis:
        payload = {"grid": grid, "psis": psis, "dps": precision_digits}
    return RecurrenceTable(
        n=n, t=t,
        J=np.array([float(v) for v in J]),
        q=np.array([float(v) for v in q]),
        K=K, precision_digits=precision_digits, quad=quad,
        coeff_error=coeff_error, _mp=payload)


@dataclass
class BasisEvaluation:
    """Grid values of ψ_k and εψ_k plus quadrature metadata."""

    grid: PanelGrid
    psi: np.ndarray            # (k_max+1, N)
    eps_psi: np.ndarray        # (k_max+1, N)
    one_overlaps: np.ndarray   # (1_{σ_d}, ψ_k)
    gram_residual: float
    k_max: int
    n: int
    guard_triggers: int = 0

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def weights(self) -> np.ndarray:
        return self.grid.weights


def _forward_recurrence(table: RecurrenceTable, pot: Potential, k_max: int,
                        nodes: np.ndarray, derivative: bool = False,
                        norm_grid: PanelGrid | None = None):
    """ψ_0..ψ_{k_max} at arbitrary points, optionally with ψ′ alongside."""
    n = table.n
    N = nodes.size
    psi = np.zeros((k_max + 1, N))
    lo, hi = pot.sigma
    g = norm_grid or PanelGrid(lo, hi, table.quad)
    w0 = np.exp(-0.5 * n * pot.value(g.nodes))
    nrm = math.sqrt(float(g.integrate(w0 * w0)))
    psi[0] = np.exp(-0.5 * n * pot.value(nodes)) / nrm
    guard = 0
    if k_max >= 1:
        psi[1] = (nodes - table.q[0]) * psi[0] / table.J[0]
    for k in range(1, k_max):
        psi[k + 1] = ((nodes - table.q[k]) * psi[k] - table.J[k - 1] * psi[k - 1]) / table.J[k]
        bad = ~np.isfinite(psi[k + 1])
        if bad.any():
            guard += int(bad.sum())
            psi[k + 1][bad] = 0.0
    if guard > 10 ** 6:
        raise PrecisionError(f"forward recurrence overflow guard tripped {guard} times")
    if not derivative:
        return psi, guard
    dpsi = np.zeros_like(psi)
    dpsi[0] = -0.5 * n * pot.value(nodes, order=1) * psi[0]
    if k_max >= 1:
        dpsi[1] = (psi[0] + (nodes - table.q[0]) * dpsi[0]) / table.J[0]
    for k in range(1, k_max):
        dpsi[k + 1] = (psi[k] + (nodes - table.q[k]) * dpsi[k]
                       - table.J[k - 1] * dpsi[k - 1]) / table.J[k]
    return psi, dpsi, guard


def evaluate_basis(table: RecurrenceTable, pot: Potential, k_max: int,
                   quad: QuadSpec | None = None, gram_tol: float = GRAM_TOL) -> BasisEvaluation:
    """Evaluate ψ_k and εψ_k on the quadrature grid; refine panels until the
    Gram residual beats `gram_tol` (or MAX_REFINEMENTS is hit)."""
    if k_max >= table.K:
        raise RangeError(f"k_max={k_max} not covered by table (K={table.K})")
    spec = quad or table.quad
    lo, hi = pot.sigma
    for attempt in range(MAX_REFINEMENTS + 1):
        grid = PanelGrid(lo, hi, spec)
        psi, guard = _forward_recurrence(table, pot, k_max, grid.nodes, norm_grid=grid)
        G = (psi * grid.weights) @ psi.T
        gram_residual = float(np.abs(G - np.eye(k_max + 1)).max())
        if gram_residual < gram_tol or attempt == MAX_REFINEMENTS:
            break
        spec = spec.refined()
    eps_psi = grid.epsilon(psi)
    one_overlaps = psi @ grid.weights
    return BasisEvaluation(grid, psi, eps_psi, one_overlaps, gram_residual,
                           k_max, table.n, guard)


def epsilon_transform(values: np.ndarray, grid: PanelGrid) -> np.ndarray:
    """(εf)(λ_i) = ½(∫_{lo}^{λ_i} f − ∫_{λ_i}^{hi} f) from nodal values, exactly linear."""
    return grid.epsilon(np.asarray(values, dtype=float))


@dataclass
class MMatrix:
    """Antisymmetric overlap block M_{j,l} = n(ψ_j, εψ_l) around index n.

    `band_entries[(j, l)]` holds indices in [n−band, n+band]; the full 0..n−1
    block and its inverse are computed in extended precision on demand.
    """

    n: int
    band: int
    band_block: np.ndarray      # (2*band+1, 2*band+1), index 0 ↔ n−band
    full_block: np.ndarray | None = None
    inverse: np.ndarray | None = None
    inverse_norm: float = float("nan")
    condition: float = float("nan")

    def entry(self, j: int, l: int) -> float:
        """M_{j,l} with absolute indices j, l in [n−band, n+band]."""
        return float(self.band_block[j - self.n + self.band, l - self.n + self.band])


def overlap_matrix(basis: BasisEvaluation, n: int, band: int,
                   table: RecurrenceTable | None = None,
                   pot: Potential | None = None,
                   invert: bool = False) -> MMatrix:
    """Assemble the scaled ε-overlap matrix; `invert=True` additionally builds the
    full 0..n−1 block and its inverse in extended precision (requires the
    table built with keep_mp_basis=True, and even n)."""
    if n + band > basis.k_max:
        raise RangeError(f"band {band} around n={n} exceeds basis k_max={basis.k_max}")
    idx = np.arange(n - band, n + band + 1)
    P = basis.psi[idx]
    E = basis.eps_psi[idx]
    Mb = n * (P * basis.weights) @ E.T
    Mb = (Mb - Mb.T) / 2
    even = pot.is_even if pot is not None else True
    if even:
        parity = (idx[:, None] - idx[None, :]) % 2 == 0
        Mb[parity] = 0.0
    out = MMatrix(n=n, band=band, band_block=Mb)
    if invert:
        if table is None or table._mp is None:
            raise RangeError("extended-precision inversion needs a table built "
                             "with keep_mp_basis=True")
        M, Minv, cond = _full_block_extended(table, n, even)
        out.full_block = M
        out.inverse = Minv
        out.inverse_norm = float(np.linalg.norm(Minv, 2))
        out.condition = cond
    return out


def _full_block_extended(table: RecurrenceTable, n: int, even: bool):
    """Full M^{(0,n)} and its inverse from the extended-precision basis.

    For even weights the block is parity-checkerboard: permuting to
    (even indices, odd indices) gives [[0, B], [−Bᵀ, 0]], so only B is
    inverted and the inverse [[0, −B^{-T}], [B^{-1}, 0]] is exactly
    antisymmetric.  n odd is rejected: an odd antisymmetric block is singular.
    """
    if n % 2 != 0:
        raise RangeError("M block inversion requires even n (odd antisymmetric "
                         "matrices are singular)")
    payload = table._mp
    grid: PanelGridMP = payload["grid"]
    psis = payload["psis"]
    dps = payload["dps"]
    if n > len(psis) - 1:
        raise RangeError("extended basis does not cover the requested block")
    mp.mp.dps = dps
    eps = [grid.epsilon(psis[l]) for l in range(n)]
    wpsi = [[w * v for w, v in zip(grid.weights, psis[j])] for j in range(n)]
    nn = mp.mpf(n)
    M = [[mp.mpf(0)] * n for _ in range(n)]
    for j in range(n):
        start = j + 1
        step = 2 if even else 1
        for l in range(start, n, step):
            val = nn * mp.fdot(wpsi[j], eps[l])
            M[j][l] = val
    # antisymmetrize exactly: fill the lower triangle from the computed upper
    for j in range(n):
        for l in range(j):
            M[j][l] = -M[l][j]

    if even:
        ev = list(range(0, n, 2))
        od = list(range(1, n, 2))
        B = mp.matrix(len(ev), len(od))
        for a, j in enumerate(ev):
            for b, l in enumerate(od):
                B[a, b] = M[j][l]
        Binv = B ** -1
        Minv = [[mp.mpf(0)] * n for _ in range(n)]
        for b, l in enumerate(od):
            for a, j in enumerate(ev):
                Minv[l][j] = Binv[b, a]       # B^{-1} block
                Minv[j][l] = -Binv[b, a]      # −B^{-T} block
        Bf = np.array([[float(B[a, b]) for b in range(len(od))] for a in range(len(ev))])
        cond = float(np.linalg.cond(Bf))
    else:
        Mm = mp.matrix(n, n)
        for j in range(n):
            for l in range(n):
                Mm[j, l] = M[j][l]
        Inv = Mm ** -1
        Minv = [[(Inv[j, l] - Inv[l, j]) / 2 for l in range(n)] for j in range(n)]
        cond = float(np.linalg.cond(np.array([[float(M[j][l]) for l in range(n)]
                                              for j in range(n)])))
    if cond > 1e12:
        raise PrecisionError(
            f"M block numerically singular (cond={cond:.3g}, n={n} even={even})")
    Mf = np.array([[float(M[j][l]) for l in range(n)] for j in range(n)])
    Minvf = np.array([[float(Minv[j][l]) for l in range(n)] for j in range(n)])
    return Mf, Minvf, cond
