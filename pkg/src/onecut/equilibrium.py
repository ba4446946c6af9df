"""Equilibrium density of the one-cut model and certification of the support conditions.

The density on [-2,2] is ρ(λ) = P(λ)√(4−λ²)/(2π), with P obtained from the
potential by exact polynomial division against the trigonometric moments of
2cos y.  The effective potential u(λ) = 2∫log|μ−λ|ρ(μ)dμ − V(λ) is evaluated
in closed form through the Chebyshev expansion of P(2cosθ)sin²θ, which makes
the log-kernel integrals exact (no singular quadrature).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .potential import Potential, check_growth
from .quadrature import PanelGrid, QuadSpec


class OneCutViolation(ValueError):
    """P(λ) ≤ 0 somewhere on [−2,2]: the support is not a single interval [−2,2]."""


class InconsistentPotential(ValueError):
    """Equilibrium mass differs from 1: support is not exactly [−2,2]."""


class QuadratureError(RuntimeError):
    pass


def _even_moment(j: int) -> float:
    """(1/2π)∫ (2cos y)^j dy: central binomial for even j, zero for odd."""
    return float(math.comb(j, j // 2)) if j % 2 == 0 else 0.0


def compute_P(pot: Potential) -> np.ndarray:
    """Coefficients (ascending) of P(z) = (1/2π)∫ [V′(z)−V′(2cos y)]/(z−2cos y) dy.

    Exact for polynomial V:  (z^m − w^m)/(z−w) = Σ_{i+j=m−1} z^i w^j, so
    P(z) = Σ_m a_m Σ_{i=0}^{m−1} mom_{m−1−i} z^i with a_m the coefficients of V′.
    """
    a = pot.deriv_coeffs()
    deg = len(a) - 1
    p = np.zeros(max(deg, 1))
    for m in range(1, deg + 1):
        if a[m] == 0.0:
            continue
        for i in range(m):
            p[i] += a[m] * _even_moment(m - 1 - i)
    return p


def _catalan(k: int) -> float:
    return math.comb(2 * k, k) / (k + 1)


def exact_mass(P_coeffs) -> float:
    """∫ P(λ)√(4−λ²)/(2π) dλ = Σ_k P_{2k}·Catalan(k), exact."""
    return float(sum(c * _catalan(k // 2) for k, c in enumerate(P_coeffs) if k % 2 == 0))


def _cheb_coeffs_of_P_sin2(P_coeffs) -> np.ndarray:
    """β_m with P(2cosθ)sin²θ = Σ β_m cos mθ (finite cosine polynomial)."""
    from numpy.polynomial import chebyshev as C
    # P(2x) as a polynomial in x = cosθ, then to Chebyshev basis: T_m(cosθ) = cos mθ
    p2 = np.asarray(P_coeffs) * (2.0 ** np.arange(len(P_coeffs)))
    cheb = C.poly2cheb(p2)
    # sin²θ = ½ − ½T_2
    sin2 = np.zeros(3)
    sin2[0], sin2[2] = 0.5, -0.5
    return C.chebmul(cheb, sin2)


def effective_potential(pot: Potential, P_coeffs, x) -> np.ndarray:
    """u(λ) = 2∫log|μ−λ|ρ(μ)dμ − V(λ), closed form on and off the support."""
    beta = _cheb_coeffs_of_P_sin2(P_coeffs)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    ks = np.arange(1, len(beta))
    inside = np.abs(x) <= 2.0
    if inside.any():
        alpha = np.arccos(np.clip(x[inside] / 2.0, -1.0, 1.0))
        s = -4.0 * np.sum((beta[1:] / ks)[:, None] * np.cos(ks[:, None] * alpha[None, :]),
                          axis=0)
        out[inside] = s - pot.base_value(x[inside])
    if (~inside).any():
        xo = x[~inside]
        xi = np.arccosh(np.abs(xo) / 2.0)
        s = 4.0 * beta[0] * xi - 4.0 * np.sum(
            (beta[1:] / ks)[:, None] * np.exp(-ks[:, None] * xi[None, :]), axis=0)
        out[~inside] = s - pot.base_value(xo)
    return out


@dataclass
class EquilibriumData:
    P_coeffs: np.ndarray
    grid_points: np.ndarray          # sorted, in [-2, 2]
    density_values: np.ndarray
    mass: float
    u_points: np.ndarray             # grid on σ_d
    u_values: np.ndarray
    mass_quadrature_error: float = 0.0

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = np.abs(x) <= 2.0
        val = np.zeros_like(x, dtype=float)
        Px = np.polynomial.polynomial.polyval(x, self.P_coeffs)
        val = np.where(inside, Px * np.sqrt(np.clip(4.0 - x * x, 0.0, None)) / (2 * np.pi), 0.0)
        return val


def compute_density(pot: Potential, grid_size: int = 1001,
                    mass_tol: float = 1e-8) -> EquilibriumData:
    """Equilibrium data for an even polynomial potential with support exactly [−2,2]."""
    P = compute_P(pot)
    xs_chk = np.linspace(-2.0, 2.0, 4001)
    Pvals = np.polynomial.polynomial.polyval(xs_chk, P)
    if Pvals.min() <= 0.0:
        i = int(np.argmin(Pvals))
        raise OneCutViolation(
            f"P({xs_chk[i]:.4f}) = {Pvals[i]:.6g} <= 0: one-cut condition fails")
    mass = exact_mass(P)
    # independent quadrature check of the exact moment formula
    g = PanelGrid(-2.0, 2.0, QuadSpec(32, 16))
    rho_g = (np.polynomial.polynomial.polyval(g.nodes, P)
             * np.sqrt(np.clip(4.0 - g.nodes ** 2, 0.0, None)) / (2 * np.pi))
    mass_q = float(g.integrate(rho_g))
    if abs(mass - 1.0) > mass_tol:
        raise InconsistentPotential(
            f"equilibrium mass {mass:.12g} != 1: support is not exactly [-2,2] "
            f"(rescale the potential; quadrature cross-check {mass_q:.12g})")
    pts = np.linspace(-2.0, 2.0, grid_size)
    dens = (np.polynomial.polynomial.polyval(pts, P)
            * np.sqrt(np.clip(4.0 - pts * pts, 0.0, None)) / (2 * np.pi))
    lo, hi = pot.sigma
    u_pts = np.linspace(lo, hi, grid_size)
    u_vals = effective_potential(pot, P, u_pts)
    return EquilibriumData(P, pts, dens, mass, u_pts, u_vals,
                           mass_quadrature_error=abs(mass_q - mass))


def equilibrium_residual(pot: Potential, eq: EquilibriumData, points,
                         panels: int = 64, tol: float = 1e-6) -> float:
    """max_λ |V′(λ) − 2 PV∫ ρ(μ)/(λ−μ) dμ| at interior points of (−2,2).

    Principal value by singularity subtraction,
    PV∫ ρ(μ)/(λ−μ) dμ = ∫ [ρ(μ)−ρ(λ)]/(λ−μ) dμ + ρ(λ) log|(λ+2)/(2−λ)|,
    with the first integral computed in the θ variable (μ = 2cosθ) where the
    sqrt edge factors are absorbed and the integrand is smooth.
    """
    pts = np.asarray(points, dtype=float)
    if np.any(np.abs(pts) > 1.95):
        raise ValueError("points must be inside (-2,2), at least 0.05 from the edges")

    def pv_residual(npanels: int) -> np.ndarray:
        g = PanelGrid(0.0, np.pi, QuadSpec(npanels, 16))
        mu = 2.0 * np.cos(g.nodes)
        jac = 2.0 * np.sin(g.nodes)
        rho_mu = eq.density(mu)
        res = np.empty_like(pts)
        for i, lam in enumerate(pts):
            rho_l = float(eq.density(np.array([lam]))[0])
            diff = np.where(np.abs(mu - lam) > 1e-14,
                            (rho_mu - rho_l) / (lam - mu), 0.0)
            pv = g.integrate(diff * jac) + rho_l * np.log((lam + 2.0) / (2.0 - lam))
            res[i] = pot.base_value(lam, order=1) - 2.0 * pv
        return res

    r1 = pv_residual(panels)
    r2 = pv_residual(panels * 2)
    est = np.abs(r1 - r2).max()
    if est > max(tol, 10 * np.abs(r2).max() + 1e-12):
        raise QuadratureError(
            f"PV quadrature not converged: refinement changes result by {est:.3g}")
    return float(np.abs(r2).max())


@dataclass
class ConditionReport:
    c1_even: bool
    c1_growth: bool
    c2_c3_positive_P: bool
    c3_edge_exponent: float
    c3_edge_ok: bool
    c4_exterior_max_gap: float
    c4_ok: bool
    witnesses: dict = field(default_factory=dict)

    @property
    def all_pass(self) -> bool:
        return (self.c1_even and self.c1_growth and self.c2_c3_positive_P
                and self.c3_edge_ok and self.c4_ok)

    def as_dict(self) -> dict:
        return {
            "C1_even": self.c1_even,
            "C1_growth": self.c1_growth,
            "C2_C3_P_positive": self.c2_c3_positive_P,
            "C3_edge_exponent": self.c3_edge_exponent,
            "C3_edge_ok": self.c3_edge_ok,
            "C4_exterior_max_gap": self.c4_exterior_max_gap,
            "C4_ok": self.c4_ok,
            "all_pass": self.all_pass,
            "witnesses": self.witnesses,
        }


def verify_one_cut(pot: Potential) -> ConditionReport:
    """Numerically certify the one-cut conditions; returns a report, never raises."""
    witnesses = {}
    c1_even = all(v == 0.0 for v in pot.coeffs[1::2])
    growth_grid = np.concatenate([np.linspace(3.0, 20.0, 35), -np.linspace(3.0, 20.0, 35)])
    gr = check_growth(pot, pot.growth_epsilon, growth_grid)
    if not gr.ok:
        witnesses["growth_worst_point"] = gr.worst_point
    try:
        P = compute_P(pot)
        xs = np.linspace(-2.0, 2.0, 4001)
        Pv = np.polynomial.polynomial.polyval(xs, P)
        c2c3 = bool(Pv.min() > 0.0)
        if not c2c3:
            witnesses["P_nonpositive_at"] = float(xs[int(np.argmin(Pv))])
    except Exception as exc:  # degenerate potential
        witnesses["P_error"] = str(exc)
        return ConditionReport(c1_even, gr.ok, False, float("nan"), False, float("nan"), False,
                               witnesses)
    # edge exponent: log-log slope of ρ against (2−λ) on [1.9, 1.999]
    lam = np.linspace(1.9, 1.999, 60)
    rho = (np.polynomial.polynomial.polyval(lam, P)
           * np.sqrt(4.0 - lam * lam) / (2 * np.pi))
    slope = float("nan")
    edge_ok = False
    if c2c3 and np.all(rho > 0):
        slope = float(np.polyfit(np.log(2.0 - lam), np.log(rho), 1)[0])
        edge_ok = abs(slope - 0.5) <= 0.1
    # C4: u below its on-support maximum strictly outside the support
    c4_gap = float("nan")
    c4_ok = False
    if c2c3:
        inside = np.linspace(-2.0, 2.0, 2001)
        u_in = effective_potential(pot, P, inside)
        u_max = float(u_in.max())
        lo, hi = pot.sigma
        right = np.linspace(2.01, hi, 400)
        outside = np.concatenate([-right, right])
        u_out = effective_potential(pot, P, outside)
        c4_gap = float(u_max - u_out.max())
        c4_ok = bool(np.all(u_out < u_max - 1e-6))
        if not c4_ok:
            witnesses["C4_worst_point"] = float(outside[int(np.argmax(u_out))])
    return ConditionReport(c1_even, gr.ok, c2c3, slope, edge_ok, c4_gap, c4_ok, witnesses)


def quartic_family(g: float, d: float = 1.0) -> Potential:
    """One-cut quartic family V′(λ) = (1−3g)λ + gλ³ with equilibrium mass exactly 1."""
    t = 1.0 - 3.0 * g
    return Potential((0.0, 0.0, t / 2.0, 0.0, g / 4.0), d=d)
