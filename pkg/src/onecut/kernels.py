"""Christoffel-Darboux kernel, the β=1 matrix kernel, and exact variance identities.

The β=1 kernel is assembled from its finite-n definition
    S_n(λ,μ) = −Σ_{i,j<n} ψ_i(λ) (M^{(0,n)})^{-1}_{ij} (n εψ_j)(μ),
with IS_n = ε applied in the first argument and SD_n = −∂_μ S_n, which by
(εψ)' = ψ is again a finite sum of basis products (no numerical
differentiation).  The (2,1) entry carries the ε(λ−μ) subtraction; double
integrals against the sign kernel are reduced to single smooth integrals via
the ε-transform, so no discontinuous integrand ever meets the tensor grid.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .orthopoly import (BasisEvaluation, RecurrenceTable, build_recurrence,
                        evaluate_basis, overlap_matrix)
from .potential import Potential, TestFunction, perturb
from .quadrature import QuadSpec

KERNEL_N_CAP = 128


class AccuracyWarning(UserWarning):
    pass


class KernelRangeError(ValueError):
    pass


def build_basis(pot: Potential, n: int, k_margin: int = 6,
                quad: QuadSpec = QuadSpec(), precision_digits: int = 40,
                keep_mp_basis: bool = False):
    """Recurrence + basis in one go, covering indices 0..n+k_margin."""
    if n > KERNEL_N_CAP:
        raise KernelRangeError(f"orthopoly/kernel path capped at n={KERNEL_N_CAP}")
    K = n + max(k_margin + 2, 8)
    table = build_recurrence(pot, n, K=K, quad=quad,
                             precision_digits=precision_digits,
                             keep_mp_basis=keep_mp_basis)
    basis = evaluate_basis(table, pot, n + k_margin, quad=quad)
    return table, basis


class CDKernel:
    """K_n with both the spectral-sum and Christoffel-Darboux representations."""

    def __init__(self, basis: BasisEvaluation, table: RecurrenceTable, n: int,
                 pot: Potential):
        if n > basis.k_max:
            raise KernelRangeError("basis does not cover 0..n")
        self.basis = basis
        self.table = table
        self.n = n
        self.pot = pot
        self._grid_matrix = None

    def grid_matrix(self) -> np.ndarray:
        """K_n on the quadrature grid (sum form)."""
        if self._grid_matrix is None:
            P = self.basis.psi[: self.n]
            self._grid_matrix = P.T @ P
        return self._grid_matrix

    def sum_form(self, lam, mu) -> np.ndarray:
        from .orthopoly import _forward_recurrence
        pts = np.unique(np.concatenate([np.atleast_1d(lam), np.atleast_1d(mu)]))
        psi, _ = _forward_recurrence(self.table, self.pot, self.n, pts)
        il = np.searchsorted(pts, np.atleast_1d(lam))
        im = np.searchsorted(pts, np.atleast_1d(mu))
        return np.einsum("ki,kj->ij", psi[: self.n][:, il], psi[: self.n][:, im])

    def cd_form(self, lam, mu, confluent_eps: float = 1e-10) -> np.ndarray:
        """J_{n−1}[ψ_n(λ)ψ_{n−1}(μ) − ψ_{n−1}(λ)ψ_n(μ)]/(λ−μ), derivative form on
        the diagonal."""
        from .orthopoly import _forward_recurrence
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        pts = np.unique(np.concatenate([lam, mu]))
        psi, dpsi, _ = _forward_recurrence(self.table, self.pot, self.n, pts,
                                           derivative=True)
        il = np.searchsorted(pts, lam)
        im = np.searchsorted(pts, mu)
        J = self.table.J[self.n - 1]
        pn_l, pm_l = psi[self.n][il], psi[self.n - 1][il]
        pn_m, pm_m = psi[self.n][im], psi[self.n - 1][im]
        num = pn_l[:, None] * pm_m[None, :] - pm_l[:, None] * pn_m[None, :]
        den = lam[:, None] - mu[None, :]
        out = np.empty_like(num)
        far = np.abs(den) >= confluent_eps
        out[far] = J * num[far] / den[far]
        if (~far).any():
            # confluent limit: J [ψ_n'(λ)ψ_{n−1}(λ) − ψ_{n−1}'(λ)ψ_n(λ)]
            dn_l, dm_l = dpsi[self.n][il], dpsi[self.n - 1][il]
            conf = J * (dn_l[:, None] * pm_m[None, :] - dm_l[:, None] * pn_m[None, :])
            out[~far] = conf[~far]
        return out

    def __call__(self, lam, mu) -> np.ndarray:
        return self.cd_form(lam, mu)

    def trace(self) -> float:
        K = self.grid_matrix()
        return float(self.basis.grid.integrate(np.diag(K)))


def cd_kernel(basis: BasisEvaluation, table: RecurrenceTable, n: int,
              pot: Potential) -> CDKernel:
    return CDKernel(basis, table, n, pot)


@dataclass
class KernelBundle:
    """β=1 matrix-kernel data on the quadrature grid."""

    n: int
    basis: BasisEvaluation
    S: np.ndarray                 # S_n(λ_i, μ_j)
    IS: np.ndarray                # (εS)(λ_i, μ_j), ε in the first argument
    SD: np.ndarray                # −∂_μ S_n(λ_i, μ_j)
    M_inv_norm: float
    M_condition: float
    subtract_epsilon_in_21: bool = True
    quad_error_estimate: float = 0.0

    @property
    def nodes(self) -> np.ndarray:
        return self.basis.nodes

    @property
    def weights(self) -> np.ndarray:
        return self.basis.weights

    def trace_diag(self) -> np.ndarray:
        """tr K̂_n(λ,λ) = 2 S_n(λ,λ) at the nodes (the ε term vanishes on the diagonal)."""
        return 2.0 * np.diag(self.S)

    def one_point_density(self) -> np.ndarray:
        """p^{(n)}_{1,1}(λ) = tr K̂_n(λ,λ) / (2n) at the nodes."""
        return self.trace_diag() / (2.0 * self.n)


def build_matrix_kernel(basis: BasisEvaluation, table: RecurrenceTable, n: int,
                        pot: Potential,
                        subtract_epsilon_in_21: bool = True) -> KernelBundle:
    """Assemble S, IS (= ε⊗S), and SD (= −∂_μ S) on the grid.

    Requires even n; the full M block is assembled and inverted in extended
    precision (table must be built with keep_mp_basis=True).
    """
    if n % 2 != 0:
        raise KernelRangeError("matrix kernel requires even n "
                               "(odd antisymmetric M blocks are singular)")
    M = overlap_matrix(basis, n, band=min(4, basis.k_max - n), pot=pot,
                       table=table, invert=True)
    A = M.inverse
    P = basis.psi[:n]
    E = basis.eps_psi[:n]
    S = -(P.T @ A @ (n * E))
    IS = -(E.T @ A @ (n * E))
    SD = P.T @ A @ (n * P)
    err = basis.gram_residual * n
    return KernelBundle(n=n, basis=basis, S=S, IS=IS, SD=SD,
                        M_inv_norm=M.inverse_norm, M_condition=M.condition,
                        subtract_epsilon_in_21=subtract_epsilon_in_21,
                        quad_error_estimate=err)


def _eps_cross_integral(bundle: KernelBundle, F: np.ndarray, a: np.ndarray,
                        b: np.ndarray) -> float:
    """∬ a(λ) b(μ) F(λ,μ) ε(μ−λ) dλ dμ with F given on the grid, via
    ∬ u(λ)v(μ)ε(μ−λ) = −∫ u (εv):  rows of F are smooth in μ."""
    grid = bundle.basis.grid
    w = bundle.weights
    V = F * b[None, :]
    EV = grid.epsilon(V)                   # ε in μ for each λ row
    return float(-np.sum(w * a * np.einsum("ii->i", EV)))


def trace_product_smooth(bundle: KernelBundle) -> np.ndarray:
    """The smooth part of tr(K̂(λ,μ)K̂(μ,λ)) on the grid (without the ε terms)."""
    S, IS, SD = bundle.S, bundle.IS, bundle.SD
    return 2.0 * S * S.T + SD * IS.T + IS * SD.T


def marginalization_residual(bundle: KernelBundle) -> float:
    """max_λ |∫ tr(K̂(λ,μ)K̂(μ,λ)) dμ − tr K̂(λ,λ)|.

    This is the identity behind ∫p_{2,1}dμ = p_{1,1}; it discriminates the
    (2,1) ε-subtraction convention (∫p_{1,1} = 1 provably does not).
    """
    grid = bundle.basis.grid
    w = bundle.weights
    T = trace_product_smooth(bundle) @ w
    if bundle.subtract_epsilon_in_21:
        # corrections −∫SD(λ,μ)ε(μ−λ)dμ − ∫ε(λ−μ)SD(μ,λ)dμ; with
        # ∫ f(μ) ε(μ−λ) dμ = −(εf)(λ) both reduce to the transform.
        ESD_mu = grid.epsilon(bundle.SD)            # ε over the second argument
        term1 = np.einsum("ii->i", ESD_mu)
        ESD_la = grid.epsilon(bundle.SD.T)          # ε over the first argument
        term2 = -np.einsum("ii->i", ESD_la)
        T = T + term1 + term2
    return float(np.abs(T - bundle.trace_diag()).max())


def variance_beta1(bundle: KernelBundle, phi: TestFunction,
                   accuracy_tol: float = 1e-4) -> float:
    """Var N_n[φ] = ¼ ∬ (φ(μ1)−φ(μ2))² tr(K̂(μ1,μ2)K̂(μ2,μ1)) dμ1 dμ2."""
    grid = bundle.basis.grid
    w = bundle.weights
    x = bundle.nodes
    f = phi(x)
    D2 = (f[:, None] - f[None, :]) ** 2
    smooth = 0.25 * (w @ (trace_product_smooth(bundle) * D2) @ w)
    val = smooth
    if bundle.subtract_epsilon_in_21:
        # tr K̂K̂ carries −SD(λ,μ)ε(μ−λ) − ε(λ−μ)SD(μ,λ) = −2 SD(λ,μ)ε(μ−λ)
        # inside the symmetric Δφ² integral; expand Δφ² into separable terms.
        total = 0.0
        ones = np.ones_like(f)
        for a_l, b_m in ((f * f, ones), (-2.0 * f, f), (ones, f * f)):
            total += _eps_cross_integral(bundle, bundle.SD, a_l, b_m)
        val = smooth + 0.25 * (-2.0) * total
    est = bundle.quad_error_estimate * max(1.0, float(np.abs(f).max()) ** 2)
    if est > accuracy_tol * max(abs(val), 1e-6):
        warnings.warn(f"variance quadrature error estimate {est:.2e} exceeds "
                      f"{accuracy_tol:.0e} of the value {val:.6g}", AccuracyWarning)
    return float(val)


def variance_beta2(basis: BasisEvaluation, table: RecurrenceTable, phi: TestFunction,
                   n: int, accuracy_tol: float = 1e-4) -> float:
    """Var N_n[φ] at β=2: ½ ∬ (φ(μ1)−φ(μ2))² K_n²(μ1,μ2) dμ1 dμ2."""
    if n > basis.k_max:
        raise KernelRangeError("basis does not cover 0..n")
    w = basis.weights
    f = phi(basis.nodes)
    P = basis.psi[:n]
    K = P.T @ P
    D2 = (f[:, None] - f[None, :]) ** 2
    val = 0.5 * (w @ (K * K * D2) @ w)
    est = basis.gram_residual * n * max(1.0, float(np.abs(f).max()) ** 2)
    if est > accuracy_tol * max(abs(val), 1e-6):
        warnings.warn(f"variance quadrature error estimate {est:.2e} exceeds "
                      f"{accuracy_tol:.0e} of the value {val:.6g}", AccuracyWarning)
    return float(val)


def variance_error_estimate(gram_residual: float, n: int, phi: TestFunction,
                            sigma_half: float = 3.0) -> float:
    """Orthonormality-driven error bound used for the attached estimates."""
    fmax = float(np.abs(phi(np.linspace(-sigma_half, sigma_half, 64))).max())
    return gram_residual * n * max(1.0, fmax ** 2)


@dataclass
class StabilityRow:
    n: int
    t: float
    variance: float
    delta_from_t0: float
    error_estimate: float = 0.0


def perturbation_stability(pot: Potential, phi_obs: TestFunction,
                           phi_pert: TestFunction, n_list, t_list, beta: int,
                           quad: QuadSpec = QuadSpec(),
                           precision_digits: int = 40) -> list:
    """Var_n[φ_obs; V + t φ_pert/n] over the (n, t) grid, with Var_n(t) − Var_n(0)."""
    if beta not in (1, 2):
        raise KernelRangeError("beta must be 1 or 2")
    rows = []
    for n in n_list:
        if n % 2 != 0 or n > KERNEL_N_CAP:
            raise KernelRangeError(f"n={n} must be even and <= {KERNEL_N_CAP}")
        if any(abs(t) > 2.0 for t in t_list):
            raise KernelRangeError("|t| <= 2 required")
        per_t = {}
        errs = {}
        for t in sorted(set(list(t_list) + [0.0])):
            pert = perturb(pot, phi_pert, t, n)
            table, basis = build_basis(pert, n, quad=quad,
                                       precision_digits=precision_digits,
                                       keep_mp_basis=(beta == 1))
            if beta == 2:
                per_t[t] = variance_beta2(basis, table, phi_obs, n)
            else:
                bundle = build_matrix_kernel(basis, table, n, pert)
                per_t[t] = variance_beta1(bundle, phi_obs)
            errs[t] = variance_error_estimate(basis.gram_residual, n, phi_obs,
                                              sigma_half=pot.sigma[1])
        base = per_t[0.0]
        for t in t_list:
            rows.append(StabilityRow(n=n, t=t, variance=per_t[t],
                                     delta_from_t0=per_t[t] - base,
                                     error_estimate=errs[t]))
    return rows
