import numpy as np
import pytest

from onecut.kernels import (KernelRangeError, build_basis, build_matrix_kernel,
                            cd_kernel, marginalization_residual,
                            perturbation_stability, variance_beta1, variance_beta2)
from onecut.potential import TestFunction, gaussian_potential
from tests.conftest import cached_build

PHI_ID = TestFunction((0.0, 1.0))
PHI_SQ = TestFunction((0.0, 0.0, 1.0))


@pytest.fixture(scope="module")
def gauss16():
    pot = gaussian_potential()
    table, basis = build_basis(pot, 16, keep_mp_basis=True)
    return pot, table, basis


@pytest.fixture(scope="module")
def bundle16(gauss16):
    pot, table, basis = gauss16
    return build_matrix_kernel(basis, table, 16, pot)


def test_cd_trace_is_n(gauss_n40):
    pot, table, basis = gauss_n40
    K = cd_kernel(basis, table, 40, pot)
    assert K.trace() == pytest.approx(40.0, abs=1e-7)


def test_cd_symmetry(gauss_n40, rng):
    pot, table, basis = gauss_n40
    K = cd_kernel(basis, table, 40, pot)
    pts = rng.uniform(-2.5, 2.5, 12)
    G = K.sum_form(pts, pts)
    assert np.abs(G - G.T).max() <= 1e-9


def test_cd_sum_vs_cd_form(gauss_n40, rng):
    pot, table, basis = gauss_n40
    K = cd_kernel(basis, table, 40, pot)
    lam = rng.uniform(-2.8, 2.8, 50)
    mu = rng.uniform(-2.8, 2.8, 50)
    a = K.sum_form(lam, mu)
    b = K.cd_form(lam, mu)
    assert np.abs(a - b).max() <= 1e-8


def test_cd_confluent_diagonal(gauss_n40):
    pot, table, basis = gauss_n40
    K = cd_kernel(basis, table, 40, pot)
    lam = np.array([0.3, 1.1])
    diag_conf = np.diag(K.cd_form(lam, lam))
    diag_sum = np.diag(K.sum_form(lam, lam))
    assert np.abs(diag_conf - diag_sum).max() <= 1e-7


def test_cd_reproducing(gauss_n40, rng):
    pot, table, basis = gauss_n40
    K = cd_kernel(basis, table, 40, pot)
    Kg = K.grid_matrix()
    w = basis.weights
    lam_idx = rng.integers(0, basis.nodes.size, 20)
    mu_idx = rng.integers(0, basis.nodes.size, 20)
    lhs = (Kg[lam_idx] * w) @ Kg[:, mu_idx]
    rhs = Kg[np.ix_(lam_idx, mu_idx)]
    assert np.abs(np.diag(lhs) - np.diag(rhs)).max() <= 1e-6


def test_beta2_density_near_semicircle():
    pot, table, basis = cached_build("gauss", 60, K=70)
    K = cd_kernel(basis, table, 60, pot)
    dens = np.diag(K.grid_matrix()) / 60.0
    x = basis.nodes
    semi = np.where(np.abs(x) < 2, np.sqrt(np.clip(4 - x * x, 0, None)) / (2 * np.pi), 0.0)
    l1 = basis.grid.integrate(np.abs(dens - semi))
    assert l1 <= 0.05


def test_matrix_kernel_requires_even_n(gauss16):
    pot, table, basis = gauss16
    with pytest.raises(KernelRangeError):
        build_matrix_kernel(basis, table, 15, pot)


def test_p11_normalization(bundle16):
    w = bundle16.weights
    assert w @ bundle16.one_point_density() == pytest.approx(1.0, abs=1e-6)


def test_p11_insensitive_to_convention(gauss16):
    # int p11 = 1 holds with either (2,1) convention: the discriminating check
    # is the marginalization identity below
    pot, table, basis = gauss16
    off = build_matrix_kernel(basis, table, 16, pot, subtract_epsilon_in_21=False)
    assert off.weights @ off.one_point_density() == pytest.approx(1.0, abs=1e-6)


def test_marginalization_discriminates_convention():
    pot = gaussian_potential()
    for n in (2, 4):
        table, basis = build_basis(pot, n, keep_mp_basis=True)
        good = build_matrix_kernel(basis, table, n, pot)
        bad = build_matrix_kernel(basis, table, n, pot, subtract_epsilon_in_21=False)
        assert marginalization_residual(good) <= 1e-4
        assert marginalization_residual(bad) > 1e-3


def test_matrix_kernel_beta1_density_mc_n2(rng):
    # brute-force rejection sampler of the 2-eigenvalue density confined to sigma_d
    pot = gaussian_potential()
    table, basis = build_basis(pot, 2, keep_mp_basis=True)
    bundle = build_matrix_kernel(basis, table, 2, pot)
    sigma = 1.3
    nprop = 2_000_000
    lam = rng.normal(0.0, sigma, size=(nprop, 2))
    inside = (np.abs(lam) <= 3.0).all(axis=1)
    lam = lam[inside]
    logr = (-0.5 * (lam ** 2).sum(axis=1) + 0.5 * (lam ** 2).sum(axis=1) / sigma ** 2
            + np.log(np.abs(lam[:, 0] - lam[:, 1]) + 1e-300))
    logM = logr.max()
    keep = rng.random(lam.shape[0]) < np.exp(logr - logM)
    samples = lam[keep].ravel()
    edges = np.linspace(-3, 3, 65)
    hist, _ = np.histogram(samples, bins=edges, density=True)
    centers = (edges[:-1] + edges[1:]) / 2
    p11 = np.interp(centers, bundle.nodes, bundle.one_point_density())
    assert np.abs(hist - p11).max() <= 0.02


def test_variance_beta1_linear_statistic(bundle16):
    # Tr M is exactly Gaussian with variance 2 under the beta=1 density
    assert variance_beta1(bundle16, PHI_ID) == pytest.approx(2.0, abs=1e-3)


def test_variance_beta1_constant_phi(bundle16):
    assert variance_beta1(bundle16, TestFunction((3.7,))) == pytest.approx(0.0, abs=1e-12)


def test_variance_beta1_square(bundle16):
    n = 16
    assert variance_beta1(bundle16, PHI_SQ) == pytest.approx(4.0 + 4.0 / n, abs=2e-2)


def test_variance_beta2_linear(gauss16):
    pot, table, basis = gauss16
    assert variance_beta2(basis, table, PHI_ID, 16) == pytest.approx(1.0, abs=1e-6)


def test_variance_beta2_constant(gauss16):
    pot, table, basis = gauss16
    assert variance_beta2(basis, table, TestFunction((1.0,)), 16) == 0.0


def test_variance_ratio(gauss16, bundle16):
    pot, table, basis = gauss16
    v1 = variance_beta1(bundle16, PHI_ID)
    v2 = variance_beta2(basis, table, PHI_ID, 16)
    assert v1 / v2 == pytest.approx(2.0, abs=1e-2)


def test_variance_monotone_stability():
    pot = gaussian_potential()
    vs = {}
    for n in (16, 32, 64):
        table, basis = build_basis(pot, n, keep_mp_basis=True)
        bundle = build_matrix_kernel(basis, table, n, pot)
        vs[n] = variance_beta1(bundle, PHI_SQ)
        assert abs(vs[n] - 4.0) <= 6.0 / n
    # Cauchy property of the variance ladder: |Var_2n - Var_n| decreasing
    assert abs(vs[64] - vs[32]) < abs(vs[32] - vs[16])


def test_beta1_density_near_semicircle():
    pot = gaussian_potential()
    table, basis = build_basis(pot, 60, keep_mp_basis=True)
    bundle = build_matrix_kernel(basis, table, 60, pot)
    x = bundle.nodes
    semi = np.where(np.abs(x) < 2, np.sqrt(np.clip(4 - x * x, 0, None)) / (2 * np.pi), 0.0)
    l1 = basis.grid.integrate(np.abs(bundle.one_point_density() - semi))
    assert l1 <= 0.08


def test_lipschitz_in_phi():
    # |Var_n[phi + d*l] - Var_n[phi]|^{1/2} <= C d with C stable in n
    pot = gaussian_potential()
    consts = []
    for n in (16, 32):
        table, basis = build_basis(pot, n)
        base = variance_beta2(basis, table, PHI_SQ, n)
        for d in (0.05, 0.1):
            shifted = TestFunction((0.0, d, 1.0))
            v = variance_beta2(basis, table, shifted, n)
            consts.append(abs(v - base) ** 0.5 / d)
    assert max(consts) <= 2.0 * min(consts)


def test_perturbation_stability_beta2_gaussian():
    # V + t l^2/n is Gaussian with rescaled variance: Var(Tr M) = (1+2t/n)^{-1}
    pot = gaussian_potential()
    rows = perturbation_stability(pot, PHI_ID, PHI_SQ, [16], [-1.0, 0.0, 1.0], beta=2)
    for r in rows:
        expected = 1.0 / (1.0 + 2.0 * r.t / r.n)
        assert r.variance == pytest.approx(expected, abs=1e-5)
        if r.t == 0.0:
            assert r.delta_from_t0 == 0.0


def test_quartic_beta1_variance_vs_mc():
    # no closed form exists for the quartic at beta=1: the kernel quadrature and
    # the log-gas sampler must agree as independent routes
    from onecut.equilibrium import quartic_family
    from onecut.sampler import SamplerConfig, sample_log_gas
    pot = quartic_family(0.1)
    n = 24
    table, basis = build_basis(pot, n, keep_mp_basis=True)
    bundle = build_matrix_kernel(basis, table, n, pot)
    kv = variance_beta1(bundle, PHI_ID)
    cfg = SamplerConfig(n=n, beta=1, pot=pot, chains=4, sweeps=6000, burnin=600,
                        master_seed=271)
    batch = sample_log_gas(cfg)
    s = batch.configs.sum(axis=1)
    mc = s.var(ddof=1)
    se = mc * np.sqrt(2.0 / batch.ess)
    assert abs(mc - kv) <= 3 * se
    # beta1/beta2 ratio approaches 2 off the Gaussian case as well
    kv2 = variance_beta2(basis, table, PHI_ID, n)
    assert kv / kv2 == pytest.approx(2.0, abs=0.1)


def test_perturbation_stability_beta1_odd_perturbation():
    # odd phi_pert breaks parity: exercises the generic extended-precision
    # inversion; V + t l/n is a shifted Gaussian, so Var(Tr M) stays exactly 2
    pot = gaussian_potential()
    rows = perturbation_stability(pot, PHI_ID, PHI_ID, [8], [0.5], beta=1)
    assert rows[0].variance == pytest.approx(2.0, abs=2e-3)


def test_perturbation_stability_validation():
    pot = gaussian_potential()
    with pytest.raises(KernelRangeError):
        perturbation_stability(pot, PHI_ID, PHI_SQ, [15], [0.0], beta=2)
    with pytest.raises(KernelRangeError):
        perturbation_stability(pot, PHI_ID, PHI_SQ, [16], [3.0], beta=2)
