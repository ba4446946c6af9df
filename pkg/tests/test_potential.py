import numpy as np
import pytest

from onecut.potential import (ConfigurationError, DomainError, Potential,
                              TestFunction, check_growth, eval_potential,
                              gaussian_potential, perturb)


def test_eval_gaussian_at_two():
    pot = gaussian_potential()
    assert eval_potential(pot, 2.0, order=0) == pytest.approx(2.0)


def test_eval_quartic_value():
    pot = Potential((0.0, 0.0, 0.35, 0.0, 0.025))
    assert eval_potential(pot, 1.0) == pytest.approx(0.375)


def test_derivative_matches_finite_difference():
    pot = Potential((0.0, 0.0, 0.35, 0.0, 0.025))
    x = 1.3
    h = 1e-6
    fd = (eval_potential(pot, x + h) - eval_potential(pot, x - h)) / (2 * h)
    assert eval_potential(pot, x, order=1) == pytest.approx(fd, abs=1e-8)


def test_derivative_fd_on_random_points():
    rng = np.random.default_rng(7)
    pot = Potential((0.1, 0.0, 0.3, 0.0, 0.02, 0.0, 0.001))
    xs = rng.uniform(-3.0, 3.0, 100)
    h = 1e-5
    for x in xs:
        fd = (pot.value(x + h) - pot.value(x - h)) / (2 * h)
        d = pot.value(x, order=1)
        assert abs(d - fd) <= 1e-7 * max(1.0, abs(d))


def test_guard_band():
    pot = gaussian_potential()  # sigma_d = [-3, 3], guard = [-3.3, 3.3]
    eval_potential(pot, 3.25)
    with pytest.raises(DomainError):
        eval_potential(pot, 3.4)


def test_odd_base_rejected():
    with pytest.raises(ConfigurationError):
        Potential((0.0, 1.0, 0.5))


def test_check_growth_quadratic_large_lambda():
    pot = gaussian_potential()
    rep = check_growth(pot, 0.1, np.concatenate([np.arange(3, 11.0), -np.arange(3, 11.0)]))
    assert rep.ok


def test_check_growth_zero_potential_fails():
    pot = Potential((0.0,))
    rep = check_growth(pot, 0.1, [1.0])
    assert not rep.ok
    assert rep.worst_point == 1.0


def test_check_growth_quartic():
    pot = Potential((0.0, 0.0, 0.35, 0.0, 0.025))
    rep = check_growth(pot, 0.5, np.concatenate([np.arange(3, 21.0), -np.arange(3, 21.0)]))
    assert rep.ok
    # the bound genuinely fails near the origin: worst point is reported
    rep_small = check_growth(pot, 0.5, [1.0, 5.0])
    assert not rep_small.ok and rep_small.worst_point == 1.0


def test_perturb_zero_t_identical():
    pot = gaussian_potential()
    p = perturb(pot, TestFunction((0.0, 0.0, 1.0)), 0.0, 10)
    xs = np.linspace(-3, 3, 17)
    assert np.allclose(p.value(xs), pot.value(xs))


def test_perturb_arithmetic():
    pot = gaussian_potential()
    p = perturb(pot, TestFunction((0.0, 0.0, 1.0)), 1.0, 10)
    assert p.value(1.0) == pytest.approx(0.6)


def test_perturb_parity_flag():
    pot = gaussian_potential()
    assert perturb(pot, TestFunction((0.0, 1.0)), 1.0, 10).is_even is False
    assert perturb(pot, TestFunction((0.0, 0.0, 1.0)), 1.0, 10).is_even is True
    assert perturb(pot, TestFunction((0.0, 1.0)), 0.0, 10).is_even is True


def test_perturb_linear_in_t():
    rng = np.random.default_rng(3)
    pot = gaussian_potential()
    phi = TestFunction((0.2, 0.5, 1.0))
    xs = rng.uniform(-3, 3, 100)
    t1, t2, n = 0.4, -1.1, 20
    lhs = perturb(pot, phi, t1 + t2, n).value(xs)
    rhs = perturb(pot, phi, t1, n).value(xs) + (t2 / n) * phi(xs)
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-14)


def test_degree_limits():
    with pytest.raises(ConfigurationError):
        TestFunction(tuple(range(10)))
    with pytest.raises(ConfigurationError):
        Potential(tuple([0.0] * 13 + [1.0]))
