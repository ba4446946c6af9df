"""Shared fixtures: recurrence tables and bases are expensive, so cache them per session."""
import numpy as np
import pytest

from onecut.equilibrium import quartic_family
from onecut.orthopoly import build_recurrence, evaluate_basis
from onecut.potential import gaussian_potential

_cache = {}


def cached_build(pot_key, n, K=None, keep_mp_basis=False, k_max=None):
    """(table, basis) for the named potential, built once per parameter set."""
    key = (pot_key, n, K, keep_mp_basis, k_max)
    if key not in _cache:
        pot = {"gauss": gaussian_potential(), "quartic": quartic_family(0.1)}[pot_key]
        table = build_recurrence(pot, n, K=K, keep_mp_basis=keep_mp_basis)
        km = k_max if k_max is not None else table.K - 1
        basis = evaluate_basis(table, pot, km)
        _cache[key] = (pot, table, basis)
    return _cache[key]


@pytest.fixture(scope="session")
def gauss_n40():
    return cached_build("gauss", 40, K=52)


@pytest.fixture(scope="session")
def gauss_n80():
    return cached_build("gauss", 80, K=92)


@pytest.fixture(scope="session")
def quartic_n40():
    return cached_build("quartic", 40, K=52)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260809)
