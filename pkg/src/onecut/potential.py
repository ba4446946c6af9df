"""Confining potentials, test functions, and scaled perturbations on the working interval."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MAX_V_DEGREE = 12
MAX_PHI_DEGREE = 8


class DomainError(ValueError):
    """Evaluation point outside the guard band around the working interval."""


class ConfigurationError(ValueError):
    """Ill-formed potential or test-function parameters."""


def _polyval(coeffs, x, order=0):
    c = np.asarray(coeffs, dtype=float)
    if order == 1:
        c = c[1:] * np.arange(1, len(c)) if len(c) > 1 else np.zeros(1)
    return np.polynomial.polynomial.polyval(x, c if len(c) else np.zeros(1))


@dataclass(frozen=True)
class TestFunction:
    """Polynomial test function for linear statistics, coefficients in ascending powers."""

    __test__ = False  # not a pytest collectable

    coeffs: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in self.coeffs)
        if len(c) == 0:
            c = (0.0,)
        if len(c) - 1 > MAX_PHI_DEGREE:
            raise ConfigurationError(
                f"test function degree {len(c) - 1} exceeds {MAX_PHI_DEGREE}")
        if not all(math.isfinite(v) for v in c):
            raise ConfigurationError("test function coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_even(self) -> bool:
        return all(v == 0.0 for v in self.coeffs[1::2])

    def __call__(self, x, order: int = 0):
        return _polyval(self.coeffs, x, order)

    def __add__(self, other: "TestFunction") -> "TestFunction":
        n = max(len(self.coeffs), len(other.coeffs))
        a = np.zeros(n)
        a[: len(self.coeffs)] += self.coeffs
        a[: len(other.coeffs)] += other.coeffs
        return TestFunction(tuple(a))


@dataclass(frozen=True)
class Potential:
    """Even polynomial confinement V, optionally perturbed to V + tφ/n.

    `coeffs` are ascending monomial coefficients of the base V (odd entries must
    vanish).  The working interval is σ_d = [−2−d, 2+d]; `d1` is the analyticity
    strip half-width, stored as metadata only.  `growth_epsilon` records the ε
    for which the logarithmic growth bound was certified on the documented grid
    (|λ| ∈ [3, 20]).
    """

    coeffs: tuple
    d: float = 1.0
    d1: float = 1.0
    growth_epsilon: float = 0.1
    perturbation: tuple = field(default=None)  # (phi: TestFunction, t: float, n: int)

    def __post_init__(self):
        c = tuple(float(v) for v in self.coeffs)
        if len(c) - 1 > MAX_V_DEGREE:
            raise ConfigurationError(f"potential degree {len(c) - 1} exceeds {MAX_V_DEGREE}")
        if any(v != 0.0 for v in c[1::2]):
            raise ConfigurationError("base potential must be even: odd coefficients nonzero")
        if not all(math.isfinite(v) for v in c):
            raise ConfigurationError("potential coefficients must be finite")
        if self.d <= 0 or self.d1 <= 0:
            raise ConfigurationError("interval extensions d, d1 must be positive")
        object.__setattr__(self, "coeffs", c)

    @property
    def sigma(self) -> tuple:
        return (-2.0 - self.d, 2.0 + self.d)

    @property
    def guard_band(self) -> tuple:
        half = (2.0 + self.d) * 1.1
        return (-half, half)

    @property
    def is_even(self) -> bool:
        """Effective parity of V_t (perturbations by odd φ break it)."""
        if self.perturbation is None:
            return True
        phi, t, _n = self.perturbation
        return t == 0.0 or phi.is_even

    def deriv_coeffs(self) -> np.ndarray:
        """Ascending coefficients of V′ of the base potential."""
        c = np.asarray(self.coeffs)
        return c[1:] * np.arange(1, len(c)) if len(c) > 1 else np.zeros(1)

    def base_value(self, x, order: int = 0):
        return _polyval(self.coeffs, x, order)

    def value(self, x, order: int = 0):
        """V_t(x) (order 0) or V_t′(x) (order 1), without the guard-band check."""
        out = _polyval(self.coeffs, x, order)
        if self.perturbation is not None:
            phi, t, n = self.perturbation
            if t != 0.0:
                out = out + (t / n) * phi(x, order)
        return out


def eval_potential(pot: Potential, x, order: int = 0):
    """Evaluate V_t or V_t′ at x; x must lie within σ_d extended by 10%."""
    if order not in (0, 1):
        raise ConfigurationError("order must be 0 or 1")
    lo, hi = pot.guard_band
    xa = np.asarray(x, dtype=float)
    if np.any(xa < lo) or np.any(xa > hi):
        raise DomainError(f"evaluation point outside guard band [{lo:g}, {hi:g}]")
    out = pot.value(xa, order)
    return float(out) if np.isscalar(x) else out


@dataclass(frozen=True)
class GrowthReport:
    ok: bool
    epsilon: float
    worst_point: float
    worst_margin: float  # min over the grid of |V| − 2(1+ε)log(1+|λ|)


def check_growth(pot: Potential, epsilon: float, grid) -> GrowthReport:
    """Pure predicate: |V(λ)| ≥ 2(1+ε)log(1+|λ|) at every grid point."""
    if epsilon <= 0:
        raise ConfigurationError("epsilon must be positive")
    g = np.asarray(grid, dtype=float)
    if g.size == 0:
        raise ConfigurationError("grid must be nonempty")
    margin = np.abs(pot.base_value(g)) - 2.0 * (1.0 + epsilon) * np.log1p(np.abs(g))
    i = int(np.argmin(margin))
    return GrowthReport(bool(margin[i] >= 0.0), epsilon, float(g[i]), float(margin[i]))


def perturb(pot: Potential, phi: TestFunction, t: float, n: int) -> Potential:
    """Attach the scaled perturbation tφ/n; n ≥ 2 and deg φ ≤ 8 enforced."""
    if n < 2:
        raise ConfigurationError("perturbation requires n >= 2")
    if phi.degree > MAX_PHI_DEGREE:
        raise ConfigurationError(f"test function degree {phi.degree} exceeds {MAX_PHI_DEGREE}")
    return Potential(pot.coeffs, pot.d, pot.d1, pot.growth_epsilon,
                     perturbation=(phi, float(t), int(n)))


def gaussian_potential(d: float = 1.0) -> Potential:
    """V(λ) = λ²/2, the exactly solvable reference case."""
    return Potential((0.0, 0.0, 0.5), d=d)
