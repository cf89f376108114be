"""Time-periodic perturbations U(t, x) of the Kepler problem.

All callables are vectorized: ``t`` has shape (M,) (or is a scalar) and
``x`` has shape (M, 2).  Built-in families cover linear forcing
``<p(t), x>``, radial powers ``a |x|^beta`` with ``beta < 2``, radial powers
with a trigonometric time modulation, and sums of these.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import GrowthViolation

Array = np.ndarray


@dataclass(frozen=True)
class Growth:
    """Constants of the bound ``|U(t, x)| <= C (1 + |x|^alpha)``."""

    C: float
    alpha: float

    def __post_init__(self):
        if self.C < 0:
            raise ValueError("growth constant C must be nonnegative")
        if not 0 < self.alpha < 2:
            raise ValueError("growth exponent alpha must lie in (0, 2)")


def _broadcast(t, x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:1])
    return t, x


@dataclass(frozen=True, eq=False)
class Potential:
    period: float
    value: Callable[[Array, Array], Array]
    gradient: Callable[[Array, Array], Array]
    time_derivative: Callable[[Array, Array], Array]
    growth: Growth
    name: str = "custom"

    def __call__(self, t, x) -> Array:
        return self.eval(t, x)

    def eval(self, t, x) -> Array:
        return self.value(*_broadcast(t, x))

    def grad_x(self, t, x) -> Array:
        return self.gradient(*_broadcast(t, x))

    def dt(self, t, x) -> Array:
        return self.time_derivative(*_broadcast(t, x))

    def __add__(self, other: "Potential") -> "Potential":
        if not np.isclose(self.period, other.period):
            raise ValueError("cannot add potentials with different periods")
        g1, g2 = self.growth, other.growth
        if g1.alpha == g2.alpha:
            growth = Growth(g1.C + g2.C, g1.alpha)
        else:
            # |x|^a <= 1 + |x|^b for a < b
            growth = Growth(2 * (g1.C + g2.C), max(g1.alpha, g2.alpha))
        return Potential(
            self.period,
            lambda t, x: self.value(t, x) + other.value(t, x),
            lambda t, x: self.gradient(t, x) + other.gradient(t, x),
            lambda t, x: self.time_derivative(t, x) + other.time_derivative(t, x),
            growth,
            f"{self.name}+{other.name}",
        )

    def with_growth(self, C: float, alpha: float) -> "Potential":
        """Same potential with user-claimed growth constants (checked by validate_growth)."""
        return Potential(self.period, self.value, self.gradient, self.time_derivative, Growth(C, alpha), self.name)


@dataclass(frozen=True, eq=False)
class ForcingTerm:
    period: float
    p: Callable[[Array], Array]
    dp: Callable[[Array], Array]

    def __call__(self, t) -> Array:
        return self.p(np.asarray(t, dtype=float))


def fourier_forcing(
    period: float,
    cos: Sequence[float] = (),
    sin: Sequence[float] = (),
    constant: Sequence[float] = (0.0, 0.0),
) -> ForcingTerm:
    """Forcing ``p(t) = p0 + sum_n (a_n cos(n w t) + b_n sin(n w t))``, ``w = 2 pi / T``.

    ``cos`` and ``sin`` are flat lists of planar coefficients for harmonics
    n = 1, 2, ... in the order ``a_1x, a_1y, a_2x, a_2y, ...``.
    """
    a = np.asarray(cos, dtype=float).reshape(-1, 2) if len(cos) else np.zeros((0, 2))
    b = np.asarray(sin, dtype=float).reshape(-1, 2) if len(sin) else np.zeros((0, 2))
    m = max(len(a), len(b))
    a = np.vstack([a, np.zeros((m - len(a), 2))])
    b = np.vstack([b, np.zeros((m - len(b), 2))])
    p0 = np.asarray(constant, dtype=float)
    om = 2 * np.pi / period
    harm = np.arange(1, m + 1)

    def p(t):
        t = np.asarray(t, dtype=float)
        ph = np.multiply.outer(t, harm) * om
        return p0 + np.cos(ph) @ a + np.sin(ph) @ b

    def dp(t):
        t = np.asarray(t, dtype=float)
        ph = np.multiply.outer(t, harm) * om
        return om * ((-np.sin(ph) * harm) @ a + (np.cos(ph) * harm) @ b)

    return ForcingTerm(period, p, dp)


def constant_forcing(period: float, p) -> ForcingTerm:
    return fourier_forcing(period, constant=p)


def linear_potential(forcing: ForcingTerm, grid: int = 4096) -> Potential:
    """``U(t, x) = <p(t), x>`` with C = max |p| over a dense time grid, alpha = 1."""
    ts = np.linspace(0.0, forcing.period, grid, endpoint=False)
    pmax = float(np.max(np.hypot(*np.atleast_2d(forcing.p(ts)).T)))
    return Potential(
        forcing.period,
        lambda t, x: np.einsum("ij,ij->i", np.atleast_2d(forcing.p(t)) * np.ones_like(x), x),
        lambda t, x: np.atleast_2d(forcing.p(t)) * np.ones_like(x),
        lambda t, x: np.einsum("ij,ij->i", np.atleast_2d(forcing.dp(t)) * np.ones_like(x), x),
        Growth(pmax, 1.0),
        "linear",
    )


def zero_potential(period: float) -> Potential:
    return Potential(
        period,
        lambda t, x: np.zeros(len(x)),
        lambda t, x: np.zeros_like(x),
        lambda t, x: np.zeros(len(x)),
        Growth(0.0, 1.0),
        "zero",
    )


def radial_power(period: float, coefficient: float, exponent: float) -> Potential:
    """``U(t, x) = a |x|^beta`` for ``1 <= beta < 2`` (C^1 at the origin needs beta >= 1)."""
    return trig_radial_potential(period, exponent, constant=coefficient)


def trig_radial_potential(
    period: float,
    exponent: float,
    cos: Sequence[float] = (),
    sin: Sequence[float] = (),
    constant: float = 0.0,
) -> Potential:
    """``U(t, x) = m(t) |x|^beta`` with ``m(t) = c0 + sum_n (a_n cos n w t + b_n sin n w t)``."""
    if not 1.0 <= exponent < 2.0:
        raise ValueError("exponent must lie in [1, 2)")
    a = np.asarray(cos, dtype=float)
    b = np.asarray(sin, dtype=float)
    m = max(len(a), len(b))
    a = np.concatenate([a, np.zeros(m - len(a))])
    b = np.concatenate([b, np.zeros(m - len(b))])
    harm = np.arange(1, m + 1)
    om = 2 * np.pi / period
    beta = float(exponent)

    def mod(t):
        ph = np.multiply.outer(t, harm) * om
        return constant + np.cos(ph) @ a + np.sin(ph) @ b

    def dmod(t):
        ph = np.multiply.outer(t, harm) * om
        return om * ((-np.sin(ph) * harm) @ a + (np.cos(ph) * harm) @ b)

    def radius(x):
        return np.hypot(x[:, 0], x[:, 1])

    def value(t, x):
        return mod(t) * radius(x) ** beta

    def gradient(t, x):
        r = radius(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = np.where(r > 0, beta * r ** (beta - 2.0), 0.0)
        return (mod(t) * fac)[:, None] * x

    def time_derivative(t, x):
        return dmod(t) * radius(x) ** beta

    C = abs(constant) + float(np.sum(np.abs(a)) + np.sum(np.abs(b)))
    return Potential(period, value, gradient, time_derivative, Growth(C, beta), "radial")


@dataclass(frozen=True)
class GrowthReport:
    max_ratio: float
    C: float
    alpha: float
    passed: bool
    witness: tuple[float, float, float] | None  # (t, x1, x2) attaining the max ratio


def validate_growth(
    U: Potential,
    radius_set: Sequence[float],
    samples_per_radius: int = 64,
    seed: int = 0,
) -> GrowthReport:
    """Sample |U| on circles at random times and check the subquadratic bound."""
    radii = np.asarray(radius_set, dtype=float)
    if radii.size == 0 or np.any(radii <= 0):
        raise ValueError("radius_set must be nonempty and positive")
    rng = np.random.default_rng(seed)
    C, alpha = U.growth.C, U.growth.alpha
    best, witness = -np.inf, None
    for R in radii:
        phi = rng.uniform(0, 2 * np.pi, samples_per_radius)
        t = rng.uniform(0, U.period, samples_per_radius)
        x = R * np.column_stack([np.cos(phi), np.sin(phi)])
        ratio = np.abs(U.eval(t, x)) / (1 + R**alpha)
        k = int(np.argmax(ratio))
        if ratio[k] > best:
            best, witness = float(ratio[k]), (float(t[k]), float(x[k, 0]), float(x[k, 1]))
    passed = best <= C * (1 + 1e-9)
    if not passed:
        raise GrowthViolation(
            f"|U| / (1 + |x|^{alpha}) reached {best:.6g} > C = {C:.6g} at (t, x) = {witness}",
            witness,
        )
    return GrowthReport(best, C, alpha, passed, witness)
