"""Closed-form test paths: circles, Kepler ellipses, parabolic bounces, radial collision orbits."""

from __future__ import annotations

import numpy as np

from .kepler_arcs import KAPPA, S0
from .loops import LoopPath


def circular_orbit(period: float, n: int, winding: int = 1, phase: float = 0.0) -> LoopPath:
    """Exact circular Kepler solution with the given number of turns per period."""
    om = 2 * np.pi * winding / period
    r = abs(om) ** (-2.0 / 3.0)
    t = np.arange(n) * (period / n)
    ph = om * t + phase
    x = r * np.column_stack([np.cos(ph), np.sin(ph)])
    v = r * om * np.column_stack([-np.sin(ph), np.cos(ph)])
    return LoopPath(period, x, v)


def circle_loop(period: float, n: int, radius: float = 1.0, turns: int = 1, center=(0.0, 0.0)) -> LoopPath:
    """Uniformly parametrized circle (not a Kepler solution unless the radius matches)."""
    om = 2 * np.pi * turns / period
    t = np.arange(n) * (period / n)
    x = np.asarray(center) + radius * np.column_stack([np.cos(om * t), np.sin(om * t)])
    v = radius * om * np.column_stack([-np.sin(om * t), np.cos(om * t)])
    return LoopPath(period, x, v)


def solve_kepler(mean_anomaly, e: float, iters: int = 60) -> np.ndarray:
    """Eccentric anomaly from ``E - e sin E = M`` (vectorized, 0 <= e <= 1)."""
    M = np.mod(np.asarray(mean_anomaly, dtype=float), 2 * np.pi)
    flip = M > np.pi
    m = np.where(flip, 2 * np.pi - M, M)
    E = np.where(e > 0.8, np.cbrt(6 * m), m + e * np.sin(m))
    E = np.clip(E, 0.0, np.pi)
    for _ in range(iters):
        f = E - e * np.sin(E) - m
        fp = 1 - e * np.cos(E)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(fp > 0, f / fp, 0.0)
        E = np.clip(E - step, 0.0, np.pi)
    return np.where(flip, 2 * np.pi - E, E)


def kepler_ellipse(period: float, n: int, eccentricity: float, periapsis_angle: float = 0.0, t_peri: float = 0.0) -> LoopPath:
    """Bound Kepler orbit of the given period, sampled through Kepler's equation."""
    e = eccentricity
    a = (period / (2 * np.pi)) ** (2.0 / 3.0)
    nmot = 2 * np.pi / period
    t = np.arange(n) * (period / n)
    E = solve_kepler(nmot * (t - t_peri), e)
    b = a * np.sqrt(1 - e * e)
    Edot = nmot / (1 - e * np.cos(E))
    x = np.column_stack([a * (np.cos(E) - e), b * np.sin(E)])
    v = np.column_stack([-a * np.sin(E) * Edot, b * np.cos(E) * Edot])
    c, s = np.cos(periapsis_angle), np.sin(periapsis_angle)
    R = np.array([[c, -s], [s, c]])
    return LoopPath(period, x @ R.T, v @ R.T)


def _radial_leg(duration: float, tau: np.ndarray):
    """Ejection-collision orbit on a ray: radius and radial speed at times tau in [0, duration]."""
    a = (duration / (2 * np.pi)) ** (2.0 / 3.0)
    E = solve_kepler(2 * np.pi * tau / duration, 1.0)
    r = a * (1 - np.cos(E))
    with np.errstate(divide="ignore", invalid="ignore"):
        rdot = np.where(r > 0, np.sin(E) / (np.sqrt(a) * (1 - np.cos(E))), 0.0)
    return r, rdot


def radial_legs(period: float, n: int, legs) -> LoopPath:
    """Concatenate radial ejection-collision legs ``[(duration, direction), ...]``.

    Each leg starts and ends at a collision; durations must sum to the period
    and every collision instant must land on a grid node.
    """
    durations = [float(d) for d, _ in legs]
    if not np.isclose(sum(durations), period):
        raise ValueError("leg durations must add up to the period")
    h = period / n
    t = np.arange(n) * h
    x = np.zeros((n, 2))
    v = np.zeros((n, 2))
    start = 0.0
    for duration, direction in legs:
        if abs(start / h - round(start / h)) > 1e-9:
            raise ValueError("collision instants must sit on grid nodes")
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        mask = (t >= start - 1e-12 * period) & (t < start + duration - 1e-12 * period)
        r, rdot = _radial_leg(duration, t[mask] - start)
        x[mask] = r[:, None] * d
        v[mask] = rdot[:, None] * d
        start += duration
    return LoopPath(period, x, v)


def radial_collision_orbit(period: float, n: int, direction=(1.0, 0.0)) -> LoopPath:
    """Generalized periodic solution with one collision per period and equal in/out directions."""
    return radial_legs(period, n, [(period, direction)])


def zeta0(t, x_minus, x_plus) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    r = KAPPA * np.abs(t) ** (2.0 / 3.0)
    d = np.where((t >= 0)[:, None], np.asarray(x_plus, float), np.asarray(x_minus, float))
    return r[:, None] * d


def zeta0_velocity(t, x_minus, x_plus) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    with np.errstate(divide="ignore"):
        sp = np.where(t != 0, (2.0 / 3.0) * KAPPA * np.abs(t) ** (-1.0 / 3.0), 0.0)
    sgn = np.sign(t)
    d = np.where((t >= 0)[:, None], np.asarray(x_plus, float), np.asarray(x_minus, float))
    return (sgn * sp)[:, None] * d


def _hermite(p0, m0, p1, m1, s):
    s = s[:, None]
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    d00 = 6 * s**2 - 6 * s
    d10 = 3 * s**2 - 4 * s + 1
    d01 = -6 * s**2 + 6 * s
    d11 = 3 * s**2 - 2 * s
    pos = h00 * p0 + h10 * m0 + h01 * p1 + h11 * m1
    der = d00 * p0 + d10 * m0 + d01 * p1 + d11 * m1
    return pos, der


def zeta0_bounce_path(
    n: int = 2048,
    x_minus=(1.0, 0.0),
    x_plus=(0.0, 1.0),
    closing_duration: float = 2.0,
    drift=(0.0, 0.0),
    offset_fraction: float = 0.0,
    speed_factor: float = 1.0,
) -> tuple[LoopPath, float]:
    """Parabolic collision profile on ``|t - t0| <= s0`` closed by a smooth cubic arc.

    Inside the collision window the path is ``zeta0(t - t0) + |t - t0| * drift``;
    ``drift = 0`` gives the pure profile.  The collision sits on the grid node
    ``n // 2`` unless ``offset_fraction`` (in cells) moves it inside a cell.
    ``speed_factor`` multiplies the stored velocities on the outgoing side of
    the window only, which leaves the positions untouched but makes the
    outgoing energy ``(speed_factor^2 - 1) / |x|`` instead of zero.
    Returns ``(path, t0)``.
    """
    period = 2 * S0 + closing_duration
    h = period / n
    t0 = (n // 2 + offset_fraction) * h
    t = np.arange(n) * h
    tau = t - t0
    xm, xp = np.asarray(x_minus, float), np.asarray(x_plus, float)
    drift = np.asarray(drift, float)

    def inner(tt):
        return zeta0(tt, xm, xp) + np.abs(tt)[:, None] * drift

    def inner_vel(tt):
        return zeta0_velocity(tt, xm, xp) + np.sign(tt)[:, None] * drift

    x = np.zeros((n, 2))
    v = np.zeros((n, 2))
    win = np.abs(tau) <= S0
    x[win] = inner(tau[win])
    v[win] = inner_vel(tau[win])
    v[win & (tau > 0)] *= speed_factor
    # closing arc from t0 + s0 to t0 - s0 + T
    p0 = inner(np.array([S0]))[0]
    v0 = inner_vel(np.array([S0]))[0]
    p1 = inner(np.array([-S0]))[0]
    v1 = inner_vel(np.array([-S0]))[0]
    D = closing_duration
    s = np.mod(tau[~win] - S0, period) / D
    pos, der = _hermite(p0, D * v0, p1, D * v1, s)
    x[~win] = pos
    v[~win] = der / D
    return LoopPath(period, x, v), t0
