"""Unperturbed Kepler objects near a collision.

The parabolic collision profile ``zeta0``, the constants ``s0`` (time to
reach unit radius) and ``phi0`` (its action over ``[-s0, s0]``), and the two
collision-free Kepler arcs joining unit endpoints in time ``2 s0``.  The arcs
are seeded with a universal-variable Lambert solution and polished by
Newton shooting on the initial velocity with the state transition matrix.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import AntipodalEndpoints, CoincidentDirections, ShootingFailed

KAPPA = (9.0 / 2.0) ** (1.0 / 3.0)
S0 = math.sqrt(2.0) / 3.0
PHI0 = 4.0 * 8.0 ** (1.0 / 6.0)
ARC_OUTPUT_NODES = 2001

RTOL = 1e-13
ATOL = 1e-13


def constants() -> tuple[float, float]:
    """``(s0, phi0) = (sqrt(2)/3, 4 * 8^(1/6))``."""
    return S0, PHI0


@dataclass(frozen=True)
class ParabolicCollision:
    dir_minus: tuple[float, float]
    dir_plus: tuple[float, float]

    def __post_init__(self):
        for d in (self.dir_minus, self.dir_plus):
            if not math.isclose(math.hypot(*d), 1.0, abs_tol=1e-12):
                raise ValueError("collision directions must be unit vectors")


def zeta0(pc: ParabolicCollision, t) -> np.ndarray:
    """Parabolic collision solution ``kappa |t|^{2/3} x0^{sign t}`` with ``kappa = (9/2)^{1/3}``."""
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    r = KAPPA * np.abs(t) ** (2.0 / 3.0)
    d = np.where((t >= 0)[:, None], np.asarray(pc.dir_plus), np.asarray(pc.dir_minus))
    out = r[:, None] * d
    return out[0] if scalar else out


def zeta0_lagrangian(t) -> np.ndarray:
    """``|zeta0'|^2 / 2 + 1 / |zeta0|``; equals ``(2 / kappa) |t|^{-2/3}`` for t != 0."""
    t = np.abs(np.asarray(t, dtype=float))
    r = KAPPA * t ** (2.0 / 3.0)
    speed = (2.0 / 3.0) * KAPPA * t ** (-1.0 / 3.0)
    return 0.5 * speed**2 + 1.0 / r


# ---------------------------------------------------------------------------
# Lambert seed


def _stumpff(z: float) -> tuple[float, float]:
    if z > 1e-6:
        sz = math.sqrt(z)
        return (1 - math.cos(sz)) / z, (sz - math.sin(sz)) / sz**3
    if z < -1e-6:
        sz = math.sqrt(-z)
        return (math.cosh(sz) - 1) / (-z), (math.sinh(sz) - sz) / sz**3
    return 0.5 - z / 24 + z * z / 720, 1 / 6 - z / 120 + z * z / 5040


def lambert_velocity(r1v, r2v, tof: float, sense: int) -> np.ndarray:
    """Initial velocity of the zero-revolution Kepler transfer (mu = 1).

    ``sense = +1`` moves counterclockwise, ``-1`` clockwise.
    """
    r1v, r2v = np.asarray(r1v, float), np.asarray(r2v, float)
    r1, r2 = np.linalg.norm(r1v), np.linalg.norm(r2v)
    cross = r1v[0] * r2v[1] - r1v[1] * r2v[0]
    ccw = math.atan2(cross, float(r1v @ r2v)) % (2 * math.pi)
    dnu = ccw if sense > 0 else 2 * math.pi - ccw
    A = math.sin(dnu) * math.sqrt(r1 * r2 / (1 - math.cos(dnu)))

    def y_of(z):
        C, S = _stumpff(z)
        return r1 + r2 + A * (z * S - 1) / math.sqrt(C)

    def F(z):
        C, S = _stumpff(z)
        y = y_of(z)
        if y <= 0:
            return -tof
        return (y / C) ** 1.5 * S + A * math.sqrt(y) - tof

    hi = 4 * math.pi**2 * (1 - 1e-6)
    while F(hi) <= 0:
        hi = 0.5 * (hi + 4 * math.pi**2)
    lo = -4.0
    while F(lo) >= 0:
        lo *= 4
    z = brentq(F, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    y = y_of(z)
    f = 1 - y / r1
    g = A * math.sqrt(y)
    return (r2v - f * r1v) / g


# ---------------------------------------------------------------------------
# Shooting


def _rhs(_t, y):
    x = y[:2]
    r3 = (x[0] * x[0] + x[1] * x[1]) ** 1.5
    return np.array([y[2], y[3], -x[0] / r3, -x[1] / r3])


def _rhs_stm(_t, Y):
    x, v = Y[:2], Y[2:4]
    r2 = x @ x
    r = math.sqrt(r2)
    G = 3 * np.outer(x, x) / r**5 - np.eye(2) / r**3
    P = Y[4:].reshape(4, 4)
    dP = np.empty_like(P)
    dP[:2] = P[2:]
    dP[2:] = G @ P[:2]
    return np.concatenate([v, -x / r**3, dP.ravel()])


def _rhs_action(_t, y):
    x = y[:2]
    r = math.hypot(x[0], x[1])
    return np.array([y[2], y[3], -x[0] / r**3, -x[1] / r**3, 0.5 * (y[2] ** 2 + y[3] ** 2) + 1 / r])


def _shoot(x_minus, x_plus, v0, max_iter=30, tol=1e-13):
    v = np.array(v0, float)
    history = []
    for _ in range(max_iter):
        sol = solve_ivp(_rhs_stm, (-S0, S0), np.concatenate([x_minus, v, np.eye(4).ravel()]),
                        method="DOP853", rtol=RTOL, atol=ATOL)
        if not sol.success:
            raise ShootingFailed("integration failed", {"message": sol.message, "history": history})
        Y = sol.y[:, -1]
        res = Y[:2]
        history.append(float(np.linalg.norm(res - x_plus)))
        if history[-1] < tol:
            return v, history
        P = Y[4:].reshape(4, 4)
        v = v - np.linalg.solve(P[:2, 2:], res - x_plus)
    raise ShootingFailed("Newton shooting stalled", {"history": history, "velocity": v.tolist()})


@dataclass(frozen=True, eq=False)
class KeplerArc:
    label: str  # "direct" or "indirect"
    x_minus: np.ndarray
    x_plus: np.ndarray
    times: np.ndarray
    samples: np.ndarray
    sample_velocities: np.ndarray
    initial_velocity: np.ndarray
    energy: float
    action: float
    chord: float
    ell: float
    transfer_time: float
    sweep: float
    boundary_residual: float
    energy_drift: float
    min_radius: float
    solution: Any = field(repr=False, default=None)

    def __call__(self, s):
        """Position at intrinsic times ``s`` in [-s0, s0] (dense output)."""
        return self.solution(np.asarray(s, dtype=float))[:2].T

    def velocity(self, s):
        return self.solution(np.asarray(s, dtype=float))[2:4].T

    def summary(self) -> dict:
        return {
            "label": self.label,
            "H": self.energy,
            "action": self.action,
            "c": self.chord,
            "residual": self.boundary_residual,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,xi1,xi2,v1,v2\n")
        for t, x, v in zip(self.times, self.samples, self.sample_velocities):
            buf.write(",".join(format(float(q), ".12g") for q in (t, x[0], x[1], v[0], v[1])) + "\n")
        return buf.getvalue()


def _build_arc(x_minus, x_plus, v0) -> KeplerArc:
    sol = solve_ivp(_rhs_action, (-S0, S0), np.concatenate([x_minus, v0, [0.0]]),
                    method="DOP853", rtol=RTOL, atol=ATOL, dense_output=True)
    if not sol.success:
        raise ShootingFailed("final integration failed", {"message": sol.message})
    times = np.linspace(-S0, S0, ARC_OUTPUT_NODES)
    Y = sol.sol(times)
    xs, vs = Y[:2].T, Y[2:4].T
    xs[0], vs[0] = sol.y[:2, 0], sol.y[2:4, 0]
    xs[-1], vs[-1] = sol.y[:2, -1], sol.y[2:4, -1]
    radii = np.hypot(xs[:, 0], xs[:, 1])
    energies = 0.5 * np.einsum("ij,ij->i", vs, vs) - 1 / radii
    # also check at the integrator's own steps, where near-collision passages are resolved
    step_r = np.hypot(sol.y[0], sol.y[1])
    step_e = 0.5 * (sol.y[2] ** 2 + sol.y[3] ** 2) - 1 / step_r
    H = float(energies[0])
    drift = float(max(np.max(np.abs(energies - H)), np.max(np.abs(step_e - H))))
    theta = np.unwrap(np.arctan2(xs[:, 1], xs[:, 0]))
    sweep = float(theta[-1] - theta[0])
    end = sol.y[:2, -1]
    return KeplerArc(
        label="direct" if abs(sweep) < math.pi else "indirect",
        x_minus=np.array(x_minus, float),
        x_plus=np.array(x_plus, float),
        times=times,
        samples=xs,
        sample_velocities=vs,
        initial_velocity=np.array(v0, float),
        energy=H,
        action=float(sol.y[4, -1]),
        chord=float(np.linalg.norm(np.asarray(x_plus) - np.asarray(x_minus))),
        ell=float(np.linalg.norm(sol.y[:2, 0]) + np.linalg.norm(end)),
        transfer_time=2 * S0,
        sweep=sweep,
        boundary_residual=float(max(np.linalg.norm(sol.y[:2, 0] - x_minus), np.linalg.norm(end - x_plus))),
        energy_drift=drift,
        min_radius=float(min(step_r.min(), radii.min())),
        solution=sol.sol,
    )


def solve_arcs(x_minus, x_plus) -> tuple[KeplerArc, KeplerArc]:
    """The direct and indirect Kepler arcs with ``xi(-s0) = x_minus``, ``xi(s0) = x_plus``.

    Returned as ``(direct, indirect)``.
    """
    xm = np.asarray(x_minus, float)
    xp = np.asarray(x_plus, float)
    for d in (xm, xp):
        if not math.isclose(np.linalg.norm(d), 1.0, abs_tol=1e-9):
            raise ValueError("arc endpoints must be unit vectors")
    if np.linalg.norm(xp - xm) < 1e-12:
        raise CoincidentDirections("endpoints coincide; no bounce to replace")
    if np.linalg.norm(xp + xm) < 1e-10:
        raise AntipodalEndpoints("antipodal endpoints make the two arcs ambiguous")
    arcs = []
    for sense in (+1, -1):
        seed = lambert_velocity(xm, xp, 2 * S0, sense)
        v0, _ = _shoot(xm, xp, seed)
        arcs.append(_build_arc(xm, xp, v0))
    arcs.sort(key=lambda a: abs(a.sweep))
    direct, indirect = arcs
    if direct.label != "direct" or indirect.label != "indirect":
        raise ShootingFailed(
            "both solutions landed in the same homotopy class",
            {"sweeps": [a.sweep for a in arcs]},
        )
    return direct, indirect


def concatenation_winding(first: KeplerArc, second: KeplerArc) -> int:
    """Winding of ``first`` followed by ``second`` reversed (a closed loop)."""
    return int(round((first.sweep - second.sweep) / (2 * math.pi)))


@dataclass(frozen=True)
class LambertReport:
    ell: float
    chord: float
    transfer_time: float
    energy: float
    ell_ok: bool


def lambert_relation_check(arc: KeplerArc, tol: float = 1e-8) -> LambertReport:
    """Lambert data ``(ell, c, dt, H)`` of an arc; ``ell`` must equal 2."""
    return LambertReport(arc.ell, arc.chord, arc.transfer_time, arc.energy, abs(arc.ell - 2.0) <= tol)


def energies_agree(arcs_a, arcs_b, tol: float = 1e-6) -> bool:
    """Equal-chord endpoint pairs must share their per-label energies."""
    if not math.isclose(arcs_a[0].chord, arcs_b[0].chord, abs_tol=1e-9):
        raise ValueError("energy comparison needs equal chords")
    return all(abs(a.energy - b.energy) <= tol for a, b in zip(arcs_a, arcs_b))
