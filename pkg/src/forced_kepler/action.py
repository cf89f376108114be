"""The action functional ``A = int (|xdot|^2 / 2 + 1/|x| + U) dt`` on discretized loops.

Two evaluations live here.  :func:`discrete_action` is the smooth finite
dimensional functional the minimizer descends (forward-difference kinetic
term, node-weighted potential terms, optional softening); its gradient is
:func:`action_gradient`.  :func:`action` evaluates ``A_[a,b]`` on arbitrary
sub-intervals and switches to closed-form integration of the collision model
in cells close to the origin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ExactZeroSample, NotInConstraintClass, TooCloseToCollision
from .loops import LoopPath, classify
from .potentials import Potential


@dataclass(frozen=True)
class ActionBreakdown:
    kinetic: float
    keplerian: float
    potential: float
    total: float
    interval: tuple[float, float]

    @classmethod
    def build(cls, kinetic, keplerian, potential, interval):
        kinetic, keplerian, potential = float(kinetic), float(keplerian), float(potential)
        return cls(kinetic, keplerian, potential, kinetic + keplerian + potential, interval)

    def as_lines(self, prefix: str = "action") -> list[str]:
        return [
            f"{prefix}.{name} = {format(getattr(self, name), '.12g')}"
            for name in ("kinetic", "keplerian", "potential", "total")
        ]


def action(
    path: LoopPath,
    U: Potential,
    a: float = 0.0,
    b: float | None = None,
    collision_aware: bool = True,
) -> ActionBreakdown:
    """``A_[a,b](path)``.

    Interval ends may fall anywhere; partial cells are evaluated through the
    path's local model.  ``a`` may be negative (and ``b`` exceed T) for windows
    straddling t = 0, as long as ``b - a <= T``.
    """
    if b is None:
        b = path.period
    if b < a:
        raise ValueError("need a <= b")
    if b - a > path.period * (1 + 1e-12):
        raise ValueError("interval longer than one period")
    model = path.model
    pieces = model.breakpoints(a, b)
    if not pieces:
        return ActionBreakdown.build(0.0, 0.0, 0.0, (a, b))
    cells = np.array([p[0] for p in pieces])
    s_lo = np.array([p[1] for p in pieces])
    s_hi = np.array([p[2] for p in pieces])
    length = s_hi - s_lo
    r0, d0, sp0, vd0 = model.cell_state(cells, s_lo)
    r1, d1, sp1, vd1 = model.cell_state(cells, s_hi)
    # exact node data where the piece ends sit on nodes
    x0 = r0[:, None] * d0
    x1 = r1[:, None] * d1
    h = path.step
    at_lo_node = s_lo == 0
    at_hi_node = s_hi == h
    nxt = (cells + 1) % path.n
    x0[at_lo_node] = path.positions[cells[at_lo_node]]
    x1[at_hi_node] = path.positions[nxt[at_hi_node]]
    r0 = np.hypot(x0[:, 0], x0[:, 1])
    r1 = np.hypot(x1[:, 0], x1[:, 1])

    # absolute times for U (cell start + offset)
    t0 = cells * h + s_lo
    t1 = cells * h + s_hi
    u_part = 0.5 * length * (U.eval(t0, x0) + U.eval(t1, x1))

    singular = model.singular[cells] & collision_aware
    if not collision_aware and (np.any(r0 == 0) or np.any(r1 == 0)):
        raise ExactZeroSample("grid node at the origin; enable collision-aware quadrature")

    kin = np.empty_like(length)
    kep = np.empty_like(length)
    dx = x1 - x0
    with np.errstate(divide="ignore", invalid="ignore"):
        kin_reg = 0.5 * np.einsum("ij,ij->i", dx, dx) / length
        kep_reg = 0.5 * length * (1 / r0 + 1 / r1)
        # r^{3/2} linear in t: int dt / r = 3 L / (r0 + sqrt(r0 r1) + r1)
        kep_sing = 3 * length / (r0 + np.sqrt(r0 * r1) + r1)
        # |v|^{-3} linear in t: int |v|^2 / 2 dt = 1.5 L / (m0 + sqrt(m0 m1) + m1), m = |v|^{-2}
        m0 = 1 / sp0**2
        m1 = 1 / sp1**2
        kin_sing = 1.5 * length / (m0 + np.sqrt(m0 * m1) + m1)
    # a stalled node (|v| = 0) breaks the speed model; fall back to differences there,
    # except next to a collision node where r^{3/2} linear from 0 gives (2/3)|dx|^2 / L
    stalled = (sp0 == 0) | (sp1 == 0)
    from_origin = singular & stalled & ((r0 == 0) | (r1 == 0))
    kin[:] = np.where(singular & ~stalled, kin_sing, kin_reg)
    kin[from_origin] = (4.0 / 3.0) * kin_reg[from_origin]
    kep[:] = np.where(singular, kep_sing, kep_reg)
    kin[length == 0] = 0.0
    kep[length == 0] = 0.0
    return ActionBreakdown.build(kin.sum(), kep.sum(), u_part.sum(), (a, b))


# ---------------------------------------------------------------------------
# Smooth discrete functional


def discrete_action(x: np.ndarray, period: float, U: Potential, softening: float = 0.0) -> float:
    """Forward-difference kinetic term plus node-weighted potentials.

    The Keplerian term is ``1/sqrt(|x|^2 + eps^2)``; ``softening=0`` recovers the
    unsoftened functional, which coincides with :func:`action` on loops with
    no singular cells.
    """
    n = x.shape[0]
    h = period / n
    dx = np.roll(x, -1, axis=0) - x
    t = np.arange(n) * h
    r2 = np.einsum("ij,ij->i", x, x) + softening**2
    return float(0.5 * np.sum(dx * dx) / h + h * np.sum(1 / np.sqrt(r2)) + h * np.sum(U.eval(t, x)))


def discrete_gradient(x: np.ndarray, period: float, U: Potential, softening: float = 0.0) -> np.ndarray:
    n = x.shape[0]
    h = period / n
    t = np.arange(n) * h
    lap = 2 * x - np.roll(x, -1, axis=0) - np.roll(x, 1, axis=0)
    r2 = np.einsum("ij,ij->i", x, x) + softening**2
    return lap / h - h * x / r2[:, None] ** 1.5 + h * U.grad_x(t, x)


def gradient_safe_radius(path: LoopPath) -> float:
    return 1e-4 * path.scale


def action_gradient(path: LoopPath, U: Potential) -> np.ndarray:
    """``dA_T / dx_k`` of the discrete functional, shape (N, 2)."""
    if path.min_radius <= gradient_safe_radius(path):
        raise TooCloseToCollision(
            f"min radius {path.min_radius:.3e} below gradient safe radius {gradient_safe_radius(path):.3e}"
        )
    return discrete_gradient(path.positions, path.period, U)


# ---------------------------------------------------------------------------
# Coercivity


def absorption_constant(C: float, alpha: float, K: float) -> float:
    """``max_{s >= 0} (C s^alpha - s^2 / (8K))``, found numerically."""
    if C == 0:
        return 0.0
    f = lambda s: -(C * s**alpha - s**2 / (8 * K))
    # the maximizer is below the positive root of C s^alpha = s^2 / (8K)
    upper = (8 * K * C) ** (1 / (2 - alpha))
    res = minimize_scalar(f, bounds=(0.0, upper), method="bounded", options={"xatol": 1e-12 * upper})
    return max(0.0, -float(res.fun))


def coercivity_bound(path: LoopPath, U: Potential) -> float:
    """Lower bound ``int (|xdot|^2/4 + |x|^2/(8K)) - (K' + C) T`` with ``K = 2 T^2``."""
    cls = classify(path)
    if cls.tag not in ("Xc", "Xr"):
        raise NotInConstraintClass(f"path classifies as {cls.tag}")
    T = path.period
    K = 2 * T**2
    C, alpha = U.growth.C, U.growth.alpha
    Kp = absorption_constant(C, alpha, K)
    x = path.positions
    h = path.step
    dx = np.roll(x, -1, axis=0) - x
    kin2 = float(np.sum(dx * dx) / h)  # int |xdot|^2
    x2 = h * float(np.sum(x * x))
    return kin2 / 4 + x2 / (8 * K) - (Kp + C) * T
