"""Collision analysis for loops that pass through the origin.

Given a sampled loop this module finds its collision instants, fits the
asymptotic ingoing/outgoing directions and the collision energy, rescales the
path around each collision (blow-up), performs the arc-replacement surgery
that lowers the action of a bounce, and aggregates everything into a
certificate for generalized periodic solutions.

All fits use the parabolic asymptotics ``|x(t)| ~ kappa |t - t0|^{2/3}``,
``kappa = (9/2)^{1/3}``, equivalently ``|x|^{3/2}`` linear in ``|t - t0|``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .action import action
from .errors import (
    CoincidentDirections,
    OverlappingEvents,
    TooCloseToCollision,
    WindowExceeded,
)
from .kepler_arcs import KAPPA, PHI0, S0, KeplerArc, solve_arcs
from .loops import ConstraintClass, LoopPath, classify
from .potentials import Potential

DIRECTION_GAP_TOL = 1e-2
ENERGY_GAP_TOL = 1e-2
TOL_BLOWUP = 5e-2
EQUATION_TOL = 1e-2
MIN_SEPARATION_CELLS = 10


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# Events


@dataclass(frozen=True)
class CollisionEvent:
    t0: float
    window: tuple[float, float]
    dir_minus: np.ndarray
    dir_plus: np.ndarray
    sperling_residuals: tuple[float, float]
    C_x: float
    delta: float
    t_delta_minus: float
    t_delta_plus: float
    node: int  # grid node nearest to t0

    @property
    def half_width(self) -> float:
        return 0.5 * (self.window[1] - self.window[0])

    @property
    def direction_gap(self) -> float:
        return float(np.linalg.norm(self.dir_plus - self.dir_minus))

    def exit_interval(self) -> tuple[float, float]:
        return self.t0 - self.t_delta_minus, self.t0 + self.t_delta_plus


def _side_nodes(path: LoopPath, k: int, side: int, count: int) -> np.ndarray:
    """Node indices (unwrapped) ``k + side, k + 2 side, ...`` while |x| increases."""
    r = path.radii
    n = path.n
    out = []
    j = k
    for _ in range(min(count, n // 2)):
        nxt = j + side
        if r[nxt % n] <= r[j % n] and j != k:
            break
        out.append(nxt)
        j = nxt
    return np.array(out, dtype=int)


def _candidate_nodes(path: LoopPath) -> list[tuple[int, float]]:
    """(node, t0) pairs for collisions at a node or strictly inside a neighbouring cell."""
    r = path.radii
    n, h = path.n, path.step
    model = path.model
    found: dict[int, float] = {}
    thr = path.collision_threshold
    for k in np.flatnonzero(r <= thr):
        if r[k] <= r[(k - 1) % n] and r[k] <= r[(k + 1) % n]:
            found[int(k)] = float(k * h)
    for cell, theta in model.splits.items():
        k = cell if theta <= 0.5 * h else (cell + 1) % n
        if k not in found:
            found[int(k)] = float(cell * h + theta)
    return sorted(found.items())


def _exit_time(path: LoopPath, t0: float, side: int, delta: float, reach: float) -> float:
    """Smallest tau in (0, reach] with |x(t0 + side tau)| = delta (|x| is monotone there)."""
    f = lambda tau: float(path.model.radius(t0 + side * tau)[0]) - delta
    if f(reach) < 0:
        raise WindowExceeded(f"|x| stays below delta = {delta:.4g} across the event window")
    return brentq(f, 0.0, reach, xtol=1e-15, rtol=8.9e-16, maxiter=200)


def _fit_direction(path: LoopPath, t0: float, nodes: np.ndarray) -> np.ndarray:
    """Intercept of a weighted linear fit of x/|x| against |t - t0|^{1/3}."""
    x = path.positions[nodes % path.n]
    e = x / np.linalg.norm(x, axis=1)[:, None]
    tau = np.abs(nodes * path.step - t0)
    s = np.cbrt(tau)
    if len(nodes) < 3:
        return _unit(e.mean(axis=0))
    w = 1.0 / s  # weighted toward the collision
    A = np.column_stack([np.ones_like(s), s]) * np.sqrt(w)[:, None]
    coef, *_ = np.linalg.lstsq(A, e * np.sqrt(w)[:, None], rcond=None)
    return _unit(coef[0])


def detect_collisions(path: LoopPath, delta: float | None = None) -> list[CollisionEvent]:
    """Collision events of ``path`` ordered by time.

    A collision is a grid node within ``collision_threshold`` of the origin that
    is a local minimum of ``|x|``, or a cell across which the two flanking
    ``|x|^{3/2}`` lines meet at zero (a collision between nodes).  ``delta``
    sets the exit radius; by default a quarter of the window's outer radius.
    """
    cands = _candidate_nodes(path)
    n, h = path.n, path.step
    T = path.period
    for (k1, _), (k2, _) in zip(cands, cands[1:] + cands[:1]):
        if len(cands) > 1 and (k2 - k1) % n < MIN_SEPARATION_CELLS:
            raise OverlappingEvents(
                f"collisions near nodes {k1} and {k2} are closer than {MIN_SEPARATION_CELLS} cells"
            )
    thr = path.singular_cell_threshold
    events = []
    for k, t0 in cands:
        # the collision node itself (r = 0) starts each monotone flank
        left = _side_nodes(path, k, -1, n // 2)
        right = _side_nodes(path, k, +1, n // 2)
        if len(left) == 0 or len(right) == 0:
            continue
        # the node on the far side of an in-cell collision belongs to the other flank
        if t0 > k * h and t0 - k * h > 1e-15:
            left = np.concatenate([[k], left])
        elif t0 < k * h:
            right = np.concatenate([[k], right])
        reach_l = t0 - left[-1] * h
        reach_r = right[-1] * h - t0
        half = min(reach_l, reach_r)
        window = (t0 - half, t0 + half)
        r = path.radii
        inner = []
        fits = []
        sperling = []
        for nodes in (left, right):
            tau = np.abs(nodes * h - t0)
            rr = r[nodes % n]
            keep = (tau <= 0.5 * half) & (rr >= thr)
            if keep.sum() < 3:
                keep = rr >= thr
                keep &= np.cumsum(keep) <= 8
            sel = nodes[keep]
            inner.append(sel)
            tt, ru = tau[keep], rr[keep] ** 1.5
            slope = float(np.sum(tt * ru) / np.sum(tt * tt)) if len(tt) else float("nan")
            fits.append(slope ** (2.0 / 3.0))
            sperling.append(float(np.max(np.abs(rr[keep] / (KAPPA * tt ** (2.0 / 3.0)) - 1))) if len(tt) else float("nan"))
        dm = _fit_direction(path, t0, inner[0])
        dp = _fit_direction(path, t0, inner[1])
        r_out = min(float(r[left[-1] % n]), float(r[right[-1] % n]))
        d = 0.25 * r_out if delta is None else float(delta)
        tdm = _exit_time(path, t0, -1, d, half)
        tdp = _exit_time(path, t0, +1, d, half)
        events.append(
            CollisionEvent(
                t0=float(np.mod(t0, T)),
                window=window,
                dir_minus=dm,
                dir_plus=dp,
                sperling_residuals=(sperling[0], sperling[1]),
                C_x=float(np.mean(fits)),
                delta=d,
                t_delta_minus=tdm,
                t_delta_plus=tdp,
                node=int(k),
            )
        )
    return events


def event_at_delta(path: LoopPath, event: CollisionEvent, delta: float) -> CollisionEvent:
    """Same event with exit times recomputed for a new radius ``delta``."""
    half = event.half_width
    return replace(
        event,
        delta=float(delta),
        t_delta_minus=_exit_time(path, event.t0, -1, delta, half),
        t_delta_plus=_exit_time(path, event.t0, +1, delta, half),
    )


def window_outer_radius(path: LoopPath, event: CollisionEvent) -> float:
    a, b = event.window
    return float(min(path.model.radius(a)[0], path.model.radius(b)[0]))


def default_deltas(path: LoopPath, event: CollisionEvent, terms: int = 6, ratio: float = 0.5) -> list[float]:
    start = 0.25 * window_outer_radius(path, event)
    return [start * ratio**i for i in range(terms)]


# ---------------------------------------------------------------------------
# Energy and virial identity


@dataclass(frozen=True, eq=False)
class EnergySeries:
    times: np.ndarray
    energy: np.ndarray  # nan at collision nodes
    collision_nodes: np.ndarray  # boolean mask
    rate: np.ndarray  # centered difference of the energy, nan where undefined
    model_rate: np.ndarray  # <grad U, v>

    def rows(self):
        return list(zip(self.times, self.energy))


def energy_series(path: LoopPath, U: Potential) -> EnergySeries:
    """``h_k = |v_k|^2 / 2 - 1/|x_k|`` with its discrete and predicted rates of change."""
    r = path.radii
    v = path.velocities
    t = path.times
    coll = r <= path.collision_threshold
    with np.errstate(divide="ignore", invalid="ignore"):
        h = np.where(coll, np.nan, 0.5 * np.einsum("ij,ij->i", v, v) - 1 / r)
    rate = (np.roll(h, -1) - np.roll(h, 1)) / (2 * path.step)
    model_rate = np.einsum("ij,ij->i", U.grad_x(t, path.positions), v)
    return EnergySeries(t, h, coll, rate, model_rate)


@dataclass(frozen=True)
class EnergyContinuity:
    t0: float
    h_left: float
    h_right: float
    gap: float
    passed: bool


@dataclass(frozen=True)
class EnergyContinuityReport:
    events: tuple[EnergyContinuity, ...]
    tolerance: float

    @property
    def max_gap(self) -> float:
        return max((e.gap for e in self.events), default=0.0)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.events)


def _extrapolate_energy(path: LoopPath, series: EnergySeries, event: CollisionEvent, side: int) -> float:
    """Limit of h at t0 from one side: least squares in ``s = |t - t0|^{2/3}``."""
    n, h = path.n, path.step
    nodes = _side_nodes(path, event.node, side, n // 2)
    if side < 0 and event.t0 > event.node * h:
        nodes = np.concatenate([[event.node], nodes])
    if side > 0 and event.t0 < event.node * h:
        nodes = np.concatenate([[event.node], nodes])
    tau = np.abs(nodes * h - event.t0)
    r = path.radii[nodes % n]
    keep = (r >= path.singular_cell_threshold) & (tau <= 0.5 * event.half_width)
    if keep.sum() < 4:
        keep = r >= path.singular_cell_threshold
        keep &= np.cumsum(keep) <= 12
    s = tau[keep] ** (2.0 / 3.0)
    e = series.energy[nodes[keep] % n]
    ok = np.isfinite(e)
    s, e = s[ok], e[ok]
    deg = min(2, len(s) - 1)
    if deg < 0:
        return float("nan")
    coef = np.polynomial.polynomial.polyfit(s, e, deg)
    return float(coef[0])


def energy_continuity_check(
    path: LoopPath, U: Potential, events, tol: float = ENERGY_GAP_TOL
) -> EnergyContinuityReport:
    """Left and right limits of the energy at each collision and their gap."""
    series = energy_series(path, U)
    out = []
    for ev in events:
        hl = _extrapolate_energy(path, series, ev, -1)
        hr = _extrapolate_energy(path, series, ev, +1)
        gap = abs(hl - hr)
        out.append(EnergyContinuity(ev.t0, hl, hr, gap, bool(gap <= tol)))
    return EnergyContinuityReport(tuple(out), tol)


@dataclass(frozen=True)
class VirialReport:
    residual: float  # I'' against |v|^2 + <x, xddot> with xddot from the equation of motion
    potential_form: float  # I'' against 1/|x| + U + 2h
    gradient_form: float  # I'' against 1/|x| + <x, grad U> + 2h
    nodes_used: int
    nodes_skipped: int


def _regular_nodes(path: LoopPath, nodes=None) -> np.ndarray:
    """Nodes whose three-point stencil avoids singular cells and the wraparound cut."""
    n = path.n
    r = path.radii
    bad = r < path.singular_cell_threshold
    bad = bad | np.roll(bad, 1) | np.roll(bad, -1)
    mask = ~bad
    if nodes is not None:
        sel = np.zeros(n, dtype=bool)
        sel[np.asarray(nodes)] = True
        mask &= sel
    return mask


def virial_residual(path: LoopPath, U: Potential, nodes=None) -> VirialReport:
    """Residuals of the second derivative of ``I = |x|^2 / 2`` at regular nodes.

    ``nodes`` optionally restricts the check (for example to interior nodes of
    an open trajectory stored as a loop).
    """
    mask = _regular_nodes(path, nodes)
    if not mask.any():
        raise TooCloseToCollision("no node is outside the singular cells")
    x, v, h = path.positions, path.velocities, path.step
    t = path.times
    r = path.radii
    I = 0.5 * r**2
    Idd = (np.roll(I, -1) - 2 * I + np.roll(I, 1)) / h**2
    with np.errstate(divide="ignore", invalid="ignore"):
        grad = U.grad_x(t, x)
        acc = -x / r[:, None] ** 3 + grad
        v2 = np.einsum("ij,ij->i", v, v)
        hx = 0.5 * v2 - 1 / r
        direct = Idd - (v2 + np.einsum("ij,ij->i", x, acc))
        with_u = Idd - (1 / r + U.eval(t, x) + 2 * hx)
        with_grad = Idd - (1 / r + np.einsum("ij,ij->i", x, grad) + 2 * hx)
    m = mask
    return VirialReport(
        float(np.max(np.abs(direct[m]))),
        float(np.max(np.abs(with_u[m]))),
        float(np.max(np.abs(with_grad[m]))),
        int(m.sum()),
        int((~m).sum()),
    )


# ---------------------------------------------------------------------------
# Blow-up


@dataclass(frozen=True, eq=False)
class BlowUpProfile:
    delta: float
    sigma_minus: float
    sigma_plus: float
    times: np.ndarray  # rescaled times in [-sigma_minus, sigma_plus]
    z: np.ndarray
    z_velocity: np.ndarray
    sup_deviation_from_zeta0: float
    rescaled_action: float  # A over [t0 - t_delta^-, t0 + t_delta^+] divided by delta^{1/2}

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,z1,z2\n")
        for s, z in zip(self.times, self.z):
            buf.write(",".join(format(float(q), ".12g") for q in (s, z[0], z[1])) + "\n")
        return buf.getvalue()


def _zeta0(s, xm, xp):
    s = np.asarray(s, dtype=float)
    r = KAPPA * np.abs(s) ** (2.0 / 3.0)
    d = np.where((s >= 0)[:, None], xp, xm)
    return r[:, None] * d


def blow_up(
    path: LoopPath, event: CollisionEvent, deltas, U: Potential | None = None, samples: int = 401
) -> list[BlowUpProfile]:
    """Rescaled paths ``z(s) = x(delta^{3/2} s + t0) / delta`` for each delta."""
    out = []
    for d in deltas:
        d = float(d)
        if d <= 0:
            raise ValueError("deltas must be positive")
        try:
            ev = event_at_delta(path, event, d)
        except (ValueError, WindowExceeded) as exc:
            raise WindowExceeded(f"delta = {d:.4g} does not fit inside the event window") from exc
        scale = d**1.5
        sm, sp = ev.t_delta_minus / scale, ev.t_delta_plus / scale
        s = np.linspace(-sm, sp, samples)
        t = event.t0 + scale * s
        z = path.model.position(t) / d
        zv = math.sqrt(d) * path.model.velocity(t)
        common = np.linspace(-min(sm, S0), min(sp, S0), samples)
        ref = _zeta0(common, event.dir_minus, event.dir_plus)
        zc = path.model.position(event.t0 + scale * common) / d
        dev = float(np.max(np.linalg.norm(zc - ref, axis=1)))
        a, b = ev.exit_interval()
        Uw = U if U is not None else _zero_like(path.period)
        A = action(path, Uw, a, b).total / math.sqrt(d)
        out.append(BlowUpProfile(d, sm, sp, s, z, zv, dev, A))
    return out


def _zero_like(period: float) -> Potential:
    from .potentials import zero_potential

    return zero_potential(period)


# ---------------------------------------------------------------------------
# Surgery


@dataclass(frozen=True, eq=False)
class SurgeryCandidate:
    label: str
    arc: KeplerArc
    path: LoopPath
    window_action: float
    rescaled_window_action: float
    constraint: ConstraintClass
    in_X: bool


@dataclass(frozen=True, eq=False)
class SurgeryReport:
    delta: float
    window: tuple[float, float]
    q_minus: np.ndarray
    q_plus: np.ndarray
    time_scale: float  # lambda: window length / (2 s0 delta^{3/2})
    kinetic_factor: float  # 1 / lambda, multiplies the arc's kinetic action
    original_window_action: float
    rescaled_original: float
    candidates: tuple[SurgeryCandidate, ...]

    @property
    def dominating(self) -> tuple[SurgeryCandidate, ...]:
        """Candidates that stay in X and strictly lower the window action."""
        return tuple(c for c in self.candidates if c.in_X and c.window_action < self.original_window_action)

    def rescaled_gap(self, label: str) -> float:
        c = next(c for c in self.candidates if c.label == label)
        return self.rescaled_original - c.rescaled_window_action

    def predicted_gap(self, label: str) -> float:
        c = next(c for c in self.candidates if c.label == label)
        return PHI0 - c.arc.action


def _arc_parts(arc: KeplerArc) -> tuple[float, float]:
    """Kinetic and Keplerian parts of an arc's action over [-s0, s0]."""
    sol = arc.solution
    kin = quad(lambda s: 0.5 * float(np.sum(sol(s)[2:4] ** 2)), -S0, S0, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    kep = quad(lambda s: 1.0 / float(np.hypot(*sol(s)[:2])), -S0, S0, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    return kin, kep


def surgery(path: LoopPath, U: Potential, event: CollisionEvent, delta: float):
    """Replace the collision segment by rescaled direct and indirect Kepler arcs.

    Inside ``[t0 - t_delta^-, t0 + t_delta^+]`` the candidate is
    ``delta * xi(s)`` with the arc time ``s`` mapped affinely onto the window,
    so the replacement joins the original path continuously at every delta.
    Returns ``(direct_candidate, indirect_candidate, report)``.
    """
    ev = event_at_delta(path, event, delta)
    a, b = ev.exit_interval()
    xa = path.model.position(a)[0]
    xb = path.model.position(b)[0]
    qm, qp = xa / np.linalg.norm(xa), xb / np.linalg.norm(xb)
    if np.linalg.norm(qp - qm) < 1e-6:
        raise CoincidentDirections("exit directions coincide; there is no bounce to remove")
    arcs = solve_arcs(qm, qp)
    L = b - a
    lam = L / (2 * S0 * delta**1.5)
    scale = lam * delta**1.5  # dt/ds
    original = action(path, U, a, b).total
    T, n, h = path.period, path.n, path.step
    # grid nodes strictly inside the window (unwrapped indices)
    k_lo = math.floor(a / h) + 1
    k_hi = math.ceil(b / h) - 1
    ks = np.arange(k_lo, k_hi + 1)
    ks = ks[(ks * h > a) & (ks * h < b)]
    cands = []
    for arc in arcs:
        kin, kep = _arc_parts(arc)

        def u_integrand(s, arc=arc):
            y = delta * arc(np.array([s]))
            return float(U.eval(np.array([a + scale * (s + S0)]), y)[0])

        pot = quad(u_integrand, -S0, S0, epsabs=1e-13, epsrel=1e-12, limit=200)[0] * scale
        win = math.sqrt(delta) * (kin / lam + lam * kep) + pot
        x = path.positions.copy()
        v = path.velocities.copy()
        s_nodes = -S0 + (ks * h - a) / scale
        x[ks % n] = delta * arc(s_nodes)
        v[ks % n] = arc.velocity(s_nodes) * (delta / scale)
        cpath = LoopPath(T, x, v)
        cls = classify(cpath)
        cands.append(
            SurgeryCandidate(arc.label, arc, cpath, win, win / math.sqrt(delta), cls, cls.tag in ("Xr", "Xc"))
        )
    report = SurgeryReport(
        delta=float(delta),
        window=(a, b),
        q_minus=qm,
        q_plus=qp,
        time_scale=lam,
        kinetic_factor=1.0 / lam,
        original_window_action=original,
        rescaled_original=original / math.sqrt(delta),
        candidates=tuple(cands),
    )
    return cands[0].path, cands[1].path, report


# ---------------------------------------------------------------------------
# Certificate


@dataclass(frozen=True, eq=False)
class GeneralizedSolutionCertificate:
    events: tuple[CollisionEvent, ...]
    discrete_set_ok: bool
    equation_ok: bool
    equation_residual: float
    direction_limit_ok: bool
    direction_gap: float
    energy_limit_ok: bool
    energy_gap: float
    energy_report: EnergyContinuityReport | None = None
    notes: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return self.discrete_set_ok and self.equation_ok and self.direction_limit_ok and self.energy_limit_ok

    def as_lines(self, prefix: str = "certificate") -> list[str]:
        f = lambda q: format(float(q), ".12g")
        return [
            f"{prefix}.events = {len(self.events)}",
            f"{prefix}.discrete_set_ok = {str(self.discrete_set_ok).lower()}",
            f"{prefix}.equation_ok = {str(self.equation_ok).lower()}",
            f"{prefix}.equation_residual = {f(self.equation_residual)}",
            f"{prefix}.direction_limit_ok = {str(self.direction_limit_ok).lower()}",
            f"{prefix}.direction_gap = {f(self.direction_gap)}",
            f"{prefix}.energy_limit_ok = {str(self.energy_limit_ok).lower()}",
            f"{prefix}.energy_gap = {f(self.energy_gap)}",
            f"{prefix}.passed = {str(self.passed).lower()}",
        ]


def equation_residual(path: LoopPath, U: Potential, events=(), exclude_cells: int = MIN_SEPARATION_CELLS) -> float:
    """Relative Euler-Lagrange residual away from collisions.

    At each regular node the residual ``|xddot + x/|x|^3 - grad U|`` is divided
    by the force scale ``1/|x|^2 + |grad U|``; nodes within ``exclude_cells`` of
    a collision instant are skipped.
    """
    mask = _regular_nodes(path)
    n, h = path.n, path.step
    k = np.arange(n)
    for ev in events:
        dist = np.abs(((k * h - ev.t0) + 0.5 * path.period) % path.period - 0.5 * path.period)
        mask &= dist > exclude_cells * h
    if not mask.any():
        return 0.0
    x, t, r = path.positions, path.times, path.radii
    acc = (np.roll(x, -1, axis=0) - 2 * x + np.roll(x, 1, axis=0)) / h**2
    with np.errstate(divide="ignore", invalid="ignore"):
        grad = U.grad_x(t, x)
        res = acc + x / r[:, None] ** 3 - grad
        scale = 1 / r**2 + np.hypot(grad[:, 0], grad[:, 1])
        rel = np.hypot(res[:, 0], res[:, 1]) / scale
    return float(np.max(rel[mask]))


def certify(
    path: LoopPath,
    U: Potential,
    direction_gap_tol: float = DIRECTION_GAP_TOL,
    energy_gap_tol: float = ENERGY_GAP_TOL,
    equation_tol: float = EQUATION_TOL,
) -> GeneralizedSolutionCertificate:
    """Check the conditions of a generalized periodic solution on a sampled loop."""
    notes = []
    try:
        events = tuple(detect_collisions(path))
        discrete = True
    except OverlappingEvents as exc:
        notes.append(str(exc))
        return GeneralizedSolutionCertificate((), False, False, float("nan"), False, float("nan"), False, float("nan"), None, tuple(notes))
    eq_res = equation_residual(path, U, events)
    dgap = max((ev.direction_gap for ev in events), default=0.0)
    report = energy_continuity_check(path, U, events, energy_gap_tol)
    egap = report.max_gap
    return GeneralizedSolutionCertificate(
        events=events,
        discrete_set_ok=discrete,
        equation_ok=bool(eq_res <= equation_tol),
        equation_residual=eq_res,
        direction_limit_ok=bool(dgap <= direction_gap_tol),
        direction_gap=float(dgap),
        energy_limit_ok=bool(report.passed),
        energy_gap=float(egap),
        energy_report=report,
        notes=tuple(notes),
    )
