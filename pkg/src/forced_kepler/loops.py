"""Discretized T-periodic planar loops.

A :class:`LoopPath` stores positions and velocities on the uniform grid
``t_k = k T / N`` with the wraparound ``x_N = x_0`` implied.  Besides the
winding/constraint-class machinery this module owns the local collision
model used everywhere a path has to be evaluated between grid nodes: inside
a cell the quantity ``|x|^{3/2}`` is interpolated linearly in time, which is
exact for the parabolic collision profile ``|x| = kappa |t - t0|^{2/3}`` and
second-order accurate for smooth paths.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import AmbiguousWinding, PathTouchesOrigin, ZeroVelocity

MIN_NODES = 8


def fd_velocities(positions: np.ndarray, step: float) -> np.ndarray:
    """Centered periodic finite-difference velocities."""
    return (np.roll(positions, -1, axis=0) - np.roll(positions, 1, axis=0)) / (2.0 * step)


@dataclass(frozen=True, eq=False)
class LoopPath:
    """A T-periodic planar path sampled on a uniform grid.

    Velocities at a node sitting exactly on the origin are stored as zero by
    convention; consumers that care (quadrature, energy) treat such nodes as
    collisions and never use that velocity.
    """

    period: float
    positions: np.ndarray
    velocities: np.ndarray
    fd_tolerance: float = math.inf

    def __post_init__(self):
        x = np.array(self.positions, dtype=float)
        v = np.array(self.velocities, dtype=float)
        if x.ndim != 2 or x.shape[1] != 2:
            raise ValueError("positions must have shape (N, 2)")
        if v.shape != x.shape:
            raise ValueError("velocities must match positions in shape")
        if x.shape[0] < MIN_NODES:
            raise ValueError(f"need at least {MIN_NODES} nodes, got {x.shape[0]}")
        if not self.period > 0:
            raise ValueError("period must be positive")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise ValueError("positions and velocities must be finite")
        x.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "velocities", v)
        if math.isfinite(self.fd_tolerance) and self.min_radius > 0:
            err = np.max(np.abs(fd_velocities(x, self.step) - v))
            if err > self.fd_tolerance:
                raise ValueError(
                    f"velocities disagree with finite differences by {err:.3e} "
                    f"(tolerance {self.fd_tolerance:.3e})"
                )

    # -- construction -------------------------------------------------------

    @classmethod
    def from_positions(cls, positions, period: float) -> "LoopPath":
        x = np.asarray(positions, dtype=float)
        step = period / x.shape[0]
        return cls(period, x, fd_velocities(x, step))

    @classmethod
    def from_function(cls, position_fn, period: float, n: int, velocity_fn=None) -> "LoopPath":
        """Sample ``position_fn(t) -> (M, 2)`` (and optionally its derivative) on the grid."""
        t = np.arange(n) * (period / n)
        x = np.asarray(position_fn(t), dtype=float)
        if velocity_fn is None:
            return cls.from_positions(x, period)
        return cls(period, x, np.asarray(velocity_fn(t), dtype=float))

    # -- basic quantities ---------------------------------------------------

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def step(self) -> float:
        return self.period / self.n

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n) * self.step

    @cached_property
    def radii(self) -> np.ndarray:
        return np.hypot(self.positions[:, 0], self.positions[:, 1])

    @property
    def min_radius(self) -> float:
        return float(self.radii.min())

    @property
    def scale(self) -> float:
        return float(self.radii.max())

    @property
    def collision_threshold(self) -> float:
        return 1e-6 * (self.scale + 1.0)

    @property
    def singular_cell_threshold(self) -> float:
        return 3.0 * self.step ** (2.0 / 3.0)

    def reversed(self) -> "LoopPath":
        """The path traversed backwards in time, ``t -> x(-t)``."""
        idx = (-np.arange(self.n)) % self.n
        return LoopPath(self.period, self.positions[idx], -self.velocities[idx])

    def with_positions(self, positions) -> "LoopPath":
        return LoopPath.from_positions(positions, self.period)

    @cached_property
    def model(self) -> "LocalModel":
        return LocalModel(self)

    def position_at(self, t) -> np.ndarray:
        return self.model.position(t)

    def radius_at(self, t) -> np.ndarray:
        return self.model.radius(t)

    def velocity_at(self, t) -> np.ndarray:
        return self.model.velocity(t)


# ---------------------------------------------------------------------------
# Local collision model / interpolation


def _unit(vectors: np.ndarray) -> np.ndarray:
    norms = np.hypot(vectors[..., 0], vectors[..., 1])
    with np.errstate(invalid="ignore", divide="ignore"):
        out = vectors / norms[..., None]
    return out


class LocalModel:
    """Cellwise interpolant that is exact for the parabolic collision profile.

    In each cell ``[t_j, t_j + h]`` the radius satisfies ``r^{3/2}`` linear in
    time and the direction is the normalized linear blend of the node
    directions.  Speeds use ``|v|^{-3}`` linear in time, the analogous exact
    form for ``|v| ~ |t - t0|^{-1/3}``.  A cell whose nodes straddle a
    collision instant (a "V cell") is split at the estimated collision time,
    where both ``r`` and ``1/|v|`` vanish.
    """

    def __init__(self, path: LoopPath):
        self.path = path
        n, h = path.n, path.step
        r = path.radii
        self.h = h
        self.u = r**1.5
        speed = np.hypot(path.velocities[:, 0], path.velocities[:, 1])
        with np.errstate(divide="ignore"):
            w = np.where(r > 0, speed**-3.0, 0.0)
        self.w = w
        e = _unit(path.positions)
        # collision nodes borrow the direction of their neighbours, per side
        nxt = np.roll(np.arange(n), -1)
        ea = e.copy()
        eb = e[nxt].copy()
        zero = r == 0
        ea[zero] = eb[zero]
        zero_next = zero[nxt]
        eb[zero_next] = ea[zero_next]
        self.ea, self.eb = ea, eb
        ve = _unit(path.velocities)
        va, vb = ve.copy(), ve[nxt].copy()
        va[zero] = vb[zero]
        vb[zero_next] = va[zero_next]
        self.va, self.vb = va, vb
        self.threshold = path.singular_cell_threshold
        self.splits = self._find_splits()
        self.singular = (np.minimum(r, r[nxt]) < self.threshold) | self._collision_zone()

    def _find_splits(self) -> dict[int, float]:
        """Map cell index -> local offset of a collision strictly inside it."""
        path, u, h = self.path, self.u, self.h
        r = path.radii
        n = path.n
        splits: dict[int, float] = {}
        for k in np.flatnonzero(r < self.threshold):
            rl, rr = r[(k - 1) % n], r[(k + 1) % n]
            if r[k] == 0 or r[k] > rl or r[k] > rr:
                continue
            um2, um1, up1, up2 = (u[(k + d) % n] for d in (-2, -1, 1, 2))
            if not (um2 > um1 and up2 > up1):
                continue
            left_zero = -h + um1 * h / (um2 - um1)
            right_zero = h - up1 * h / (up2 - up1)
            if abs(left_zero - right_zero) >= h:
                continue
            t0 = 0.5 * (left_zero + right_zero)
            t0 = min(max(t0, -h), h)
            if t0 < 0:
                splits[int((k - 1) % n)] = h + t0
            else:
                splits[int(k)] = t0
        return splits

    def _collision_zone(self) -> np.ndarray:
        """Cells on the monotone radial flanks of every collision below the threshold."""
        r = self.path.radii
        n = self.path.n
        zone = np.zeros(n, dtype=bool)
        for k in np.flatnonzero(r < self.threshold):
            if r[k] > r[(k - 1) % n] or r[k] > r[(k + 1) % n]:
                continue
            j = k
            for _ in range(n // 2):
                zone[j % n] = True
                if r[(j + 2) % n] <= r[(j + 1) % n]:
                    break
                j += 1
            j = k
            for _ in range(n // 2):
                zone[(j - 1) % n] = True
                if r[(j - 2) % n] <= r[(j - 1) % n]:
                    break
                j -= 1
        return zone

    # -- cell evaluation ----------------------------------------------------

    def _locate(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        tau = np.mod(t, self.path.period)
        j = np.minimum((tau // self.h).astype(int), self.path.n - 1)
        return j, tau - j * self.h

    def cell_state(self, j, s):
        """Radius, unit direction, speed and unit velocity direction at offset s of cell j."""
        j = np.asarray(j, dtype=int)
        s = np.asarray(s, dtype=float)
        n, h = self.path.n, self.h
        jn = (j + 1) % n
        ua, ub = self.u[j], self.u[jn]
        wa, wb = self.w[j], self.w[jn]
        lam = s / h
        u = ua + (ub - ua) * lam
        with np.errstate(invalid="ignore"):
            # w is infinite at a node with zero speed (a turning point); such
            # cells are never integrated with the speed model
            w = wa + (wb - wa) * lam
        d = self.ea[j] * (1 - lam)[..., None] + self.eb[j] * lam[..., None]
        vd = self.va[j] * (1 - lam)[..., None] + self.vb[j] * lam[..., None]
        if self.splits:
            theta = np.array([self.splits.get(int(c), np.nan) for c in np.ravel(j)]).reshape(j.shape)
            has = ~np.isnan(theta)
            if np.any(has):
                left = has & (s <= theta)
                right = has & (s > theta)
                with np.errstate(invalid="ignore", divide="ignore"):
                    fl = np.where(theta > 0, 1 - s / theta, 0.0)
                    fr = np.where(h - theta > 0, (s - theta) / (h - theta), 0.0)
                u = np.where(left, ua * fl, np.where(right, ub * fr, u))
                w = np.where(left, wa * fl, np.where(right, wb * fr, w))
                d = np.where(left[..., None], self.ea[j], np.where(right[..., None], self.eb[j], d))
                vd = np.where(left[..., None], self.va[j], np.where(right[..., None], self.vb[j], vd))
        r = np.maximum(u, 0.0) ** (2.0 / 3.0)
        with np.errstate(divide="ignore"):
            speed = np.where(w > 0, np.maximum(w, 0.0) ** (-1.0 / 3.0), np.inf)
        return r, _unit(d), speed, _unit(vd)

    def position(self, t) -> np.ndarray:
        r, d, _, _ = self.cell_state(*self._locate(t))
        return r[..., None] * d

    def radius(self, t) -> np.ndarray:
        return self.cell_state(*self._locate(t))[0]

    def velocity(self, t) -> np.ndarray:
        """Interpolated velocity; linear in regular cells, collision-model in singular ones."""
        j, s = self._locate(t)
        n = self.path.n
        v = self.path.velocities
        lam = (s / self.h)[..., None]
        lin = v[j] * (1 - lam) + v[(j + 1) % n] * lam
        _, _, speed, vd = self.cell_state(j, s)
        with np.errstate(invalid="ignore"):
            model = speed[..., None] * vd  # undefined exactly at a collision instant
        sing = self.singular[j] | np.isin(j, list(self.splits))
        return np.where(sing[..., None], model, lin)

    def breakpoints(self, a: float, b: float) -> list[tuple[int, float, float]]:
        """Split [a, b] into pieces (cell, local start, local end) along nodes and V-splits."""
        h, n = self.h, self.path.n
        if b <= a:
            return []
        pieces = []
        first = math.floor(a / h + 1e-12)
        last = math.ceil(b / h - 1e-12)
        for c in range(first, last):
            lo = max(a, c * h) - c * h
            hi = min(b, (c + 1) * h) - c * h
            # snap round-off onto nodes: |t - t0|^{-2/3} integrands magnify a
            # sliver eps into an error of order eps^{1/3}
            snap = 1e-12 * h
            lo = 0.0 if abs(lo) < snap else (h if abs(lo - h) < snap else lo)
            hi = h if abs(hi - h) < snap else (0.0 if abs(hi) < snap else hi)
            if hi - lo <= 0:
                continue
            cell = c % n
            theta = self.splits.get(cell)
            if theta is not None and lo < theta < hi:
                pieces.append((cell, lo, theta))
                pieces.append((cell, theta, hi))
            else:
                pieces.append((cell, lo, hi))
        return pieces


# ---------------------------------------------------------------------------
# Winding / constraint classes


@dataclass(frozen=True)
class ConstraintClass:
    tag: str  # "Xc", "Xr" or "Outside"
    winding: int | None
    min_radius: float
    argmin_time: float


def _angle_increments(path: LoopPath) -> np.ndarray:
    x = path.positions
    if np.any(path.radii == 0):
        raise PathTouchesOrigin("path has a sample at the origin")
    y = np.roll(x, -1, axis=0)
    cross = x[:, 0] * y[:, 1] - x[:, 1] * y[:, 0]
    dot = np.einsum("ij,ij->i", x, y)
    inc = np.arctan2(cross, dot)
    # arctan2 returns pi for exactly opposite points
    if np.any(np.abs(inc) >= np.pi * (1 - 1e-12)):
        raise AmbiguousWinding("per-step angular increment reached pi; refine the grid")
    return inc


def winding_number(path: LoopPath) -> int:
    total = _angle_increments(path).sum() / (2 * np.pi)
    return int(round(total))


def classify(path: LoopPath) -> ConstraintClass:
    r = path.radii
    k = int(np.argmin(r))
    rmin = float(r[k])
    tmin = float(k * path.step)
    if rmin <= path.collision_threshold:
        return ConstraintClass("Xc", None, rmin, tmin)
    w = winding_number(path)
    if w != 0:
        return ConstraintClass("Xr", w, rmin, tmin)
    return ConstraintClass("Outside", 0, rmin, tmin)


def poincare_ratio(path: LoopPath) -> float:
    """Ratio of the periodic-trapezoid integrals of ``|x|^2`` and ``|xdot|^2``."""
    h = path.step
    num = h * float(np.sum(path.radii**2))
    den = h * float(np.sum(path.velocities**2))
    if den == 0:
        raise ZeroVelocity("path has zero kinetic energy")
    return num / den


def polar_decompose(path: LoopPath) -> tuple[np.ndarray, np.ndarray]:
    """Return (rho, theta) with theta a continuous branch of length N + 1.

    ``theta[N] - theta[0]`` equals ``2 pi`` times the winding number.
    """
    inc = _angle_increments(path)
    x = path.positions
    theta0 = math.atan2(x[0, 1], x[0, 0]) % (2 * np.pi)
    theta = theta0 + np.concatenate([[0.0], np.cumsum(inc)])
    return path.radii.copy(), theta


# ---------------------------------------------------------------------------
# Random loops


def random_fourier_loop(
    rng: np.random.Generator,
    period: float,
    n: int,
    degree: int = 5,
    kind: str = "Xr",
    max_tries: int = 200,
) -> LoopPath:
    """Random trigonometric loop in Xr (encloses the origin) or Xc (passes through it).

    Coefficients are uniform in [-1, 1]; velocities come from the exact derivative.
    """
    t = np.arange(n) * (period / n)
    om = 2 * np.pi / period
    for _ in range(max_tries):
        deg = int(rng.integers(1, degree + 1))
        a = rng.uniform(-1, 1, size=(deg, 2))
        b = rng.uniform(-1, 1, size=(deg, 2))
        m = np.arange(1, deg + 1)
        c, s = np.cos(np.outer(t, m) * om), np.sin(np.outer(t, m) * om)
        x = c @ a + s @ b
        v = om * (-(s * m) @ a + (c * m) @ b)
        if kind == "Xc":
            k = int(rng.integers(n))
            path = LoopPath(period, x - x[k], v)
            if np.sum(v**2) > 0:
                return path
            continue
        lo, hi = x.min(axis=0), x.max(axis=0)
        for _ in range(50):
            shift = rng.uniform(lo, hi)
            path = LoopPath(period, x - shift, v)
            try:
                if path.min_radius > 1e-3 * path.scale and winding_number(path) != 0:
                    return path
            except AmbiguousWinding:
                break
    raise RuntimeError("could not generate a loop of the requested class")


# ---------------------------------------------------------------------------
# CSV


def _fmt(value: float) -> str:
    return format(float(value), ".12g")


def loop_to_csv(path: LoopPath) -> str:
    buf = io.StringIO()
    buf.write("t,x1,x2,v1,v2\n")
    for t, x, v in zip(path.times, path.positions, path.velocities):
        buf.write(",".join(_fmt(q) for q in (t, x[0], x[1], v[0], v[1])) + "\n")
    return buf.getvalue()


def write_loop_csv(path: LoopPath, filename) -> None:
    Path(filename).write_text(loop_to_csv(path))


def read_loop_csv(filename, period: float | None = None) -> LoopPath:
    """Read a loop CSV.  The period defaults to N times the uniform step."""
    rows = list(csv.reader(io.StringIO(Path(filename).read_text())))
    if not rows or [c.strip() for c in rows[0]] != ["t", "x1", "x2", "v1", "v2"]:
        raise ValueError("expected header t,x1,x2,v1,v2")
    data = np.array([[float(c) for c in row] for row in rows[1:] if row], dtype=float)
    t = data[:, 0]
    if np.any(np.diff(t) <= 0):
        raise ValueError("time column must be strictly increasing")
    if period is None:
        period = float((t[-1] - t[0]) * len(t) / (len(t) - 1))
    return LoopPath(period, data[:, 1:3], data[:, 3:5])
