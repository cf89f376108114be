"""Descent on the discretized action over loops with a prescribed winding number.

Each start runs a Fourier-preconditioned gradient descent (optionally with a
limited-memory quasi-Newton correction) and an Armijo backtracking line
search.  Trial points that change the winding
number are rejected and the step is halved, so every accepted iterate stays in
the requested homotopy class.  Collisions are approached through a softening
continuation: the Keplerian term ``1/|x|`` is replaced by
``1/sqrt(|x|^2 + eps^2)`` and ``eps`` is lowered stage by stage down to zero.

Intermediate stages are solved inexactly, to a gradient tolerance of
``eps`` times the force scale ``1/mean_radius^2``.  Softening lowers the action
of eccentric loops most, so an exactly converged softened stage slides toward
a near-collision loop; stopping early keeps the continuation a regularizer.
A long quasi-Newton memory has the same effect, because it accelerates along
the nearly flat eccentricity direction of the Kepler family; a short memory
(three pairs by default) speeds up weakly forced problems without that drift.
With ``memory = 0`` the descent uses Barzilai-Borwein trial steps instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .action import ActionBreakdown, action, discrete_action, discrete_gradient, gradient_safe_radius
from .errors import AmbiguousWinding, NoConvergence, PathTouchesOrigin, TooCloseToCollision, WindingLost
from .loops import ConstraintClass, LoopPath, classify, winding_number
from .potentials import Potential

DEFAULT_SOFTENING = (1e-1, 1e-2, 1e-3, 1e-4, 0.0)


@dataclass(frozen=True)
class MinimizeConfig:
    winding: int = 1
    N: int = 256
    max_iters: int = 2000
    tol_grad: float = 2e-5
    tol_step: float = 1e-13
    starts: int = 8
    seed: int = 0
    softening_schedule: tuple[float, ...] = DEFAULT_SOFTENING
    degree: int = 5
    memory: int = 3

    def __post_init__(self):
        if int(self.winding) != self.winding or self.winding == 0:
            raise ValueError("winding must be a nonzero integer")
        if self.N < 8:
            raise ValueError("N must be at least 8")
        if self.max_iters < 1 or self.starts < 1:
            raise ValueError("max_iters and starts must be positive")
        if not (self.tol_grad > 0 and self.tol_step > 0):
            raise ValueError("tol_grad and tol_step must be positive")
        sched = tuple(float(e) for e in self.softening_schedule)
        if not sched or sched[-1] != 0.0:
            raise ValueError("softening_schedule must end at 0")
        if any(e < 0 for e in sched) or any(b >= a for a, b in zip(sched, sched[1:])):
            raise ValueError("softening_schedule must be strictly decreasing and nonnegative")
        object.__setattr__(self, "softening_schedule", sched)


@dataclass(frozen=True)
class StageRecord:
    softening: float
    iterations: int
    action: float
    grad_norm: float
    converged: bool
    history: tuple[float, ...] = field(repr=False, default=())


@dataclass(frozen=True, eq=False)
class MinimizeResult:
    path: LoopPath
    action: ActionBreakdown
    constraint: ConstraintClass
    grad_norm: float  # max node force of the discrete gradient, in units of circular_force_scale
    iterations: int
    collided: bool
    collision_suspects: tuple[float, ...]
    converged: bool = True
    start: int = 0
    stages: tuple[StageRecord, ...] = ()


# ---------------------------------------------------------------------------
# Residuals


def euler_lagrange_residual(path: LoopPath, U: Potential) -> float:
    """``max_k |xddot_k + x_k/|x_k|^3 - grad U(t_k, x_k)|`` with centered second differences."""
    if path.min_radius <= gradient_safe_radius(path):
        raise TooCloseToCollision(
            f"min radius {path.min_radius:.3e} below gradient safe radius {gradient_safe_radius(path):.3e}"
        )
    x, h = path.positions, path.step
    acc = (np.roll(x, -1, axis=0) - 2 * x + np.roll(x, 1, axis=0)) / h**2
    r3 = path.radii[:, None] ** 3
    res = acc + x / r3 - U.grad_x(path.times, x)
    return float(np.max(np.hypot(res[:, 0], res[:, 1])))


def _force_norm(g: np.ndarray, h: float) -> float:
    """Gradient of the discrete functional expressed in force units (g / h)."""
    return float(np.max(np.hypot(g[:, 0], g[:, 1]))) / h


def circular_force_scale(period: float, winding: int) -> float:
    """Gravitational force ``1/R^2`` on the circular orbit with this period and winding.

    Gradient norms are measured in this unit, so a tolerance means the same
    thing for every period: the discretized Kepler problem is invariant under
    ``x -> c x, t -> c^{3/2} t`` with forces scaling as ``c^{-2}``.
    """
    radius = (period / (2 * np.pi * abs(winding))) ** (2.0 / 3.0)
    return 1.0 / radius**2


# ---------------------------------------------------------------------------
# Initialization


def random_initial_loop(rng: np.random.Generator, period: float, n: int, winding: int, degree: int = 5) -> np.ndarray:
    """Trigonometric polynomial of degree <= ``degree`` dominated by ``e^{i w 2 pi t / T}``."""
    w = int(winding)
    radius = (period / (2 * np.pi * abs(w))) ** (2.0 / 3.0)
    t = np.arange(n) * (period / n)
    om = 2 * np.pi / period
    for _ in range(100):
        amp = radius * rng.uniform(0.6, 1.6)
        z = amp * np.exp(1j * (w * om * t + rng.uniform(0, 2 * np.pi)))
        for k in range(-degree, degree + 1):
            if k == w:
                continue
            c = complex(*rng.uniform(-1, 1, 2)) * 0.12 * amp / max(1, abs(k))
            z = z + c * np.exp(1j * k * om * t)
        x = np.column_stack([z.real, z.imag])
        path = LoopPath.from_positions(x, period)
        try:
            if path.min_radius > 1e-3 * radius and winding_number(path) == w:
                return x
        except (AmbiguousWinding, PathTouchesOrigin):
            pass
    raise RuntimeError("could not draw an initial loop with the requested winding")


# ---------------------------------------------------------------------------
# One softening stage


def _preconditioner(n: int, h: float, stiffness: float):
    """Inverse of ``(2 - 2 cos)/h + stiffness * h`` applied per Fourier mode."""
    lam = (2 - 2 * np.cos(2 * np.pi * np.arange(n) / n)) / h + stiffness * h

    def apply(g: np.ndarray) -> np.ndarray:
        return np.real(np.fft.ifft(np.fft.fft(g, axis=0) / lam[:, None], axis=0))

    return apply


def _winding_ok(x: np.ndarray, period: float, winding: int) -> bool:
    try:
        return winding_number(LoopPath(period, x, np.zeros_like(x))) == winding
    except (AmbiguousWinding, PathTouchesOrigin):
        return False


@dataclass
class _StageOutcome:
    x: np.ndarray
    record: StageRecord
    hit_collision: bool
    stalled: bool = False  # the line search found no admissible decrease


def descend(
    x0: np.ndarray,
    period: float,
    U: Potential,
    softening: float,
    winding: int,
    max_iters: int = 2000,
    tol_grad: float = 2e-5,
    tol_step: float = 1e-13,
    memory: int = 3,
    collision_radius: float = 0.0,
    force_scale: float = 1.0,
) -> _StageOutcome:
    """Minimize the softened discrete action from ``x0`` keeping the winding number.

    Stops when the gradient in force units, divided by ``force_scale``, drops
    below ``tol_grad``, when the
    accepted step falls below ``tol_step`` (relative to the loop size), when
    ``max_iters`` is exhausted, or, at zero softening, when the loop gets
    within ``collision_radius`` of the origin.
    """
    x = np.array(x0, dtype=float)
    n = x.shape[0]
    h = period / n
    f = lambda y: discrete_action(y, period, U, softening)
    grad = lambda y: discrete_gradient(y, period, U, softening)
    mean_r = float(np.mean(np.hypot(x[:, 0], x[:, 1])))
    precond = _preconditioner(n, h, 1.0 / max(mean_r, 1e-12) ** 3)
    fx, g = f(x), grad(x)
    history = [fx]
    s_list: list[np.ndarray] = []
    y_list: list[np.ndarray] = []
    it = 0
    converged = False
    hit = False
    stalled = False
    trial = 1.0
    for it in range(1, max_iters + 1):
        gn = _force_norm(g, h) / force_scale
        if gn <= tol_grad:
            converged = True
            it -= 1
            break
        # two-loop recursion with the Fourier preconditioner as initial inverse Hessian
        q = g.ravel().copy()
        alphas = []
        for s, y in zip(reversed(s_list), reversed(y_list)):
            rho = 1.0 / float(y @ s)
            a = rho * float(s @ q)
            alphas.append((a, rho, s, y))
            q -= a * y
        r = precond(q.reshape(n, 2)).ravel()
        for a, rho, s, y in reversed(alphas):
            b = rho * float(y @ r)
            r += (a - b) * s
        d = -r
        slope = float(g.ravel() @ d)
        if not slope < 0:
            s_list.clear()
            y_list.clear()
            d = -precond(g).ravel()
            slope = float(g.ravel() @ d)
        step = trial
        accepted = False
        while step > 1e-20:
            xt = x + step * d.reshape(n, 2)
            if _winding_ok(xt, period, winding):
                ft = f(xt)
                if np.isfinite(ft) and ft <= fx + 1e-4 * step * slope:
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            if not _winding_ok(x + 1e-20 * d.reshape(n, 2), period, winding):
                raise WindingLost("line search underflowed while protecting the winding number")
            stalled = True
            break  # no further decrease available at floating-point resolution
        gt = grad(xt)
        s_vec = (xt - x).ravel()
        y_vec = (gt - g).ravel()
        move = float(np.max(np.abs(s_vec))) / max(mean_r, 1e-300)
        if memory == 0:
            # Barzilai-Borwein length in the preconditioned metric as the next trial step
            py = precond(y_vec.reshape(n, 2)).ravel()
            sy, ypy = float(s_vec @ y_vec), float(y_vec @ py)
            trial = min(max(sy / ypy, 1.0), 1e3) if sy > 0 and ypy > 0 else 1.0
        if float(y_vec @ s_vec) > 1e-14 * float(s_vec @ s_vec) / h:
            s_list.append(s_vec)
            y_list.append(y_vec)
            if len(s_list) > memory:
                s_list.pop(0)
                y_list.pop(0)
        x, fx, g = xt, ft, gt
        history.append(fx)
        if softening == 0 and collision_radius > 0:
            if float(np.min(np.hypot(x[:, 0], x[:, 1]))) <= collision_radius:
                hit = True
                break
        if move < tol_step:
            stalled = True
            break
    gn = _force_norm(g, h) / force_scale
    converged = converged or gn <= tol_grad
    record = StageRecord(softening, it, fx, gn, converged, tuple(history))
    return _StageOutcome(x, record, hit, stalled and not converged)


# ---------------------------------------------------------------------------
# Multi-start driver


def _collision_suspects(path: LoopPath, radius: float) -> tuple[float, ...]:
    r = path.radii
    n = path.n
    idx = [
        k
        for k in range(n)
        if r[k] <= radius and r[k] <= r[(k - 1) % n] and r[k] <= r[(k + 1) % n]
    ]
    return tuple(float(path.times[k]) for k in idx)


def _run_start(U: Potential, cfg: MinimizeConfig, rng: np.random.Generator, start: int) -> MinimizeResult:
    period = U.period
    x = random_initial_loop(rng, period, cfg.N, cfg.winding, cfg.degree)
    mean_r = float(np.mean(np.hypot(x[:, 0], x[:, 1])))
    stages = []
    total_iters = 0
    hit = False
    force_scale = circular_force_scale(period, cfg.winding)
    for eps_unit in cfg.softening_schedule:
        eps = eps_unit * mean_r
        tol = max(cfg.tol_grad, eps_unit / (force_scale * mean_r**2))
        scale = float(np.max(np.hypot(x[:, 0], x[:, 1])))
        # the raw node force is unusable below the gradient-safe radius; treat reaching it as a collision
        crash = max(1e-6 * (scale + 1.0), 1e-4 * scale)
        out = descend(
            x, period, U, eps, cfg.winding, cfg.max_iters, tol, cfg.tol_step, cfg.memory, crash, force_scale
        )
        x = out.x
        stages.append(out.record)
        total_iters += out.record.iterations
        hit = out.hit_collision
    path = LoopPath.from_positions(x, period)
    suspect_radius = max(path.collision_threshold, gradient_safe_radius(path))
    # A descent that stalls inside the grid's collision horizon is heading for
    # X_c at a resolution the grid cannot follow; report it as a collision.
    if out.stalled and path.min_radius < path.singular_cell_threshold:
        hit = True
        suspect_radius = path.singular_cell_threshold
    collided = hit or path.min_radius <= path.collision_threshold
    suspects = _collision_suspects(path, suspect_radius) if collided else ()
    final = stages[-1]
    return MinimizeResult(
        path=path,
        action=action(path, U),
        constraint=classify(path),
        grad_norm=final.grad_norm,
        iterations=total_iters,
        collided=collided,
        collision_suspects=suspects,
        converged=final.converged,
        start=start,
        stages=tuple(stages),
    )


def _better(a: MinimizeResult, b: MinimizeResult) -> bool:
    """True when ``a`` beats ``b``: smaller action, ties within 1e-10 by smaller grad_norm."""
    if abs(a.action.total - b.action.total) <= 1e-10:
        if a.grad_norm != b.grad_norm:
            return a.grad_norm < b.grad_norm
        return a.start < b.start
    return a.action.total < b.action.total


def minimize(U: Potential, cfg: MinimizeConfig, return_all: bool = False):
    """Best of ``cfg.starts`` softening-continuation descents with winding ``cfg.winding``.

    With ``return_all=True`` the list of per-start results is returned as well.
    """
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.starts)
    results = [_run_start(U, cfg, np.random.default_rng(s), i) for i, s in enumerate(seeds)]
    usable = [r for r in results if r.converged or r.collided]
    if not usable:
        worst = min(r.grad_norm for r in results)
        raise NoConvergence(
            f"all {cfg.starts} starts exhausted {cfg.max_iters} iterations; best grad norm {worst:.3e}"
        )
    best = usable[0]
    for r in usable[1:]:
        if _better(r, best):
            best = r
    return (best, results) if return_all else best
