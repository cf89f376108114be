"""Randomized invariants driven by hypothesis."""

import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from forced_kepler.action import action, action_gradient, coercivity_bound
from forced_kepler.cli import RunConfig, parse_config, serialize_config
from forced_kepler.collision_analysis import blow_up, detect_collisions
from forced_kepler.kepler_arcs import PHI0, S0, ParabolicCollision, solve_arcs, zeta0
from forced_kepler.loops import LoopPath, classify, poincare_ratio, polar_decompose, random_fourier_loop, winding_number
from forced_kepler.potentials import fourier_forcing, linear_potential, radial_power
from forced_kepler.synthetic import zeta0_bounce_path

SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
SLOW = settings(max_examples=6, deadline=None, suppress_health_check=[HealthCheck.too_slow])

seeds = st.integers(min_value=0, max_value=2**32 - 1)
periods = st.floats(min_value=0.5, max_value=20.0)
angles = st.floats(min_value=0.0, max_value=2 * math.pi)
coeffs = st.lists(st.floats(min_value=-1.0, max_value=1.0), min_size=2, max_size=6).filter(lambda c: len(c) % 2 == 0)


def fourier_curve(seed, degree, winding):
    rng = np.random.default_rng(seed)
    a = rng.uniform(-0.15, 0.15, size=(degree, 2))
    b = rng.uniform(-0.15, 0.15, size=(degree, 2))

    def fn(t):
        m = np.arange(1, degree + 1)
        c, s = np.cos(np.outer(t, m)), np.sin(np.outer(t, m))
        base = np.column_stack([np.cos(winding * t), np.sin(winding * t)])
        return base + c @ a + s @ b

    return fn


@SETTINGS
@given(seed=seeds, degree=st.integers(1, 5), winding=st.integers(-3, 3).filter(bool))
def test_winding_refinement_and_reversal(seed, degree, winding):
    fn = fourier_curve(seed, degree, winding)
    coarse = LoopPath.from_function(fn, 2 * math.pi, 64)
    fine = LoopPath.from_function(fn, 2 * math.pi, 128)
    w = winding_number(coarse)
    assert w == winding_number(fine) == winding
    assert winding_number(coarse.reversed()) == -w


@SETTINGS
@given(seed=seeds, period=periods, kind=st.sampled_from(["Xr", "Xc"]))
def test_poincare_bound(seed, period, kind):
    path = random_fourier_loop(np.random.default_rng(seed), period, 128, kind=kind)
    assert classify(path).tag == kind
    assert poincare_ratio(path) <= 2 * period**2


@SETTINGS
@given(seed=seeds)
def test_polar_reconstruction(seed):
    path = random_fourier_loop(np.random.default_rng(seed), 2 * math.pi, 96)
    rho, theta = polar_decompose(path)
    rebuilt = rho[:, None] * np.column_stack([np.cos(theta[:-1]), np.sin(theta[:-1])])
    np.testing.assert_allclose(rebuilt, path.positions, atol=1e-12 * path.scale)
    assert theta[-1] - theta[0] == pytest.approx(2 * math.pi * winding_number(path), abs=1e-9)
    assert 0 <= theta[0] < 2 * math.pi


@SETTINGS
@given(seed=seeds, cut=st.integers(1, 127), cos=coeffs, sin=coeffs)
def test_action_additivity_on_grid(seed, cut, cos, sin):
    T = 2 * math.pi
    path = random_fourier_loop(np.random.default_rng(seed), T, 128)
    U = linear_potential(fourier_forcing(T, cos, sin))
    mid = cut * path.step
    whole = action(path, U).total
    assert action(path, U, 0.0, mid).total + action(path, U, mid, T).total == pytest.approx(whole, rel=1e-11)


@SETTINGS
@given(seed=seeds, period=periods, coefficient=st.floats(0.0, 2.0), exponent=st.floats(1.0, 1.9))
def test_coercivity_bound_below_action(seed, period, coefficient, exponent):
    path = random_fourier_loop(np.random.default_rng(seed), period, 128)
    U = radial_power(period, coefficient, exponent)
    assert coercivity_bound(path, U) <= action(path, U).total


@SETTINGS
@given(seed=seeds, shift=st.floats(-50.0, 50.0))
def test_gradient_ignores_constant_shift(seed, shift):
    T = 2 * math.pi
    path = random_fourier_loop(np.random.default_rng(seed), T, 64)
    U = radial_power(T, 0.4, 1.5)
    V = type(U)(T, lambda t, x: U.value(t, x) + shift, U.gradient, U.time_derivative, U.growth)
    np.testing.assert_array_equal(action_gradient(path, U), action_gradient(path, V))


@SETTINGS
@given(cos=coeffs, sin=coeffs, t=st.floats(0.0, 10.0), x=st.tuples(st.floats(-5, 5), st.floats(-5, 5)))
def test_linear_potential_contracts(cos, sin, t, x):
    T = 2.5
    U = linear_potential(fourier_forcing(T, cos, sin))
    assert U.eval(t + T, x)[0] == pytest.approx(U.eval(t, x)[0], abs=1e-10)
    np.testing.assert_array_equal(U.grad_x(t, x), U.grad_x(t, (0.3, -0.7)))
    eps = 1e-6
    fd = (U.eval(t + eps, x)[0] - U.eval(t - eps, x)[0]) / (2 * eps)
    assert U.dt(t, x)[0] == pytest.approx(fd, abs=1e-5 * max(1.0, abs(fd)))


@SETTINGS
@given(a=angles, b=angles)
def test_zeta0_reaches_unit_circle_at_s0(a, b):
    pc = ParabolicCollision((math.cos(a), math.sin(a)), (math.cos(b), math.sin(b)))
    np.testing.assert_allclose(zeta0(pc, S0), pc.dir_plus, atol=1e-14)
    np.testing.assert_allclose(zeta0(pc, -S0), pc.dir_minus, atol=1e-14)


@SLOW
@given(a=angles, sep=st.floats(math.radians(5), math.radians(175)), rot=angles)
def test_arcs_inequality_and_rotation(a, sep, rot):
    xm = np.array([math.cos(a), math.sin(a)])
    xp = np.array([math.cos(a + sep), math.sin(a + sep)])
    base = solve_arcs(xm, xp)
    c, s = math.cos(rot), math.sin(rot)
    R = np.array([[c, -s], [s, c]])
    turned = solve_arcs(R @ xm, R @ xp)
    for arc, other in zip(base, turned):
        assert arc.action < PHI0 - 1e-3
        np.testing.assert_allclose(arc.samples @ R.T, other.samples, atol=1e-8)


@SLOW
@given(a=angles, sep=st.floats(0.2, math.pi - 0.2))
def test_blow_up_of_pure_model_is_exact(a, sep):
    xm = (math.cos(a), math.sin(a))
    xp = (math.cos(a + sep), math.sin(a + sep))
    path, _ = zeta0_bounce_path(n=1024, x_minus=xm, x_plus=xp)
    ev = detect_collisions(path)[0]
    for prof in blow_up(path, ev, [0.2, 0.1, 0.05]):
        assert prof.sigma_minus == pytest.approx(S0, abs=1e-6)
        assert prof.sigma_plus == pytest.approx(S0, abs=1e-6)


@SETTINGS
@given(
    period=st.floats(0.1, 100.0),
    grid=st.integers(8, 4096),
    seed=st.integers(0, 10**6),
    winding=st.integers(-5, 5).filter(bool),
    tol=st.floats(1e-12, 1e-2),
    deltas=st.lists(st.floats(1e-4, 1.0), max_size=4),
)
def test_config_round_trip(period, grid, seed, winding, tol, deltas):
    text = "\n".join(
        [
            f"period = {period!r}",
            f"grid = {grid}",
            f"seed = {seed}",
            f"minimize.winding = {winding}",
            f"minimize.tol_grad = {tol!r}",
            "analysis.deltas = " + ", ".join(repr(d) for d in deltas),
        ]
    )
    cfg = parse_config(text)
    assert isinstance(cfg, RunConfig)
    assert parse_config(serialize_config(cfg)) == cfg
