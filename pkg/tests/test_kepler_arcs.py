import math

import numpy as np
import pytest
from scipy.integrate import quad

from forced_kepler.errors import AntipodalEndpoints, CoincidentDirections
from forced_kepler.kepler_arcs import (
    ARC_OUTPUT_NODES,
    KAPPA,
    PHI0,
    S0,
    ParabolicCollision,
    concatenation_winding,
    constants,
    energies_agree,
    lambert_relation_check,
    solve_arcs,
    zeta0,
    zeta0_lagrangian,
)

# Arc actions and energies from an independent collocation solve (scipy solve_bvp,
# tol 1e-9) followed by adaptive quadrature of the Lagrangian.
ORACLE = {
    "quarter": dict(direct=(2.165909168254, 0.067686995210), indirect=(5.264699494623, 0.469692958726)),
    "sixty": dict(direct=(2.881990403360, 0.519758112627), indirect=(4.979750601052, 0.674997723638)),
}


def unit(angle):
    return np.array([math.cos(angle), math.sin(angle)])


def rotation(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


@pytest.fixture(scope="module")
def quarter_arcs():
    return solve_arcs((1.0, 0.0), (0.0, 1.0))


class TestConstants:
    def test_values(self):
        s0, phi0 = constants()
        assert s0 == pytest.approx(math.sqrt(2) / 3, rel=1e-15)
        assert phi0 == pytest.approx(4 * 8 ** (1 / 6), rel=1e-15)
        assert phi0 == pytest.approx(4 * math.sqrt(2), rel=1e-15)
        assert 2 * s0 == pytest.approx(2 * math.sqrt(2) / 3, rel=1e-15)

    def test_unit_radius_at_s0(self):
        assert (4.5 * S0**2) ** (1 / 3) == pytest.approx(1.0, rel=1e-15)

    def test_phi0_by_quadrature(self):
        # substitute t = u^3 so the integrable t^{-2/3} singularity disappears
        val = quad(lambda u: 3 * u**2 * float(zeta0_lagrangian(u**3)), 0.0, S0 ** (1 / 3), epsabs=0, epsrel=1e-12)[0]
        assert 2 * val == pytest.approx(PHI0, abs=1e-10)


class TestZeta0:
    pc = ParabolicCollision((1.0, 0.0), (0.0, 1.0))

    def test_origin_at_zero(self):
        np.testing.assert_array_equal(zeta0(self.pc, 0.0), [0.0, 0.0])

    def test_endpoints(self):
        np.testing.assert_allclose(zeta0(self.pc, S0), [0.0, 1.0], atol=1e-15)
        np.testing.assert_allclose(zeta0(self.pc, -S0), [1.0, 0.0], atol=1e-15)

    def test_zero_energy(self):
        t = np.linspace(0.01, 1.0, 50)
        r = KAPPA * t ** (2 / 3)
        speed = (2 / 3) * KAPPA * t ** (-1 / 3)
        np.testing.assert_allclose(0.5 * speed**2 - 1 / r, 0.0, atol=1e-12)

    def test_requires_unit_directions(self):
        with pytest.raises(ValueError):
            ParabolicCollision((2.0, 0.0), (0.0, 1.0))


class TestSolveArcs:
    @pytest.mark.parametrize("which", ["direct", "indirect"])
    def test_quarter_against_collocation_oracle(self, quarter_arcs, which):
        arc = quarter_arcs[0] if which == "direct" else quarter_arcs[1]
        A, H = ORACLE["quarter"][which]
        assert arc.label == which
        assert arc.action == pytest.approx(A, abs=1e-8)
        assert arc.energy == pytest.approx(H, abs=1e-8)

    def test_quarter_invariants(self, quarter_arcs):
        for arc in quarter_arcs:
            assert arc.boundary_residual <= 1e-8
            assert arc.energy_drift <= 1e-8
            assert arc.action < PHI0
            assert arc.min_radius > 0
            assert arc.ell == pytest.approx(2.0, abs=1e-8)
            assert arc.transfer_time == pytest.approx(2 * S0)
            assert arc.chord == pytest.approx(math.sqrt(2))
        assert abs(concatenation_winding(*quarter_arcs)) == 1

    def test_dense_output_and_samples_agree(self, quarter_arcs):
        arc = quarter_arcs[1]
        assert arc.samples.shape == (ARC_OUTPUT_NODES, 2)
        np.testing.assert_allclose(arc(arc.times), arc.samples, atol=1e-12)
        np.testing.assert_allclose(arc.velocity(arc.times), arc.sample_velocities, atol=1e-12)

    def test_symmetric_pair(self):
        th = math.pi / 3
        direct, indirect = solve_arcs((math.cos(th), -math.sin(th)), (math.cos(th), math.sin(th)))
        assert direct.action == pytest.approx(ORACLE["sixty"]["direct"][0], abs=1e-8)
        assert indirect.action == pytest.approx(ORACLE["sixty"]["indirect"][0], abs=1e-8)
        assert direct.action < indirect.action
        flip = np.array([1.0, -1.0])
        for arc in (direct, indirect):
            # reflecting in the x-axis and reversing time maps each arc to itself
            np.testing.assert_allclose(arc.samples[::-1] * flip, arc.samples, atol=1e-8)

    @pytest.mark.parametrize("angle", [0.3, 1.7, -2.5])
    def test_rotation_equivariance(self, quarter_arcs, angle):
        R = rotation(angle)
        rotated = solve_arcs(R @ [1.0, 0.0], R @ [0.0, 1.0])
        for a, b in zip(quarter_arcs, rotated):
            assert a.label == b.label
            np.testing.assert_allclose(a.samples @ R.T, b.samples, atol=1e-8)
            assert a.action == pytest.approx(b.action, abs=1e-9)

    def test_reflection_equivariance(self, quarter_arcs):
        M = np.array([[1.0, 0.0], [0.0, -1.0]])
        reflected = solve_arcs(M @ [1.0, 0.0], M @ [0.0, 1.0])
        for a, b in zip(quarter_arcs, reflected):
            np.testing.assert_allclose(a.samples @ M.T, b.samples, atol=1e-8)

    def test_continuity(self):
        base = solve_arcs(unit(0.2), unit(1.4))
        moved = solve_arcs(unit(0.2 + 1e-4), unit(1.4 - 1e-4))
        for a, b in zip(base, moved):
            assert abs(a.action - b.action) <= 1e-2

    def test_antipodal_rejected(self):
        with pytest.raises(AntipodalEndpoints):
            solve_arcs((1.0, 0.0), (-1.0, 0.0))

    def test_coincident_rejected(self):
        with pytest.raises(CoincidentDirections):
            solve_arcs((1.0, 0.0), (1.0, 0.0))

    def test_non_unit_rejected(self):
        with pytest.raises(ValueError):
            solve_arcs((2.0, 0.0), (0.0, 1.0))

    def test_csv(self, quarter_arcs):
        lines = quarter_arcs[0].to_csv().splitlines()
        assert lines[0] == "t,xi1,xi2,v1,v2"
        assert len(lines) == ARC_OUTPUT_NODES + 1
        assert float(lines[1].split(",")[0]) == pytest.approx(-S0)


class TestLambert:
    def test_ell_is_two(self, quarter_arcs):
        for arc in quarter_arcs:
            rep = lambert_relation_check(arc)
            assert rep.ell_ok
            assert rep.transfer_time == pytest.approx(2 * S0)

    def test_rotated_pairs_share_energies(self, quarter_arcs):
        R = rotation(2.2)
        assert energies_agree(quarter_arcs, solve_arcs(R @ [1.0, 0.0], R @ [0.0, 1.0]))

    def test_reflected_pairs_share_energies(self):
        a = solve_arcs(unit(0.1), unit(1.3))
        b = solve_arcs(unit(-0.1), unit(-1.3))
        assert energies_agree(a, b)

    def test_unequal_chords_refused(self, quarter_arcs):
        with pytest.raises(ValueError):
            energies_agree(quarter_arcs, solve_arcs(unit(0.0), unit(0.5)))
