# =========================================
# file: tests/test_interferometer.py
# =========================================
import numpy as np
import pytest

from tools.interferometer import (
    SuSetup,
    XySplit,
    balanced_mode_identity,
    balanced_su_spectrum,
    compose,
    fringe_offset,
    fringe_phases,
    optimize_deltaz,
    phi_scan,
    total_intensity,
    visibility,
    xy_split,
)
from tools.jointdecomp import canonicalize_signs, joint_decompose
from tools.lab_errors import FringeError, LatticeMismatchError
from tools.physics import CrystalGeometry, Dispersion, Lattice, PumpProfile, first_pass_kernel, second_pass_kernel
from tools.propagator import identity_pair, integrate_rk, photon_number_density, with_phase

PLANTED = [5.0, 3.0, 2.0, 1.0, 0.5, 0.1]


@pytest.fixture
def balanced(lattice6, planted_pair, balanced_second):
    pass1, _, _ = planted_pair(lattice6, PLANTED)
    return SuSetup(pass1=pass1, pass2_nophase=balanced_second(pass1))


def rotating_split(t):
    """Two-point split whose visibility is 100 |cos t|"""
    lat = Lattice.symmetric(2, 0.5, rule="uniform")
    x = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
    y = np.cos(t) * x + np.sin(t) * np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
    return XySplit(x_hat=x, y_hat=y, xh_hat=np.eye(2), yh_hat=np.zeros((2, 2)), lattice=lat)


class TestCompose:
    """Two passes in sequence"""

    def test_identity_first(self, lattice6, planted_pair, tol):
        tp, _, _ = planted_pair(lattice6, PLANTED)
        out = compose(identity_pair(lattice6), tp)
        assert np.allclose(out.h_hat, tp.h_hat, atol=tol, rtol=0)
        assert np.allclose(out.b_hat, tp.b_hat, atol=tol, rtol=0)

    def test_at_phase_matches_compose(self, lattice6, planted_pair, tol):
        """The X/Y split evaluated at phi equals composing with the phased second pass"""
        p1, _, _ = planted_pair(lattice6, PLANTED)
        p2, _, _ = planted_pair(lattice6, [2.0, 1.5, 1.0, 0.7, 0.3, 0.05])
        split = xy_split(SuSetup(pass1=p1, pass2_nophase=p2))
        for phi in (0.0, 0.8, np.pi, 4.0):
            direct = compose(p1, with_phase(p2, phi))
            fast = split.at_phase(phi)
            assert np.allclose(fast.h_hat, direct.h_hat, atol=tol, rtol=0)
            assert np.allclose(fast.b_hat, direct.b_hat, atol=tol, rtol=0)

    def test_lattice_mismatch(self, lattice6, planted_pair):
        tp, _, _ = planted_pair(lattice6, PLANTED)
        other = identity_pair(Lattice.symmetric(6, 2.0))
        with pytest.raises(LatticeMismatchError):
            compose(tp, other)
        with pytest.raises(LatticeMismatchError):
            SuSetup(pass1=tp, pass2_nophase=other)


SECOND = [2.0, 1.5, 1.0, 0.7, 0.3, 0.05]


@pytest.mark.parametrize("lam2", [PLANTED, SECOND, [0.2] * 6])
@pytest.mark.parametrize("phi", [0.0, 1.3, np.pi, 5.0])
class TestPlantedAlgebra:
    """Composition and fringe identities for arbitrary planted passes"""

    @pytest.fixture
    def passes(self, lattice6, planted_pair, lam2):
        p1, _, _ = planted_pair(lattice6, PLANTED)
        p2, _, _ = planted_pair(lattice6, lam2)
        return p1, p2

    def test_identity_second(self, lattice6, passes, phi, tol):
        p = with_phase(passes[1], phi)
        out = compose(p, identity_pair(lattice6))
        assert np.allclose(out.h_hat, p.h_hat, atol=tol, rtol=0)
        assert np.allclose(out.b_hat, p.b_hat, atol=tol, rtol=0)

    def test_associative(self, passes, phi, tol):
        p1, p2 = passes
        p3 = with_phase(p1, phi)
        left = compose(compose(p1, p2), p3)
        right = compose(p1, compose(p2, p3))
        assert np.allclose(left.h_hat, right.h_hat, atol=tol, rtol=0)
        assert np.allclose(left.b_hat, right.b_hat, atol=tol, rtol=0)

    def test_intensity_is_photon_number(self, lattice6, passes, phi):
        split = xy_split(SuSetup(pass1=passes[0], pass2_nophase=passes[1]))
        photons = np.sum(photon_number_density(split.at_phase(phi)) * lattice6.weights)
        assert np.allclose(total_intensity(split, phi), photons, atol=1e-10 * split.A_norm, rtol=0)

    def test_visibility_from_fringes(self, passes, phi, tol):
        split = xy_split(SuSetup(pass1=passes[0], pass2_nophase=passes[1]))
        bf, df = fringe_phases(split)
        i_bf = total_intensity(split, bf)
        i_df = total_intensity(split, df)
        assert i_bf + tol >= total_intensity(split, phi) >= i_df - tol
        assert np.allclose(100.0 * (i_bf - i_df) / (i_bf + i_df), visibility(split), atol=tol, rtol=0)
        assert np.allclose(visibility(split), 200.0 * abs(split.C) / split.A_norm, atol=tol, rtol=0)


class TestBalanced:
    """Compensated balanced device"""

    def test_full_visibility(self, balanced, tol):
        split = xy_split(balanced)
        assert np.allclose(visibility(split), 100.0, atol=tol, rtol=0)
        assert np.allclose(fringe_offset(split), 0.0, atol=tol, rtol=0)
        bf, df = fringe_phases(split)
        assert np.allclose([bf, df], [0.0, np.pi], atol=tol, rtol=0)
        assert total_intensity(split, df) < tol * split.A_norm

    @pytest.mark.parametrize("phi", [0.0, 0.9, 2.5])
    def test_spectrum_closed_form(self, balanced, phi):
        basis = joint_decompose(xy_split(balanced).at_phase(phi))
        expected, _, _ = balanced_su_spectrum(PLANTED, phi)
        assert np.allclose(basis.Lambda, expected, atol=1e-8, rtol=1e-9)

    def test_output_modes_are_first_pass_modes(self, balanced):
        basis1 = canonicalize_signs(joint_decompose(balanced.pass1))
        basis_su = canonicalize_signs(joint_decompose(xy_split(balanced).at_phase(0.4)))
        df = balanced_mode_identity(basis_su, basis1)
        assert len(df) == len(PLANTED)
        assert np.allclose(df["overlap_abs"], 1.0, atol=1e-8, rtol=0)

    def test_physical_passes(self):
        """Propagated passes at delta_z = 0 interfere with full visibility"""
        d = Dispersion.toy(1e7)
        lat = Lattice.symmetric(7, 1e5)
        geom = CrystalGeometry(L1=3e-3)
        p = PumpProfile(5e-5)
        setup = SuSetup(
            pass1=integrate_rk(first_pass_kernel(lat, 0.01, p, d, geom)),
            pass2_nophase=integrate_rk(second_pass_kernel(lat, 0.01, p, d, geom)),
        )
        split = xy_split(setup)
        assert visibility(split) == pytest.approx(100.0, abs=1e-5)
        assert fringe_offset(split) == pytest.approx(0.0, abs=1e-6)


class TestClosedForms:
    def test_spectrum(self, tol):
        lam, mu, zeta = balanced_su_spectrum([1.0, 2.0], 0.6)
        assert np.allclose(lam, 4 * np.cos(0.3) ** 2 * np.array([2.0, 6.0]), atol=tol, rtol=0)
        assert mu == pytest.approx(0.3)
        assert np.allclose(zeta, np.angle(1 + np.array([1.0, 2.0]) * (1 + np.exp(0.6j))), atol=tol, rtol=0)

    def test_dark_fringe(self, tol):
        lam, _, _ = balanced_su_spectrum([1.0, 5.0], np.pi)
        assert np.allclose(lam, 0.0, atol=tol, rtol=0)

    def test_negative(self):
        with pytest.raises(ValueError, match="nonnegative"):
            balanced_su_spectrum([-1.0], 0.0)


class TestFringes:
    def test_no_interference(self):
        split = rotating_split(np.pi / 2)
        assert visibility(split) == pytest.approx(0.0, abs=1e-12)
        with pytest.raises(FringeError, match="undefined"):
            fringe_offset(split)

    def test_all_off(self):
        lat = Lattice.symmetric(2, 0.5, rule="uniform")
        z = np.zeros((2, 2), dtype=complex)
        split = XySplit(x_hat=z, y_hat=z, xh_hat=np.eye(2), yh_hat=z, lattice=lat)
        with pytest.raises(FringeError, match="Both passes are off"):
            visibility(split)

    def test_phi_scan(self, balanced, tol):
        split = xy_split(balanced)
        phis = np.linspace(0, 2 * np.pi, 9)
        df = phi_scan(split, phis)
        assert list(df.columns) == ["phi", "intensity"]
        expected = split.A_norm + 2 * np.real(split.C * np.exp(1j * phis))
        assert np.allclose(df["intensity"], expected, atol=tol * split.A_norm, rtol=0)


class TestDeltaZ:
    """Visibility search over the air gap"""

    def test_interior_optimum(self):
        opt = optimize_deltaz(lambda dz: rotating_split(dz - 0.3), (0.0, 1.0), n_samples=12, xatol=1e-7, workers=1)
        assert opt.dz_star == pytest.approx(0.3, abs=1e-4)
        assert opt.v_star == pytest.approx(100.0, abs=1e-6)
        assert opt.flags == []
        assert list(opt.curve.columns) == ["delta_z", "visibility"]
        assert len(opt.curve) == 12

    def test_boundary_flag(self):
        opt = optimize_deltaz(lambda dz: rotating_split(dz - 0.3), (0.5, 1.0), n_samples=6, workers=1)
        assert opt.dz_star == pytest.approx(0.5)
        assert any("boundary" in f for f in opt.flags)

    def test_bad_range(self):
        with pytest.raises(ValueError, match="ordered"):
            optimize_deltaz(rotating_split, (1.0, 0.0))
