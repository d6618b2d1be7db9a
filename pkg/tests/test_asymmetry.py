# =========================================
# file: tests/test_asymmetry.py
# =========================================
import numpy as np
import pytest

from tools.asymmetry import (
    PER_UM,
    PHASE_UNITS,
    asymmetry_metric,
    fit_mode_comparison,
    fit_modes,
    modulus_decomposition,
    separable_phase_fit,
    support_mask,
    unwrap_support,
)
from tools.jointdecomp import joint_decompose
from tools.lab_errors import LatticeMismatchError, UnwrapError
from tools.physics import Lattice
from tools.propagator import identity_pair

WIDTH = 1e5  # rad/m


@pytest.fixture
def lat41():
    return Lattice.symmetric(41, 2e5)


def planted_phase(lat, p1, p2):
    """Gaussian modulus times exp(i (Phi_1(q) + Phi_2(q'))) with polynomial coefficients in q^2 (rad/um)."""
    x2 = (lat.q / PER_UM) ** 2
    phi1 = np.polynomial.polynomial.polyval(x2, p1)
    phi2 = np.polynomial.polynomial.polyval(x2, p2)
    qs, qi = lat.grid()
    modulus = np.exp(-(qs ** 2 + qi ** 2) / WIDTH ** 2)
    return modulus * np.exp(1j * (phi1[:, None] + phi2[None, :]))


class TestMetric:
    def test_symmetric(self, random_unitary):
        u = random_unitary(5)
        assert asymmetry_metric(u @ u.T) < 1e-12

    def test_transpose_invariant(self, rng):
        b = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        assert asymmetry_metric(b) == pytest.approx(asymmetry_metric(b.T))
        assert asymmetry_metric(b) > 0

    def test_zero(self):
        assert asymmetry_metric(np.zeros((3, 3))) == 0.0

    def test_not_square(self):
        with pytest.raises(ValueError, match="square"):
            asymmetry_metric(np.ones((2, 3)))


class TestModulus:
    """Schmidt decomposition of |beta|"""

    def test_rank_one(self, lat41, tol):
        B = planted_phase(lat41, [0.3, 200.0], [0.1, -100.0])
        basis = modulus_decomposition(B, lat41)
        assert basis.s[1] < 1e-10 * basis.s[0]
        sw = lat41.sqrt_w
        rec = basis.s[0] * np.outer(basis.U[:, 0], basis.Psi[:, 0]) * np.outer(sw, sw)
        assert np.allclose(rec, np.abs(B) * np.outer(sw, sw), atol=tol, rtol=0)
        assert basis.c_abs.shape == (41, 41)

    def test_lattice_mismatch(self, lat41):
        with pytest.raises(LatticeMismatchError):
            modulus_decomposition(np.ones((5, 5)), lat41)


class TestUnwrap:
    def test_ramp(self, tol):
        r, c = np.meshgrid(np.arange(10), np.arange(10), indexing="ij")
        ramp = 0.5 * (r + c)
        out, seen = unwrap_support(np.angle(np.exp(1j * ramp)), np.ones((10, 10), dtype=bool), (0, 0))
        assert seen.all()
        assert np.allclose(out, ramp, atol=tol, rtol=0)

    def test_disconnected(self):
        mask = np.zeros((5, 5), dtype=bool)
        mask[0, 0] = mask[4, 4] = True
        out, seen = unwrap_support(np.zeros((5, 5)), mask, (0, 0))
        assert seen.sum() == 1
        assert np.isnan(out[4, 4])

    def test_seed_outside(self):
        with pytest.raises(UnwrapError, match="outside the support"):
            unwrap_support(np.zeros((3, 3)), np.zeros((3, 3), dtype=bool), (1, 1))

    def test_support_mask(self):
        b = np.array([[1.0, 1e-4], [0.5, 0.0]])
        assert support_mask(b).tolist() == [[True, False], [True, False]]
        assert not support_mask(np.zeros((2, 2))).any()


class TestPhaseFit:
    """Separable polynomial fit of arg beta"""

    def test_planted_coefficients(self, lat41):
        B = planted_phase(lat41, [0.3, 200.0], [0.1, -100.0])
        fit = separable_phase_fit(B, lat41, order=2)
        # the constant splits as Phi_2(0) = arg B(0, 0) / 2
        assert np.allclose(fit.a1, [0.2, 200.0], atol=1e-8, rtol=0)
        assert np.allclose(fit.a2, [0.2, -100.0], atol=1e-8, rtol=0)
        assert fit.residual < 1e-10
        assert fit.order == 2
        assert 0 < fit.support_fraction <= 1

    def test_evaluate(self, lat41):
        """The fitted phases reproduce arg beta on the whole grid"""
        B = planted_phase(lat41, [0.3, 200.0], [0.1, -100.0])
        p1, p2 = separable_phase_fit(B, lat41, order=2).evaluate(lat41.q)
        assert np.allclose(np.exp(1j * (p1[:, None] + p2[None, :])), B / np.abs(B), atol=1e-8, rtol=0)

    def test_real_positive(self, lat41):
        B = np.abs(planted_phase(lat41, [0.0], [0.0]))
        fit = separable_phase_fit(B, lat41, order=3)
        assert np.allclose(fit.a1, 0.0, atol=1e-8, rtol=0)
        assert np.allclose(fit.a2, 0.0, atol=1e-8, rtol=0)

    def test_residual_decreases(self, lat41):
        B = planted_phase(lat41, [0.0, 200.0, 3000.0], [0.0, -100.0, 1000.0])
        res = [separable_phase_fit(B, lat41, order=k).residual for k in (1, 2, 3)]
        assert res[0] >= res[1] >= res[2] - 1e-12
        assert res[2] < 1e-8

    def test_tables(self, lat41, tol):
        fit = separable_phase_fit(planted_phase(lat41, [0.3, 200.0], [0.1, -100.0]), lat41, order=2)
        table = fit.to_table()
        assert list(table.columns) == ["k", "a1", "a2", "units"]
        assert (table["units"] == PHASE_UNITS).all()
        assert np.allclose(table["a1"], np.asarray(fit.a1) / np.pi, atol=tol, rtol=0)
        d = fit.to_dict()
        assert d["units"] == PHASE_UNITS
        assert set(d) == {"a1", "a2", "units", "residual_rad", "support_fraction"}

    def test_empty(self, lat41):
        with pytest.raises(UnwrapError, match="no support"):
            separable_phase_fit(np.zeros((41, 41)), lat41)

    def test_bad_order(self, lat41):
        with pytest.raises(ValueError, match="at least 1"):
            separable_phase_fit(np.ones((41, 41)), lat41, order=0)


class TestFitModes:
    def test_modulus_kept(self, lat41, tol):
        B = planted_phase(lat41, [0.3, 200.0], [0.1, -100.0])
        absbasis = modulus_decomposition(B, lat41)
        fit = separable_phase_fit(B, lat41, order=2)
        U_fit, Psi_fit = fit_modes(absbasis, fit)
        assert np.allclose(np.abs(U_fit), np.abs(absbasis.U), atol=tol, rtol=0)
        assert np.allclose(np.abs(Psi_fit), np.abs(absbasis.Psi), atol=tol, rtol=0)

    def test_comparison(self, lattice6, planted_pair):
        tp, _, _ = planted_pair(lattice6, [5.0, 3.0, 2.0, 1.0, 0.5, 0.1])
        absbasis = modulus_decomposition(tp.B, lattice6)
        fit = separable_phase_fit(tp.B, lattice6, order=1)
        c_fit = fit_mode_comparison(absbasis, fit, joint_decompose(tp), m=6)
        assert c_fit.shape == (6, 6)
        assert "correlation" in c_fit.provenance
        assert "c_exact" in c_fit.provenance

    def test_comparison_lattice(self, lattice6, lat41):
        B = planted_phase(lat41, [0.3, 200.0], [0.1, -100.0])
        absbasis = modulus_decomposition(B, lat41)
        fit = separable_phase_fit(B, lat41, order=2)
        other = joint_decompose(identity_pair(lattice6))
        with pytest.raises(LatticeMismatchError):
            fit_mode_comparison(absbasis, fit, other)
