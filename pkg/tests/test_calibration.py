# =========================================
# file: tests/test_calibration.py
# =========================================
import numpy as np
import pytest

from tools.calibration import (
    GainCurve,
    fit_sinh2,
    gain_to_gamma,
    gamma_grid,
    gamma_to_gain,
    sample_gain_curve,
)
from tools.lab_errors import FitError
from tools.physics import CouplingKernel, Lattice


def synthetic(A=140.0, B=2.5, n=15):
    g = np.linspace(0.001, 0.05, n)
    return GainCurve(g, B * np.sinh(A * g) ** 2)


class TestGainCurve:
    """Validation of the sampled curve"""

    def test_shape(self):
        with pytest.raises(ValueError, match="one intensity per coupling"):
            GainCurve(np.array([0.1, 0.2]), np.array([1.0]))

    def test_order(self):
        with pytest.raises(ValueError, match="sorted ascending"):
            GainCurve(np.array([0.2, 0.1]), np.array([1.0, 2.0]))

    def test_negative(self):
        with pytest.raises(ValueError, match="cannot be negative"):
            GainCurve(np.array([0.1, 0.2]), np.array([1.0, -2.0]))

    def test_model_needs_fit(self):
        with pytest.raises(FitError, match="not been fitted"):
            synthetic().model([0.1])

    def test_frame_columns(self):
        assert list(synthetic().to_frame().columns) == ["gamma", "n0"]
        assert list(fit_sinh2(synthetic()).to_frame().columns) == ["gamma", "n0", "fitted", "g_exp"]


class TestFit:
    """sinh^2 fit"""

    def test_recovers_constants(self):
        curve = fit_sinh2(synthetic())
        assert curve.A == pytest.approx(140.0, rel=1e-6)
        assert curve.B == pytest.approx(2.5, rel=1e-6)
        assert curve.residual < 1e-8

    def test_low_gain_only(self):
        """Quadratic regime: the fit still pins down A from the curvature"""
        g = np.linspace(0.05, 0.5, 10) / 140.0
        curve = fit_sinh2(GainCurve(g, 0.7 * np.sinh(140.0 * g) ** 2))
        assert curve.A == pytest.approx(140.0, rel=1e-5)

    def test_too_few_points(self):
        with pytest.raises(FitError, match="three distinct"):
            fit_sinh2(GainCurve(np.array([0.1, 0.2]), np.array([1.0, 2.0])))

    def test_no_signal(self):
        with pytest.raises(FitError, match="nonzero intensity"):
            fit_sinh2(GainCurve(np.array([0.0, 0.1, 0.2]), np.zeros(3)))

    def test_sampled_toy_curve(self):
        """Plane-wave kernel over length 0.5 gives N0 = sinh^2(0.5 Gamma) exactly"""
        lat = Lattice.symmetric(3, 1.0)
        curve = sample_gain_curve(
            lambda g: CouplingKernel.diagonal(lat, g, (0.0, 0.5)), [0.0, 1.0, 2.0, 4.0, 6.0], workers=1
        )
        assert curve.n0[0] == 0.0
        assert np.allclose(curve.n0[1:], np.sinh(0.5 * curve.gammas[1:]) ** 2, atol=0, rtol=1e-7)
        fitted = fit_sinh2(curve)
        assert fitted.A == pytest.approx(0.5, rel=1e-6)
        assert fitted.B == pytest.approx(1.0, rel=1e-6)

    def test_sample_order(self):
        lat = Lattice.symmetric(3, 1.0)
        with pytest.raises(ValueError, match="strictly ascending"):
            sample_gain_curve(lambda g: CouplingKernel.diagonal(lat, g, (0.0, 0.5)), [1.0, 0.5])


class TestConversions:
    def test_gamma_grid(self, tol):
        assert np.allclose(gamma_grid(2.0, (0.0, 4.0), 5), [0.0, 0.5, 1.0, 1.5, 2.0], atol=tol, rtol=0)

    def test_gamma_grid_guess(self):
        with pytest.raises(ValueError, match="must be positive"):
            gamma_grid(0.0)

    def test_gain_roundtrip(self):
        assert gain_to_gamma(4.0, 2.0) == 2.0
        assert gamma_to_gain(2.0, 2.0) == 4.0

    def test_bad_constant(self):
        with pytest.raises(ValueError, match="must be positive"):
            gain_to_gamma(8.0, 0.0)
