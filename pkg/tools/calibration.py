# =========================================
# file: tools/calibration.py
# =========================================
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import brentq, least_squares

from tools.lab_errors import FitError
from tools.lab_pool import run_jobs
from tools.physics import CouplingKernel
from tools.propagator import collinear_intensity, integrate_rk

logger = logging.getLogger(__name__)

DEFAULT_G_RANGE = (0.01, 8.0)
MAX_FIT_EVALS = 2000


@dataclass(frozen=True, eq=False)
class GainCurve:
    """Collinear intensity N0 sampled over the coupling Gamma; A, B set once fitted."""

    gammas: np.ndarray
    n0: np.ndarray
    A: float | None = None
    B: float | None = None
    residual: float | None = None

    def __post_init__(self):
        g = np.asarray(self.gammas, dtype=float)
        n = np.asarray(self.n0, dtype=float)
        if g.shape != n.shape or g.ndim != 1:
            raise ValueError("Gain curve needs one intensity per coupling value.")
        if np.any(np.diff(g) < 0):
            raise ValueError("Coupling values must be sorted ascending.")
        if np.any(n < 0):
            raise ValueError("Collinear intensity cannot be negative.")
        object.__setattr__(self, "gammas", g)
        object.__setattr__(self, "n0", n)

    @property
    def fitted(self) -> bool:
        return self.A is not None and self.B is not None

    def model(self, gammas) -> np.ndarray:
        if not self.fitted:
            raise FitError("Gain curve has not been fitted yet.")
        return self.B * np.sinh(self.A * np.asarray(gammas, dtype=float)) ** 2

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame({"gamma": self.gammas, "n0": self.n0})
        if self.fitted:
            df["fitted"] = self.model(self.gammas)
            df["g_exp"] = self.A * self.gammas
        return df


# -------------------------
# Sampling
# -------------------------
def gamma_grid(A_guess: float, g_range: Tuple[float, float] = DEFAULT_G_RANGE, n: int = 24) -> np.ndarray:
    """Coupling values covering the requested experimental-gain window for a rough A."""
    if A_guess <= 0:
        raise ValueError("Fit constant guess must be positive.")
    lo, hi = float(g_range[0]), float(g_range[1])
    if not (0 <= lo < hi):
        raise ValueError("Gain range must be ordered and nonnegative.")
    return np.linspace(lo, hi, int(n)) / A_guess


def sample_gain_curve(
    build_kernel: Callable[[float], CouplingKernel],
    gammas: Sequence[float],
    workers: int | None = None,
) -> GainCurve:
    """Propagate the single crystal for every Gamma and record the collinear intensity."""
    gammas = np.asarray(gammas, dtype=float)
    if gammas.size == 0:
        raise ValueError("At least one coupling value is required.")
    if np.any(gammas < 0) or np.any(np.diff(gammas) <= 0):
        raise ValueError("Coupling values must be nonnegative and strictly ascending.")

    def one(gamma: float) -> float:
        return collinear_intensity(integrate_rk(build_kernel(float(gamma))))

    n0 = run_jobs(one, gammas, workers=workers, what="gamma sample")
    logger.info("Sampled gain curve at %d coupling values", gammas.size)
    return GainCurve(gammas, np.clip(np.asarray(n0, dtype=float), 0.0, None))


# -------------------------
# Fit
# -------------------------
def _log_sinh2(x: np.ndarray) -> np.ndarray:
    # log sinh^2(x) for x > 0 without overflow
    x = np.asarray(x, dtype=float)
    return 2.0 * (x + np.log1p(-np.exp(-2.0 * x)) - math.log(2.0))


def _initial_guess(g: np.ndarray, n: np.ndarray) -> Tuple[float, float]:
    g1, g2 = g[-2], g[-1]
    n1, n2 = n[-2], n[-1]
    ratio = n1 / n2
    quad = (g1 / g2) ** 2

    A0 = None
    if ratio < quad * (1.0 - 1e-9):
        f = lambda a: _log_sinh2(a * g1) - _log_sinh2(a * g2) - math.log(ratio)
        lo = 1e-9 / g2
        hi = 1.0 / g2
        while f(hi) > 0 and hi < 1e6 / g2:
            hi *= 2.0
        if f(lo) > 0 > f(hi):
            A0 = brentq(f, lo, hi, xtol=1e-14 / g2)
    if A0 is None:
        slope = (math.asinh(1.0) - math.asinh(math.sqrt(ratio))) / (g2 - g1)
        A0 = slope if slope > 0 else 1.0 / g2
    B0 = n2 / math.sinh(A0 * g2) ** 2
    return float(A0), float(B0)


def fit_sinh2(curve: GainCurve) -> GainCurve:
    """
    Fit N0 = B sinh^2(A Gamma) by damped least squares on log residuals.
    Returns a copy of the curve carrying A, B and the relative RMS residual.
    """
    g, n = curve.gammas, curve.n0
    if np.unique(g).size < 3:
        raise FitError("The sinh^2 fit needs at least three distinct coupling values.")
    pos = (g > 0) & (n > 0)
    if np.count_nonzero(pos) < 2:
        raise FitError("The sinh^2 fit needs at least two samples with nonzero intensity.")
    gp, npos = g[pos], n[pos]
    log_n = np.log(npos)

    A0, B0 = _initial_guess(gp, npos)

    def residuals(p):
        A, logB = p
        return logB + _log_sinh2(A * gp) - log_n

    def jac(p):
        A, _ = p
        return np.column_stack([2.0 * gp / np.tanh(A * gp), np.ones_like(gp)])

    try:
        res = least_squares(
            residuals, x0=[A0, math.log(B0)], jac=jac, method="lm",
            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=MAX_FIT_EVALS,
        )
    except (ValueError, FloatingPointError) as exc:
        raise FitError(f"The sinh^2 fit failed: {exc}") from exc
    if not res.success or not np.all(np.isfinite(res.x)) or res.x[0] <= 0:
        raise FitError(f"The sinh^2 fit did not converge: {res.message}")

    A, B = float(res.x[0]), float(math.exp(res.x[1]))
    fitted = B * np.sinh(A * g) ** 2
    scale = float(np.max(n)) if np.max(n) > 0 else 1.0
    rel = float(np.sqrt(np.mean((fitted - n) ** 2)) / scale)
    logger.info("Gain fit: A = %.6g, B = %.6g, relative residual %.3g", A, B, rel)
    return replace(curve, A=A, B=B, residual=rel)


def gain_to_gamma(G_exp: float, A: float) -> float:
    if A <= 0:
        raise ValueError("Fit constant A must be positive.")
    return float(G_exp) / float(A)


def gamma_to_gain(gamma: float, A: float) -> float:
    return float(A) * float(gamma)
