# =========================================
# file: tools/asymmetry.py
# =========================================
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np
import pandas as pd

from tools.jointdecomp import SchmidtBasis
from tools.lab_errors import LatticeMismatchError, UnwrapError
from tools.overlaps import OverlapMatrix, overlap
from tools.physics import Lattice

logger = logging.getLogger(__name__)

SUPPORT_LEVEL = 1e-3
PER_UM = 1e6  # rad/m in one rad/um
PHASE_UNITS = "pi rad um^(2(j-1))"
COMPARE_MODES = 20


def asymmetry_metric(B: np.ndarray) -> float:
    """max | |B_jk| - |B_kj| | relative to the peak of |B|."""
    a = np.abs(np.asarray(B))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("Asymmetry needs a square matrix.")
    peak = float(a.max()) if a.size else 0.0
    if peak == 0:
        return 0.0
    return float(np.max(np.abs(a - a.T)) / peak)


# -------------------------
# Schmidt decomposition of |beta|
# -------------------------
@dataclass(frozen=True, eq=False)
class ModulusBasis:
    U: np.ndarray
    Psi: np.ndarray
    s: np.ndarray
    lattice: Lattice
    c_abs: OverlapMatrix | None = None


def modulus_decomposition(B: np.ndarray, lat: Lattice) -> ModulusBasis:
    """|B| = sum_n s_n u_n(q) psi_n(q'), with real modes normalized on the lattice weights."""
    a = np.abs(np.asarray(B))
    if a.shape != (lat.n, lat.n):
        raise LatticeMismatchError("Matrix does not live on the given lattice.")
    sw = lat.sqrt_w
    left, s, vh = np.linalg.svd(sw[:, None] * a * sw[None, :])
    U = left / sw[:, None]
    Psi = vh.T / sw[:, None]
    c_abs = overlap(U, Psi.conj(), False, lat, row_family="u(abs)", col_family="psi(abs)")
    return ModulusBasis(U=U, Psi=Psi, s=s, lattice=lat, c_abs=c_abs)


# -------------------------
# Phase unwrapping
# -------------------------
def support_mask(B: np.ndarray, level: float = SUPPORT_LEVEL) -> np.ndarray:
    a = np.abs(np.asarray(B))
    peak = a.max() if a.size else 0.0
    return a >= level * peak if peak > 0 else np.zeros(a.shape, dtype=bool)


def _wrap(x):
    return np.angle(np.exp(1j * x))


def unwrap_support(phase: np.ndarray, mask: np.ndarray, seed: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Breadth-first unwrap over the 4-connected component of `mask` containing `seed`.
    Returns the unwrapped phase (nan outside) and the mask of visited cells.
    """
    phase = np.asarray(phase, dtype=float)
    if not mask[seed]:
        raise UnwrapError("The unwrap seed lies outside the support region.")
    out = np.full(phase.shape, np.nan)
    seen = np.zeros(phase.shape, dtype=bool)
    out[seed] = phase[seed]
    seen[seed] = True
    queue = deque([seed])
    nr, nc = phase.shape
    while queue:
        r, c = queue.popleft()
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < nr and 0 <= cc < nc and mask[rr, cc] and not seen[rr, cc]:
                out[rr, cc] = out[r, c] + _wrap(phase[rr, cc] - out[r, c])
                seen[rr, cc] = True
                queue.append((rr, cc))
    missed = int(np.count_nonzero(mask & ~seen))
    if missed:
        logger.warning("Unwrap: %d support cells are not connected to the peak and were skipped.", missed)
    return out, seen


# -------------------------
# Separable phase fit
# -------------------------
@dataclass
class PhaseFit:
    """
    Phi_1(q) = sum_j a1[j] q^(2j), Phi_2(q') = sum_j a2[j] q'^(2j), with q in rad/um.
    """

    a1: np.ndarray
    a2: np.ndarray
    residual: float
    support_fraction: float = 1.0
    meta: Dict = field(default_factory=dict)

    @property
    def order(self) -> int:
        return int(len(self.a1))

    def evaluate(self, q) -> Tuple[np.ndarray, np.ndarray]:
        """(Phi_1, Phi_2) at transverse wave vectors q given in rad/m."""
        x2 = (np.asarray(q, dtype=float) / PER_UM) ** 2
        p1 = np.polynomial.polynomial.polyval(x2, self.a1)
        p2 = np.polynomial.polynomial.polyval(x2, self.a2)
        return p1, p2

    def to_table(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "k": np.arange(1, self.order + 1),
                "a1": np.asarray(self.a1) / np.pi,
                "a2": np.asarray(self.a2) / np.pi,
                "units": PHASE_UNITS,
            }
        )

    def to_dict(self) -> Dict:
        return {
            "a1": [float(x) / np.pi for x in self.a1],
            "a2": [float(x) / np.pi for x in self.a2],
            "units": PHASE_UNITS,
            "residual_rad": float(self.residual),
            "support_fraction": float(self.support_fraction),
        }


def separable_phase_fit(B: np.ndarray, lat: Lattice, order: int = 4, level: float = SUPPORT_LEVEL) -> PhaseFit:
    """
    Least squares of unwrapped arg B(q, q') against Phi_1(q) + Phi_2(q') on the support region.
    The constant is split with Phi_2(0) = arg B(0, 0) / 2.
    """
    B = np.asarray(B)
    if B.shape != (lat.n, lat.n):
        raise LatticeMismatchError("Matrix does not live on the given lattice.")
    if order < 1:
        raise ValueError("Polynomial order must be at least 1.")

    mask = support_mask(B, level)
    if not mask.any():
        raise UnwrapError("The matrix vanishes: there is no support region to fit.")
    seed = np.unravel_index(int(np.argmax(np.abs(B))), B.shape)
    theta, seen = unwrap_support(np.angle(B), mask, seed)

    n_unknowns = 2 * order - 1
    rows, cols = np.nonzero(seen)
    if rows.size < n_unknowns:
        raise UnwrapError(
            f"Only {rows.size} unwrapped points for {n_unknowns} phase coefficients."
        )

    x2 = (lat.q / PER_UM) ** 2
    design = [np.ones(rows.size)]
    for j in range(1, order):
        design.append(x2[rows] ** j)
    for j in range(1, order):
        design.append(x2[cols] ** j)
    design = np.column_stack(design)
    scale = np.max(np.abs(design), axis=0)
    scale[scale == 0] = 1.0
    target = theta[rows, cols]
    coef, *_ = np.linalg.lstsq(design / scale, target, rcond=None)
    coef = coef / scale

    centre = int(np.argmin(np.abs(lat.q)))
    a2_0 = 0.5 * float(np.angle(B[centre, centre]))
    a1 = np.concatenate([[coef[0] - a2_0], coef[1:order]])
    a2 = np.concatenate([[a2_0], coef[order:]])
    resid = float(np.sqrt(np.mean((design @ coef - target) ** 2)))
    frac = float(rows.size) / float(np.count_nonzero(mask))
    logger.debug("Phase fit order %d: residual %.3g rad on %d points", order, resid, rows.size)
    return PhaseFit(a1=a1, a2=a2, residual=resid, support_fraction=frac, meta={"level": level})


def fit_modes(absbasis: ModulusBasis, fit: PhaseFit) -> Tuple[np.ndarray, np.ndarray]:
    """u_fit = u_abs e^{i Phi_1}, psi_fit = psi_abs e^{i Phi_2}."""
    p1, p2 = fit.evaluate(absbasis.lattice.q)
    return absbasis.U * np.exp(1j * p1)[:, None], absbasis.Psi * np.exp(1j * p2)[:, None]


def fit_mode_comparison(absbasis: ModulusBasis, fit: PhaseFit, exactbasis: SchmidtBasis | None = None,
                        m: int = COMPARE_MODES) -> OverlapMatrix:
    """c_fit built from the phase-dressed modulus modes; provenance holds the correlation with the exact c."""
    lat = absbasis.lattice
    U_fit, Psi_fit = fit_modes(absbasis, fit)
    prov: Dict = {}
    if exactbasis is not None:
        if not lat.matches(exactbasis.lattice):
            raise LatticeMismatchError("Bases come from different lattices.")
        c_exact = overlap(exactbasis.U, exactbasis.Psi.conj(), False, lat).entries
        prov["c_exact"] = c_exact
    c_fit = overlap(U_fit, Psi_fit.conj(), False, lat, row_family="u(fit)", col_family="psi(fit)", provenance=prov)
    if exactbasis is not None:
        k = min(m, lat.n)
        a = np.abs(c_fit.entries[:k, :k]).ravel()
        b = np.abs(prov["c_exact"][:k, :k]).ravel()
        corr = float(np.corrcoef(a, b)[0, 1]) if np.std(a) > 0 and np.std(b) > 0 else math.nan
        c_fit.provenance["correlation"] = corr
        logger.info("c_fit vs exact c: correlation %.4f over the leading %d modes", corr, k)
    return c_fit
