# =========================================
# file: tools/interferometer.py
# =========================================
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import minimize_scalar

from tools.jointdecomp import SchmidtBasis
from tools.lab_errors import FringeError, LatticeMismatchError
from tools.lab_pool import run_jobs
from tools.overlaps import overlap
from tools.physics import Lattice
from tools.propagator import TransferPair

logger = logging.getLogger(__name__)


# -------------------------
# Types
# -------------------------
@dataclass(frozen=True, eq=False)
class SuSetup:
    """Both passes of the interferometer; pass2 carries no e^{i phi} factor."""

    pass1: TransferPair
    pass2_nophase: TransferPair
    delta_z: float = 0.0
    phi: float = 0.0
    meta: Dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.pass1.lattice.matches(self.pass2_nophase.lattice):
            raise LatticeMismatchError("Both passes must share one lattice.")

    @property
    def lattice(self) -> Lattice:
        return self.pass1.lattice


@dataclass(frozen=True, eq=False)
class XySplit:
    """
    beta_SU(phi) = X + e^{i phi} Y and eta_SU(phi) = Xh + e^{i phi} Yh.
    Fields are stored weight-normalized; X, Y, Xh, Yh give the continuum matrices.
    """

    x_hat: np.ndarray
    y_hat: np.ndarray
    xh_hat: np.ndarray
    yh_hat: np.ndarray
    lattice: Lattice
    meta: Dict = field(default_factory=dict)

    def _continuum(self, m: np.ndarray) -> np.ndarray:
        isw = 1.0 / self.lattice.sqrt_w
        return isw[:, None] * m * isw[None, :]

    @property
    def X(self) -> np.ndarray:
        return self._continuum(self.x_hat)

    @property
    def Y(self) -> np.ndarray:
        return self._continuum(self.y_hat)

    @property
    def Xh(self) -> np.ndarray:
        return self._continuum(self.xh_hat)

    @property
    def Yh(self) -> np.ndarray:
        return self._continuum(self.yh_hat)

    @cached_property
    def C(self) -> complex:
        return complex(np.vdot(self.x_hat, self.y_hat))

    @cached_property
    def A_norm(self) -> float:
        return float(np.sum(np.abs(self.x_hat) ** 2) + np.sum(np.abs(self.y_hat) ** 2))

    def at_phase(self, phi: float) -> TransferPair:
        """Composed interferometer at phase phi, without re-integrating."""
        f = np.exp(1j * phi)
        return TransferPair.from_normalized(
            self.xh_hat + f * self.yh_hat,
            self.x_hat + f * self.y_hat,
            self.lattice,
            dict(self.meta, label="su", phi=float(phi)),
        )


# -------------------------
# Composition
# -------------------------
def compose(first: TransferPair, second: TransferPair) -> TransferPair:
    """B_SU = H2 W B1 + B2 W H1*, H_SU = H2 W H1 + B2 W B1*."""
    if not first.lattice.matches(second.lattice):
        raise LatticeMismatchError("Cannot compose passes on different lattices.")
    h1, b1 = first.h_hat, first.b_hat
    h2, b2 = second.h_hat, second.b_hat
    return TransferPair.from_normalized(
        h2 @ h1 + b2 @ b1.conj(),
        h2 @ b1 + b2 @ h1.conj(),
        first.lattice,
        {"label": "composed", "first": first.meta.get("label"), "second": second.meta.get("label")},
    )


def balanced_su_spectrum(Lambda1: Sequence[float], phi: float) -> Tuple[np.ndarray, float, np.ndarray]:
    """Closed forms of the compensated balanced device: (Lambda_SU, mu, zeta_n)."""
    lam = np.asarray(Lambda1, dtype=float)
    if np.any(lam < 0):
        raise ValueError("Eigenvalues must be nonnegative.")
    lam_su = 4.0 * np.cos(0.5 * phi) ** 2 * lam * (lam + 1.0)
    e = np.exp(1j * phi)
    mu = float(np.angle(1.0 + e))
    zeta = np.angle(1.0 + lam * (1.0 + e))
    return lam_su, mu, zeta


def xy_split(setup: SuSetup) -> XySplit:
    h1, b1 = setup.pass1.h_hat, setup.pass1.b_hat
    h2, b2 = setup.pass2_nophase.h_hat, setup.pass2_nophase.b_hat
    return XySplit(
        x_hat=h2 @ b1,
        y_hat=b2 @ h1.conj(),
        xh_hat=h2 @ h1,
        yh_hat=b2 @ b1.conj(),
        lattice=setup.lattice,
        meta={"delta_z": float(setup.delta_z)},
    )


# -------------------------
# Fringe observables
# -------------------------
def total_intensity(s: XySplit, phi: float) -> float:
    return float(s.A_norm + 2.0 * np.real(s.C * np.exp(1j * phi)))


def fringe_offset(s: XySplit) -> float:
    if abs(s.C) < 1e-12 * s.A_norm or s.A_norm == 0:
        raise FringeError("No interference term: the fringe offset is undefined.")
    return float(np.angle(s.C))


def fringe_phases(s: XySplit) -> Tuple[float, float]:
    """(phi_bright, phi_dark) = (-Upsilon, pi - Upsilon)."""
    ups = fringe_offset(s)
    return -ups, np.pi - ups


def visibility(s: XySplit) -> float:
    """Fringe visibility in percent."""
    if s.A_norm <= 0:
        raise FringeError("Both passes are off: visibility is undefined.")
    return float(200.0 * abs(s.C) / s.A_norm)


def phi_scan(s: XySplit, phis: Sequence[float]) -> pd.DataFrame:
    phis = np.asarray(phis, dtype=float)
    return pd.DataFrame(
        {"phi": phis, "intensity": [total_intensity(s, p) for p in phis]}
    )


# -------------------------
# delta_z optimization
# -------------------------
@dataclass
class DeltaZOptimum:
    dz_star: float
    v_star: float
    curve: pd.DataFrame
    flags: List[str] = field(default_factory=list)
    roughness: float = 0.0


def optimize_deltaz(
    build_split: Callable[[float], XySplit],
    dz_range: Tuple[float, float],
    n_samples: int = 32,
    xatol: float | None = None,
    workers: int | None = None,
) -> DeltaZOptimum:
    """
    Coarse visibility scan over dz_range, then a bounded Brent/golden refinement
    on the bracket around the best sample. `build_split(dz)` re-propagates pass 2.
    """
    lo, hi = float(dz_range[0]), float(dz_range[1])
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
        raise ValueError("delta_z range must be finite and ordered.")
    n_samples = max(int(n_samples), 1)
    dzs = np.linspace(lo, hi, n_samples)

    vis = run_jobs(lambda dz: visibility(build_split(float(dz))), dzs, workers=workers, what="delta_z sample")
    curve = pd.DataFrame({"delta_z": dzs, "visibility": vis})
    vis = np.asarray(vis)
    best = int(np.argmax(vis))
    flags = []
    roughness = float(np.max(np.abs(np.diff(vis, 2)))) if vis.size > 2 else 0.0

    if n_samples < 3 or best in (0, n_samples - 1):
        if n_samples > 1:
            flags.append("argmax on the boundary of the delta_z range")
            logger.warning("Visibility maximum sits on the boundary of the delta_z range (%.6g m).", dzs[best])
        return DeltaZOptimum(float(dzs[best]), float(vis[best]), curve, flags, roughness)

    tol = xatol if xatol is not None else 1e-3 * (hi - lo) / max(n_samples - 1, 1)
    res = minimize_scalar(
        lambda dz: -visibility(build_split(float(dz))),
        bounds=(float(dzs[best - 1]), float(dzs[best + 1])),
        method="bounded",
        options={"xatol": tol},
    )
    dz_star, v_star = float(dzs[best]), float(vis[best])
    if res.success and -res.fun >= v_star:
        dz_star, v_star = float(res.x), float(-res.fun)
    logger.info("delta_z* = %.6g m, v = %.6f %%", dz_star, v_star)
    return DeltaZOptimum(dz_star, v_star, curve, flags, roughness)


# -------------------------
# Balanced diagnostics
# -------------------------
def balanced_mode_identity(basis_su: SchmidtBasis, basis1: SchmidtBasis, n_check: int = 15, floor: float = 1e-8) -> pd.DataFrame:
    """
    |<u_SU_l, psi1_l>| for the leading nondegenerate modes; the compensated balanced
    device maps psi1 onto its output modes, so every entry should equal 1.
    """
    m = overlap(basis_su.U, basis1.Psi, True, basis1.lattice).entries
    singles = {b[0] for b in basis1.blocks if len(b) == 1}
    rows = [
        {"l": l, "Lambda1": float(basis1.Lambda[l]), "overlap_abs": float(abs(m[l, l]))}
        for l in range(min(n_check, basis1.n))
        if l in singles and basis1.Lambda[l] > floor
    ]
    return pd.DataFrame(rows, columns=["l", "Lambda1", "overlap_abs"])
