# =========================================
# file: tools/squeezing.py
# =========================================
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from tools.interferometer import SuSetup, fringe_phases, xy_split
from tools.jointdecomp import DEFAULT_DEG_TOL, SchmidtBasis, canonicalize_signs, joint_decompose
from tools.lab_errors import FringeError, PhysicalityError, TruncationError
from tools.overlaps import REPORT_MODES, OverlapMatrix, g_check, g_matrix, h_matrix
from tools.propagator import total_photon_number

logger = logging.getLogger(__name__)

DB_PER_NEPER = 20.0 / math.log(10.0)
HIGH_GAIN_THRESHOLD = 10.0


# -------------------------
# Moments and variances
# -------------------------
@dataclass(frozen=True)
class ModeMoments:
    n_mean: float
    anom: complex
    mode_index: int = 0

    def __post_init__(self):
        bound = math.sqrt(max(self.n_mean, 0.0) * (max(self.n_mean, 0.0) + 1.0))
        if self.n_mean < -1e-10 or abs(self.anom) > bound + 1e-8 * max(1.0, self.n_mean):
            raise PhysicalityError(
                f"Mode {self.mode_index}: moments (n={self.n_mean:.6g}, |a|={abs(self.anom):.6g}) are not physical."
            )


def wrap_quadrature_angle(theta: float) -> float:
    return float(np.mod(theta + 0.5 * np.pi, 2.0 * np.pi) - 0.5 * np.pi)


def quad_variance(m: ModeMoments, theta: float) -> float:
    return float(1.0 + 2.0 * m.n_mean + 2.0 * np.real(m.anom * np.exp(-1j * theta)))


def extremal_variances(m: ModeMoments) -> Tuple[float, float, float, float]:
    """(vmin, vmax, theta_min, theta_max); angles in [-pi/2, 3 pi/2) so real anomalous moments land on 0 or pi."""
    a = abs(m.anom)
    vmin = 1.0 + 2.0 * m.n_mean - 2.0 * a
    vmax = 1.0 + 2.0 * m.n_mean + 2.0 * a
    arg = float(np.angle(m.anom)) if a > 0 else 0.0
    theta_max = wrap_quadrature_angle(arg)
    theta_min = wrap_quadrature_angle(arg + np.pi)
    return vmin, vmax, theta_min, theta_max


def levels(vmin: float, vmax: float) -> Tuple[float, float]:
    """(S, AS) in dB relative to the vacuum variance 1."""
    if vmin <= 0 or vmax <= 0:
        raise PhysicalityError(f"Quadrature variance must be positive (got {vmin:.6g}, {vmax:.6g}).")
    return 10.0 * math.log10(vmin), 10.0 * math.log10(vmax)


def direct_levels(Lambda1: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    lam = np.asarray(Lambda1, dtype=float)
    if np.any(lam < 0):
        raise ValueError("Eigenvalues must be nonnegative.")
    r = np.arcsinh(np.sqrt(lam))
    return -DB_PER_NEPER * r, DB_PER_NEPER * r


def theta_scan(m: ModeMoments, thetas: Sequence[float]) -> pd.DataFrame:
    thetas = np.asarray(thetas, dtype=float)
    return pd.DataFrame({"theta": thetas, "variance": [quad_variance(m, t) for t in thetas]})


# -------------------------
# Exact reconstruction
# -------------------------
def _as_array(m) -> np.ndarray:
    return m.entries if isinstance(m, OverlapMatrix) else np.asarray(m)


def _truncate(g, h, L2, LSU, n_modes: int | None):
    g = _as_array(g)
    h = _as_array(h)
    L2 = np.asarray(L2, dtype=float)
    LSU = np.asarray(LSU, dtype=float)
    if g.shape[1] != h.shape[0] or L2.size != h.shape[0] or LSU.size != h.shape[1]:
        raise TruncationError(
            f"Inconsistent truncation: g {g.shape}, h {h.shape}, Lambda2 {L2.size}, LambdaSU {LSU.size}."
        )
    if n_modes is not None:
        k = int(n_modes)
        g, h, L2, LSU = g[:, :k], h[:k, :k], L2[:k], LSU[:k]
    return g, h, np.clip(L2, 0.0, None), np.clip(LSU, 0.0, None)


def exact_coefficients(g_row: np.ndarray, h: np.ndarray, L2: np.ndarray, LSU: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    A1_l = sum_k alpha_k ASU_out_k + gamma_k ASU_out_k^dagger, with
    alpha_k = sum_n g_ln sqrt(L2_n + 1) h_nk and gamma_k = -sum_n g_ln sqrt(L2_n) h_nk*.
    """
    alpha = (g_row * np.sqrt(L2 + 1.0)) @ h
    gamma = -(g_row * np.sqrt(L2)) @ h.conj()
    return alpha, gamma


def exact_moments(
    g: OverlapMatrix,
    h: OverlapMatrix,
    L2: Sequence[float],
    LSU: Sequence[float],
    l: int,
    n_modes: int | None = None,
) -> ModeMoments:
    """Output moments of mode l of the first pass, rebuilt from the interferometer output."""
    gm, hm, L2, LSU = _truncate(g, h, L2, LSU, n_modes)
    alpha, gamma = exact_coefficients(gm[l], hm, L2, LSU)
    s = np.sqrt(LSU * (LSU + 1.0))
    anom = np.sum(alpha * alpha * s + alpha * gamma * (LSU + 1.0) + gamma * alpha * LSU + gamma * gamma * s)
    n_mean = np.sum(
        np.abs(alpha) ** 2 * LSU
        + alpha.conj() * gamma * s
        + gamma.conj() * alpha * s
        + np.abs(gamma) ** 2 * (LSU + 1.0)
    )
    return ModeMoments(n_mean=float(np.real(n_mean)), anom=complex(anom), mode_index=int(l))


def amplifier_coefficients(
    g_row: np.ndarray,
    h: np.ndarray,
    L2: np.ndarray,
    LSU: np.ndarray,
    binomial: bool = True,
    keep_imag: bool = True,
    keep_small: bool = True,
    diagonal_h: bool = False,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    A1_l = sum_k a_k ASU_in_k + b_k ASU_in_k^dagger. With binomial=False the coefficients
    are exact; with binomial=True they follow the large-eigenvalue expansion, whose
    individual terms can be switched off for the ablation study.
    """
    g_row = np.asarray(g_row)
    h = np.asarray(h)
    if diagonal_h:
        h = np.diag(np.diag(h))
    s2 = np.sqrt(np.asarray(L2, dtype=float))[:, None]
    ssu = np.sqrt(np.asarray(LSU, dtype=float))[None, :]

    if not binomial:
        t2 = np.sqrt(np.asarray(L2) + 1.0)[:, None]
        tsu = np.sqrt(np.asarray(LSU) + 1.0)[None, :]
        a = g_row @ (t2 * tsu * h - s2 * ssu * h.conj())
        b = g_row @ (t2 * ssu * h - s2 * tsu * h.conj())
        return a, b

    with np.errstate(divide="ignore", invalid="ignore"):
        r_up = np.where(ssu > 0, s2 / ssu, 0.0)
        r_down = np.where(s2 > 0, ssu / s2, 0.0)
        inv = np.where((s2 > 0) & (ssu > 0), 1.0 / (s2 * ssu), 0.0)
    a = 0.5 * r_up * h + 0.5 * r_down * h
    b = -0.5 * r_up * h.conj() + 0.5 * r_down * h
    if keep_imag:
        im = 2j * s2 * ssu * np.imag(h)
        a = a + im
        b = b + im
    if keep_small:
        a = a + 0.25 * inv * h
    return g_row @ a, g_row @ b


def moments_from_coefficients(a: np.ndarray, b: np.ndarray, l: int = 0) -> ModeMoments:
    """Vacuum input: <A A> = sum a_k b_k, <A^dagger A> = sum |b_k|^2."""
    return ModeMoments(n_mean=float(np.sum(np.abs(b) ** 2)), anom=complex(np.sum(a * b)), mode_index=int(l))


# -------------------------
# High-gain approximation
# -------------------------
def _valid_modes(L2: np.ndarray, LSU: np.ndarray) -> np.ndarray:
    return (L2 > 0) & (LSU > 0)


def highgain_validity(L2: Sequence[float], LSU: Sequence[float], weights: Sequence[float] | None = None,
                      threshold: float = HIGH_GAIN_THRESHOLD) -> List[int]:
    """Indices n with non-negligible weight where Lambda2 or LambdaSU falls below the threshold."""
    L2 = np.asarray(L2, dtype=float)
    LSU = np.asarray(LSU, dtype=float)
    w = np.ones_like(L2) if weights is None else np.asarray(weights, dtype=float)
    bad = (w > 1e-3) & ((L2 < threshold) | (LSU < threshold))
    return [int(i) for i in np.flatnonzero(bad)]


def highgain_variance(g_chk, L2: Sequence[float], LSU_phi: Sequence[float], phi: float, theta: float, l: int) -> float:
    """Large-eigenvalue quadrature variance for mode l, pairing pass-2 and interferometer modes by index."""
    gc = g_check(g_chk) if isinstance(g_chk, OverlapMatrix) else np.asarray(g_chk)
    L2 = np.asarray(L2, dtype=float)
    LSU = np.asarray(LSU_phi, dtype=float)
    m = min(gc.shape[1], L2.size, LSU.size)
    row, L2, LSU = gc[l, :m], L2[:m], LSU[:m]
    ok = _valid_modes(L2, LSU)
    weight = np.abs(row) ** 2
    bad = highgain_validity(L2, LSU, weight)
    if bad:
        logger.warning("High-gain validity: mode %d draws on weakly populated modes %s.", l, bad[:10])
    ang = np.angle(row) + 0.5 * (phi - theta)
    ratio = np.where(ok, LSU / np.where(ok, L2, 1.0), 0.0)
    inv = np.where(ok, L2 / np.where(ok, LSU, 1.0), 0.0)
    return float(np.sum(weight[ok] * (np.cos(ang[ok]) ** 2 * ratio[ok] + np.sin(ang[ok]) ** 2 * inv[ok])))


def highgain_levels(
    g: OverlapMatrix,
    L2: Sequence[float],
    LSU_df: Sequence[float],
    LSU_bf: Sequence[float],
    rows: Sequence[int] | None = None,
) -> pd.DataFrame:
    """Per first-pass mode l: S/AS at the dark fringe and the bright-fringe mirror forms, in dB."""
    gm = _as_array(g)
    L2 = np.asarray(L2, dtype=float)
    df_ = np.asarray(LSU_df, dtype=float)
    bf_ = np.asarray(LSU_bf, dtype=float)
    m = min(gm.shape[1], L2.size, df_.size, bf_.size)
    L2, df_, bf_ = L2[:m], df_[:m], bf_[:m]
    ok = _valid_modes(L2, df_) & (bf_ > 0)
    safe = lambda x: np.where(ok, x, 1.0)
    r_df = np.where(ok, df_ / safe(L2), 0.0)
    r_bf = np.where(ok, bf_ / safe(L2), 0.0)
    ir_df = np.where(ok, L2 / safe(df_), 0.0)
    ir_bf = np.where(ok, L2 / safe(bf_), 0.0)

    out = []
    for l in (range(gm.shape[0]) if rows is None else rows):
        w = np.abs(gm[l, :m]) ** 2
        flags = []
        norm = float(np.sum(w))
        if abs(norm - 1.0) > 1e-6:
            flags.append(f"row norm {norm:.6g}")
        weighty = w > 1e-3
        order_bad = np.flatnonzero(weighty & ok & ~((df_ < L2) & (L2 < bf_)))
        if order_bad.size:
            flags.append(f"ordering violated at n={order_bad[:10].tolist()}")
            logger.warning("Eigenvalue ordering violated for mode %d at n=%s.", l, order_bad[:10].tolist())
        if highgain_validity(L2, df_, w):
            flags.append("low eigenvalues")

        def db(x):
            return 10.0 * math.log10(x) if x > 0 else float("nan")

        out.append(
            {
                "l": int(l),
                "S_df": db(float(np.sum(w * r_df))),
                "AS_df": db(float(np.sum(w * ir_df))),
                "S_bf": db(float(np.sum(w * ir_bf))),
                "AS_bf": db(float(np.sum(w * r_bf))),
                "flags": "; ".join(flags),
            }
        )
    return pd.DataFrame(out)


# -------------------------
# Report
# -------------------------
@dataclass
class SqueezingOptions:
    n_report: int = REPORT_MODES
    n_modes: int | None = None
    deg_tol: float = DEFAULT_DEG_TOL


@dataclass
class SqueezingReport:
    rows: pd.DataFrame
    meta: Dict = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)


@dataclass
class FringeBases:
    """Decompositions needed at one interferometer phase."""

    phi: float
    basis2: SchmidtBasis
    basis_su: SchmidtBasis
    g: OverlapMatrix
    h: OverlapMatrix


def fringe_bases(setup: SuSetup, basis1: SchmidtBasis, basis2_nophase: SchmidtBasis, phi: float,
                 deg_tol: float = DEFAULT_DEG_TOL) -> FringeBases:
    split = xy_split(setup)
    basis_su = canonicalize_signs(joint_decompose(split.at_phase(phi), deg_tol))
    basis2 = basis2_nophase.with_phase(phi)
    return FringeBases(
        phi=float(phi),
        basis2=basis2,
        basis_su=basis_su,
        g=g_matrix(basis1, basis2_nophase, phi),
        h=h_matrix(basis2, basis_su),
    )


def _convergence_gap(g, h, L2, LSU, l, n_modes) -> float:
    if n_modes is None or n_modes <= 10:
        return 0.0
    full = exact_moments(g, h, L2, LSU, l, n_modes)
    short = exact_moments(g, h, L2, LSU, l, n_modes - 10)
    return abs(full.n_mean - short.n_mean) / max(1.0, full.n_mean)


def build_report(setup: SuSetup, options: SqueezingOptions | None = None) -> SqueezingReport:
    """Direct, exact and high-gain levels per first-pass mode."""
    opts = options or SqueezingOptions()
    flags: List[str] = []
    split = xy_split(setup)
    try:
        phi_bf, phi_df = fringe_phases(split)
    except FringeError:
        phi_bf, phi_df = 0.0, float(np.pi)
        flags.append("no interference term: fringes placed at 0 and pi")

    basis1 = canonicalize_signs(joint_decompose(setup.pass1, opts.deg_tol))
    basis2c = canonicalize_signs(joint_decompose(setup.pass2_nophase, opts.deg_tol))
    dark = fringe_bases(setup, basis1, basis2c, phi_df, opts.deg_tol)
    bright = fringe_bases(setup, basis1, basis2c, phi_bf, opts.deg_tol)

    n_rep = min(int(opts.n_report), basis1.n)
    s_dir, as_dir = direct_levels(basis1.Lambda[:n_rep])
    first_off = total_photon_number(setup.pass1) == 0.0
    if first_off:
        flags.append("first pass off")
    hg = highgain_levels(dark.g, dark.basis2.Lambda, dark.basis_su.Lambda, bright.basis_su.Lambda, rows=range(n_rep))

    rows = []
    for l in range(n_rep):
        mom = exact_moments(dark.g, dark.h, dark.basis2.Lambda, dark.basis_su.Lambda, l, opts.n_modes)
        vmin, vmax, th_min, th_max = extremal_variances(mom)
        s_ex, as_ex = levels(vmin, vmax)
        gap = _convergence_gap(dark.g, dark.h, dark.basis2.Lambda, dark.basis_su.Lambda, l, opts.n_modes)
        if gap > 1e-4:
            flags.append(f"mode {l}: truncation not converged ({gap:.3g})")
            logger.warning("Squeezing mode %d: last decade of modes contributes %.3g.", l, gap)
        hg_row = hg.iloc[l]
        rows.append(
            {
                "l": l,
                "Lambda1": float(basis1.Lambda[l]),
                "S_direct": float(s_dir[l]),
                "AS_direct": float(as_dir[l]),
                "S_exact": s_ex,
                "AS_exact": as_ex,
                "S_hg": 0.0 if first_off else float(hg_row["S_df"]),
                "AS_hg": 0.0 if first_off else float(hg_row["AS_df"]),
                "S_hg_bf": 0.0 if first_off else float(hg_row["S_bf"]),
                "AS_hg_bf": 0.0 if first_off else float(hg_row["AS_bf"]),
                "theta_min": th_min,
                "theta_max": th_max,
                "hg_flags": "" if first_off else hg_row["flags"],
            }
        )

    meta = {
        "phi_bf": float(phi_bf),
        "phi_df": float(phi_df),
        "delta_z": float(setup.delta_z),
        "n_modes": opts.n_modes,
    }
    logger.info("Squeezing report: %d modes, phi_df = %.6f rad", n_rep, phi_df)
    return SqueezingReport(rows=pd.DataFrame(rows), meta=meta, flags=flags)
