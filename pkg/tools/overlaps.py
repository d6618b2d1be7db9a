# =========================================
# file: tools/overlaps.py
# =========================================
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd

from tools.jointdecomp import SchmidtBasis
from tools.lab_errors import LatticeMismatchError, PhaseMismatchError
from tools.lab_pool import run_jobs
from tools.physics import Lattice

logger = logging.getLogger(__name__)

REPORT_MODES = 15


@dataclass(frozen=True, eq=False)
class OverlapMatrix:
    entries: np.ndarray
    row_family: str
    col_family: str
    phi: float = 0.0
    provenance: Dict = field(default_factory=dict)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.entries.shape

    def top(self, m: int = REPORT_MODES) -> np.ndarray:
        return self.entries[:m, :m]


# -------------------------
# Kernel
# -------------------------
def overlap(
    rows: np.ndarray,
    cols: np.ndarray,
    conj_rows: bool,
    lat: Lattice,
    row_family: str = "rows",
    col_family: str = "cols",
    phi: float = 0.0,
    provenance: Dict | None = None,
) -> OverlapMatrix:
    """entry[l, m] = sum_j rows[j, l]^(*) cols[j, m] w_j."""
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    if rows.shape[0] != lat.n or cols.shape[0] != lat.n:
        raise LatticeMismatchError("Mode functions do not live on the given lattice.")
    r = rows.conj() if conj_rows else rows
    entries = r.T @ (cols * lat.weights[:, None])
    return OverlapMatrix(entries, row_family, col_family, float(phi), dict(provenance or {}))


def _shared_lattice(*bases: SchmidtBasis) -> Lattice:
    lat = bases[0].lattice
    for b in bases[1:]:
        if not lat.matches(b.lattice):
            raise LatticeMismatchError("Bases come from different lattices.")
    return lat


# -------------------------
# Named matrices
# -------------------------
def c_matrix(basis: SchmidtBasis, label: str = "") -> OverlapMatrix:
    """Same-crystal overlap, integrand u_l(q) psi_m(q)*."""
    return overlap(
        basis.U, basis.Psi.conj(), False, basis.lattice,
        row_family=f"u{label}", col_family=f"psi{label}", phi=basis.phi,
    )


def g_matrix(basis1: SchmidtBasis, basis2_nophase: SchmidtBasis, phi: float) -> OverlapMatrix:
    """g = e^{i phi/2} g_check with g_check[k, m] = <u_k(1), psi_check_m(2)>."""
    lat = _shared_lattice(basis1, basis2_nophase)
    g_check = overlap(basis1.U, basis2_nophase.Psi, True, lat).entries
    return OverlapMatrix(
        entries=np.exp(0.5j * phi) * g_check,
        row_family="u(1)",
        col_family="psi(2)",
        phi=float(phi),
        provenance={"g_check": g_check, "pass2_phi": float(basis2_nophase.phi)},
    )


def g_check(g: OverlapMatrix) -> np.ndarray:
    if "g_check" in g.provenance:
        return g.provenance["g_check"]
    return np.exp(-0.5j * g.phi) * g.entries


def h_matrix(basis2: SchmidtBasis, basis_su: SchmidtBasis) -> OverlapMatrix:
    """h[n, l] = <u_n(2), u_l(SU)>; both bases must belong to the same phi."""
    if not np.isclose(basis2.phi, basis_su.phi, rtol=0, atol=1e-12):
        raise PhaseMismatchError(
            f"Bases computed at different phases ({basis2.phi:.6g} vs {basis_su.phi:.6g})."
        )
    lat = _shared_lattice(basis2, basis_su)
    return overlap(basis2.U, basis_su.U, True, lat, row_family="u(2)", col_family="u(SU)", phi=basis2.phi)


# -------------------------
# Diagnostics
# -------------------------
def offdiag_mass(m: np.ndarray, k: int | None = None) -> float:
    """Off-diagonal share of sum |m|^2 over the leading k x k block."""
    a = np.abs(np.asarray(m)[:k, :k]) ** 2
    total = float(np.sum(a))
    return float((total - np.trace(a)) / total) if total > 0 else 0.0


def wrap_half_pi(x):
    """Map phases to [-pi/2, pi/2); the sign ambiguity of the modes makes them defined mod pi."""
    return np.mod(np.asarray(x, dtype=float) + 0.5 * np.pi, np.pi) - 0.5 * np.pi


def unwrap_traces(df: pd.DataFrame, columns: Iterable[str]) -> pd.DataFrame:
    """Remove +-pi jumps along delta_z."""
    out = df.sort_values("delta_z").reset_index(drop=True).copy()
    for c in columns:
        out[c] = np.unwrap(out[c].to_numpy(), period=np.pi)
    return out


# -------------------------
# delta_z sweep
# -------------------------
@dataclass
class FringeOverlaps:
    """g and h at bright and dark fringe for one delta_z."""

    delta_z: float
    phi_bf: float
    phi_df: float
    visibility: float
    g_bf: OverlapMatrix
    g_df: OverlapMatrix
    h_bf: OverlapMatrix
    h_df: OverlapMatrix


def phase_sweep(
    build: Callable[[float], FringeOverlaps],
    dz_samples: Sequence[float],
    mode_pairs: Sequence[Tuple[int, int]],
    workers: int | None = None,
) -> pd.DataFrame:
    """
    For each delta_z, wrapped phases of the requested g and h entries at both fringes,
    unwrapped along delta_z afterwards.
    """
    results: List[FringeOverlaps] = run_jobs(build, [float(z) for z in dz_samples], workers=workers, what="delta_z sample")
    rows = []
    for res in results:
        row = {"delta_z": res.delta_z, "visibility": res.visibility, "phi_bf": res.phi_bf, "phi_df": res.phi_df}
        for (a, b) in mode_pairs:
            row[f"arg_g_bf_{a}_{b}"] = float(wrap_half_pi(np.angle(res.g_bf.entries[a, b])))
            row[f"arg_g_df_{a}_{b}"] = float(wrap_half_pi(np.angle(res.g_df.entries[a, b])))
            row[f"arg_h_bf_{a}_{b}"] = float(wrap_half_pi(np.angle(res.h_bf.entries[a, b])))
            row[f"arg_h_df_{a}_{b}"] = float(wrap_half_pi(np.angle(res.h_df.entries[a, b])))
        rows.append(row)
    df = pd.DataFrame(rows)
    phase_cols = [c for c in df.columns if c.startswith("arg_")]
    if len(df) > 1:
        df = unwrap_traces(df, phase_cols)
    diag = [f"arg_g_df_{a}_{b}" for (a, b) in mode_pairs if a == b]
    if diag:
        df["g_diag_spread"] = df[diag].max(axis=1) - df[diag].min(axis=1)
    return df
