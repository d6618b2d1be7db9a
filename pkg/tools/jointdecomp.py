# =========================================
# file: tools/jointdecomp.py
# =========================================
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import List, Sequence, Tuple

import numpy as np
from scipy.linalg import polar, schur, svd

from tools.lab_errors import DegeneracyError, ReconstructionError, SymmetryError, UnitarityError
from tools.physics import Lattice
from tools.propagator import TransferPair, symplectic_residuals

logger = logging.getLogger(__name__)

DEFAULT_DEG_TOL = 1e-8
PRECONDITION_TOL = 1e-4
RECONSTRUCTION_TOL = 1e-6
# Singular values below NULL_TOL * max(1, sv_max) are treated as the null tail.
NULL_TOL = 1e-7
# Off-block mass of K = U_B^dagger U_H tolerated before the two SVDs count as inconsistent.
COUPLING_TOL = 1e-3

Blocks = Tuple[Tuple[int, ...], ...]


@dataclass(frozen=True, eq=False)
class SchmidtBasis:
    """
    Joint Schmidt decomposition on a lattice. U / Psi hold mode functions as columns,
    normalized so that sum_j |u(q_j)|^2 w_j = 1.
    """

    U: np.ndarray
    Psi: np.ndarray
    Lambda: np.ndarray
    blocks: Blocks
    lattice: Lattice
    Lambda_tilde: np.ndarray | None = None
    phi: float = 0.0
    sign_convention: str = "raw"
    flags: Tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.Lambda.size)

    @property
    def U_hat(self) -> np.ndarray:
        return self.lattice.sqrt_w[:, None] * self.U

    @property
    def Psi_hat(self) -> np.ndarray:
        return self.lattice.sqrt_w[:, None] * self.Psi

    @property
    def gap_error(self) -> float:
        """max_n |Lambda_tilde_n - Lambda_n - 1| / max(1, Lambda_tilde_n)."""
        if self.Lambda_tilde is None:
            return 0.0
        lt = np.asarray(self.Lambda_tilde, dtype=float)
        lam = np.asarray(self.Lambda, dtype=float)
        err = np.abs(lt - lam - 1) / np.maximum(1, lt)
        return float(np.max(err)) if err.size else 0.0

    def with_phase(self, phi: float) -> "SchmidtBasis":
        """Basis of the pair with B -> e^{i phi} B: both mode families pick up e^{i phi/2}."""
        f = np.exp(0.5j * phi)
        return replace(self, U=f * self.U, Psi=f * self.Psi, phi=float(self.phi + phi))

    def weighted_gram(self, which: str = "U") -> np.ndarray:
        m = self.U_hat if which == "U" else self.Psi_hat
        return m.conj().T @ m


# -------------------------
# Blocks and square roots
# -------------------------
def block_partition(sv: Sequence[float], deg_tol: float = DEFAULT_DEG_TOL) -> List[Tuple[int, ...]]:
    """Contiguous groups of (descending) values whose neighbours differ by <= deg_tol * max(1, value)."""
    sv = np.asarray(sv, dtype=float)
    if sv.size == 0:
        return []
    blocks, current = [], [0]
    for i in range(1, sv.size):
        if abs(sv[i] - sv[i - 1]) <= deg_tol * max(1.0, abs(sv[i - 1])):
            current.append(i)
        else:
            blocks.append(tuple(current))
            current = [i]
    blocks.append(tuple(current))
    return blocks


def _half_phase(ev: np.ndarray) -> np.ndarray:
    ang = np.angle(ev)
    # both signed zeros on the negative real axis map to the same branch
    ang = np.where(ang <= -np.pi + 1e-15, np.pi, ang)
    return np.exp(0.5j * ang)


def unitary_block_sqrt(Z: np.ndarray, blocks: Sequence[Sequence[int]] | None = None) -> np.ndarray:
    """Principal square root of a unitary, block-diagonal matrix, one Schur form per block."""
    Z = np.asarray(Z, dtype=complex)
    n = Z.shape[0]
    blocks = [tuple(range(n))] if blocks is None else blocks
    out = np.zeros_like(Z)
    for b in blocks:
        idx = np.asarray(b, dtype=int)
        zb = Z[np.ix_(idx, idx)]
        if idx.size == 1:
            out[idx[0], idx[0]] = _half_phase(np.array([zb[0, 0]]))[0]
            continue
        t, q = schur(zb, output="complex")
        out[np.ix_(idx, idx)] = (q * _half_phase(np.diag(t))[None, :]) @ q.conj().T
    return out


def takagi_unitary(G: np.ndarray, tol: float = 1e-10, blocks: Sequence[Sequence[int]] | None = None) -> np.ndarray:
    """D unitary with G = D D^T for a symmetric unitary G."""
    G = np.asarray(G, dtype=complex)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError("The input matrix must be square.")
    if np.linalg.norm(G - G.T) >= tol:
        raise SymmetryError(f"Matrix is not symmetric (|G - G^T| = {np.linalg.norm(G - G.T):.3g}).")
    eye = np.eye(G.shape[0])
    if np.linalg.norm(G.conj().T @ G - eye) >= tol:
        raise UnitarityError("Matrix is not unitary.")
    return unitary_block_sqrt(G, blocks)


# -------------------------
# Joint decomposition
# -------------------------
def _null_start(s: np.ndarray, blocks: List[Tuple[int, ...]]) -> int:
    """Index where the null tail begins (n if there is none)."""
    n = s.size
    if n == 0:
        return 0
    limit = NULL_TOL * max(1.0, float(s[0]))
    last = blocks[-1]
    if float(s[last[0]]) <= limit:
        return last[0]
    return n


def _check_left_consistency(K: np.ndarray, s_tilde: np.ndarray, deg_tol: float) -> None:
    tblocks = block_partition(s_tilde, deg_tol)
    mask = np.zeros(K.shape, dtype=bool)
    for b in tblocks:
        mask[np.ix_(b, b)] = True
    off = np.linalg.norm(np.where(mask, 0, K)) / max(1.0, np.sqrt(K.shape[0]))
    if off > COUPLING_TOL:
        raise DegeneracyError(
            f"Left unitaries of B and H are not block-compatible (off-block mass {off:.3g})."
        )


def _align(
    left: np.ndarray,
    s: np.ndarray,
    V0: np.ndarray,
    h_hat: np.ndarray,
    deg_tol: float,
    takagi_tol: float,
) -> Tuple[np.ndarray, np.ndarray, List[Tuple[int, ...]], Tuple[str, ...]]:
    """
    Shared-left-unitary realignment plus blockwise Takagi step.
    Returns normalized U, Psi, the block structure and advisory flags.
    """
    n = s.size
    s_tilde = np.sqrt(1.0 + s * s)

    # H = left * S~ * V~^dagger with the left unitary shared with B
    v_tilde, _ = polar((h_hat.conj().T @ left) / s_tilde[None, :])

    blocks = block_partition(s, deg_tol)
    null = _null_start(s, blocks)
    V = V0.copy()
    if null < n:
        V[:, null:] = v_tilde[:, null:].conj()

    G = v_tilde.conj().T @ V.conj()
    D = np.zeros((n, n), dtype=complex)
    flags = []
    for b in blocks:
        idx = np.asarray(b, dtype=int)
        if idx[0] >= null:
            D[np.ix_(idx, idx)] = np.eye(idx.size)
            continue
        gb = G[np.ix_(idx, idx)]
        # project onto the symmetric unitary matrices before the square root
        gb, _ = polar(0.5 * (gb + gb.T))
        D[np.ix_(idx, idx)] = takagi_unitary(gb, tol=takagi_tol * max(1.0, np.sqrt(idx.size)))
        if idx.size > 1:
            flags.append(f"degenerate block {idx[0]}..{idx[-1]}")

    U = left @ D
    Psi = V.conj() @ D.conj()
    if null < n:
        flags.append(f"null tail from index {null}")
    return U, Psi, blocks, tuple(flags)


def _finish(
    tp: TransferPair,
    U_hat: np.ndarray,
    Psi_hat: np.ndarray,
    lam: np.ndarray,
    lam_tilde: np.ndarray,
    blocks,
    flags,
    route: str,
) -> SchmidtBasis:
    isw = 1.0 / tp.lattice.sqrt_w
    basis = SchmidtBasis(
        U=isw[:, None] * U_hat,
        Psi=isw[:, None] * Psi_hat,
        Lambda=lam,
        blocks=tuple(tuple(int(i) for i in b) for b in blocks),
        lattice=tp.lattice,
        Lambda_tilde=lam_tilde,
        phi=float(tp.meta.get("phi", 0.0)),
        flags=flags,
        meta={"route": route, "source": dict(tp.meta)},
    )
    r_b, r_h = reconstruction_residuals(tp, basis)
    if max(r_b, r_h) > RECONSTRUCTION_TOL:
        raise ReconstructionError(
            f"Joint decomposition does not reconstruct the pair (B: {r_b:.3g}, H: {r_h:.3g})."
        )
    logger.debug("joint decomposition (%s): residuals B=%.3g H=%.3g, %d blocks", route, r_b, r_h, len(blocks))
    return basis


def _precondition(tp: TransferPair) -> None:
    res = symplectic_residuals(tp)
    if max(res) > PRECONDITION_TOL:
        raise ReconstructionError(
            f"Pair violates the symplectic conditions (max residual {max(res):.3g}); "
            "no joint decomposition exists to tolerance."
        )


def joint_decompose(tp: TransferPair, deg_tol: float = DEFAULT_DEG_TOL, takagi_tol: float = 1e-6) -> SchmidtBasis:
    """
    Two independent SVDs, consistency of their left unitaries, realignment to the left
    unitary of B, Takagi factor of G = V~^dagger V*, then U = left D and Psi = V* D*.
    """
    _precondition(tp)
    b_hat, h_hat = tp.b_hat, tp.h_hat

    left, s, v0h = svd(b_hat)
    left_h, s_h, _ = svd(h_hat)
    K = left.conj().T @ left_h
    _check_left_consistency(K, s_h, deg_tol)

    U, Psi, blocks, flags = _align(left, s, v0h.conj().T, h_hat, deg_tol, takagi_tol)
    lam = np.square(s)
    lam_tilde = np.square(s_h)
    return _finish(tp, U, Psi, lam, lam_tilde, blocks, flags, route="svd")


def decompose_via_eigh(tp: TransferPair, deg_tol: float = DEFAULT_DEG_TOL, takagi_tol: float = 1e-6) -> SchmidtBasis:
    """Cross-check route: left unitary from the eigenvectors of B B^dagger (= H H^dagger - I)."""
    _precondition(tp)
    b_hat, h_hat = tp.b_hat, tp.h_hat
    evals, evecs = np.linalg.eigh(b_hat @ b_hat.conj().T)
    order = np.argsort(evals)[::-1]
    left = evecs[:, order]
    s = np.sqrt(np.clip(evals[order], 0.0, None))

    blocks = block_partition(s, deg_tol)
    null = _null_start(s, blocks)
    V0 = np.zeros_like(left)
    live = slice(0, null)
    V0[:, live] = (b_hat.conj().T @ left[:, live]) / s[live][None, :]
    if null < s.size:
        V0[:, null:] = np.eye(s.size, dtype=complex)[:, null:]
    U, Psi, blocks, flags = _align(left, s, V0, h_hat, deg_tol, takagi_tol)
    lam = np.square(s)
    return _finish(tp, U, Psi, lam, lam + 1.0, blocks, flags, route="eigh")


def reconstruction_residuals(tp: TransferPair, basis: SchmidtBasis) -> Tuple[float, float]:
    uh, ph = basis.U_hat, basis.Psi_hat
    s = np.sqrt(np.clip(basis.Lambda, 0.0, None))
    st = np.sqrt(np.clip(basis.Lambda, 0.0, None) + 1.0)
    b_rec = (uh * s[None, :]) @ ph.T
    h_rec = (uh * st[None, :]) @ ph.conj().T
    nb = np.linalg.norm(tp.b_hat)
    # absolute below unit norm: a vanishing B has no meaningful relative error
    r_b = np.linalg.norm(tp.b_hat - b_rec) / max(nb, 1.0)
    r_h = np.linalg.norm(tp.h_hat - h_rec) / np.linalg.norm(tp.h_hat)
    return float(r_b), float(r_h)


def canonicalize_signs(basis: SchmidtBasis) -> SchmidtBasis:
    """Flip (u_n, psi_n) together so u_n is real-nonnegative at its largest-modulus sample."""
    U = basis.U.copy()
    Psi = basis.Psi.copy()
    peak = np.argmax(np.abs(U), axis=0)
    flip = np.real(U[peak, np.arange(U.shape[1])]) < 0
    U[:, flip] *= -1
    Psi[:, flip] *= -1
    return replace(basis, U=U, Psi=Psi, sign_convention="max-real-nonnegative")


def schmidt_number(Lambda: Sequence[float]) -> float:
    """Effective mode count (sum Lambda)^2 / sum Lambda^2."""
    lam = np.asarray(Lambda, dtype=float)
    denom = float(np.sum(lam * lam))
    return float(np.sum(lam) ** 2 / denom) if denom > 0 else 0.0
