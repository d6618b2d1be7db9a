# =========================================
# file: tools/propagator.py
# =========================================
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from tools.lab_errors import IntegrationError
from tools.physics import CouplingKernel, Lattice

logger = logging.getLogger(__name__)

DEFAULT_RTOL = 1e-9
DEFAULT_ATOL = 1e-12


# -------------------------
# Transfer pair
# -------------------------
@dataclass(frozen=True, eq=False)
class TransferPair:
    """
    Discretized transfer functions: H ~ eta_tilde(q, q'), B ~ beta(q, q').
    `h_hat` / `b_hat` are the weight-normalized matrices W^{1/2} X W^{1/2}, in which the
    symplectic identities hold with a plain identity.
    """

    H: np.ndarray
    B: np.ndarray
    lattice: Lattice
    meta: Dict = field(default_factory=dict)

    @cached_property
    def h_hat(self) -> np.ndarray:
        sw = self.lattice.sqrt_w
        return sw[:, None] * self.H * sw[None, :]

    @cached_property
    def b_hat(self) -> np.ndarray:
        sw = self.lattice.sqrt_w
        return sw[:, None] * self.B * sw[None, :]

    @property
    def n(self) -> int:
        return self.lattice.n

    @classmethod
    def from_normalized(cls, h_hat: np.ndarray, b_hat: np.ndarray, lattice: Lattice, meta: Dict | None = None) -> "TransferPair":
        isw = 1.0 / lattice.sqrt_w
        return cls(
            H=isw[:, None] * np.asarray(h_hat, dtype=complex) * isw[None, :],
            B=isw[:, None] * np.asarray(b_hat, dtype=complex) * isw[None, :],
            lattice=lattice,
            meta=dict(meta or {}),
        )


def identity_pair(lat: Lattice, meta: Dict | None = None) -> TransferPair:
    return TransferPair(
        H=lat.delta(),
        B=np.zeros((lat.n, lat.n), dtype=complex),
        lattice=lat,
        meta=dict(meta or {}, label="identity", gamma=0.0),
    )


def with_phase(tp: TransferPair, phi: float) -> TransferPair:
    """Restore e^{i phi} on a phase-free pass: B -> e^{i phi} B, H unchanged."""
    meta = dict(tp.meta)
    meta["phi"] = float(meta.get("phi", 0.0)) + float(phi)
    return TransferPair(H=tp.H, B=np.exp(1j * phi) * tp.B, lattice=tp.lattice, meta=meta)


# -------------------------
# Real embedding helpers
# -------------------------
def _pack(b_hat: np.ndarray, hc_hat: np.ndarray) -> np.ndarray:
    z = np.concatenate([np.ravel(b_hat), np.ravel(hc_hat)]).astype(np.complex128)
    return z.view(np.float64)


def _unpack(y: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    z = np.ascontiguousarray(y, dtype=np.float64).view(np.complex128)
    nn = n * n
    return z[:nn].reshape(n, n), z[nn:].reshape(n, n)


def _span(kernel: CouplingKernel, span: Sequence[float] | None) -> Tuple[float, float]:
    La, Lb = span if span is not None else kernel.span
    return float(La), float(Lb)


# -------------------------
# Integrators
# -------------------------
def integrate_rk(
    kernel: CouplingKernel,
    span: Sequence[float] | None = None,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> TransferPair:
    """
    Adaptive Runge-Kutta 5(4) from the identity boundary condition.
    State: (B_hat, conj(H_hat)) with dB/dL = K conj(H) and d conj(H)/dL = conj(K) B.
    """
    lat = kernel.lattice
    n = lat.n
    La, Lb = _span(kernel, span)
    meta = dict(kernel.meta, integrator="rk45", rtol=rtol, atol=atol, span=[La, Lb])

    if kernel.gamma == 0 or La == Lb:
        return TransferPair.from_normalized(np.eye(n, dtype=complex), np.zeros((n, n), dtype=complex), lat, meta)

    def rhs(L, y):
        b, hc = _unpack(y, n)
        k = kernel.normalized(L)
        return _pack(k @ hc, k.conj() @ b)

    y0 = _pack(np.zeros((n, n), dtype=complex), np.eye(n, dtype=complex))
    sol = solve_ivp(rhs, (La, Lb), y0, method="RK45", rtol=rtol, atol=atol)
    if sol.status == -1:
        raise IntegrationError(
            f"Runge-Kutta integration failed at L = {sol.t[-1]:.6g} m: {sol.message}",
            position=float(sol.t[-1]),
        )

    b, hc = _unpack(sol.y[:, -1], n)
    logger.debug("rk45 %s: %d rhs evaluations", kernel.meta.get("label", "?"), sol.nfev)
    return TransferPair.from_normalized(hc.conj(), b, lat, dict(meta, nfev=int(sol.nfev)))


def integrate_lie_euler(
    kernel: CouplingKernel,
    n_steps: int,
    span: Sequence[float] | None = None,
    node: str = "left",
) -> TransferPair:
    """
    Lie-Euler: S <- expm(h G(L_k)) S with G = [[0, K], [conj K, 0]], S = [[H, B], [B*, H*]].
    node="midpoint" samples the generator at the step centre (exponential midpoint rule).
    """
    if int(n_steps) < 1:
        raise ValueError("Lie-Euler needs at least one step.")
    if node not in ("left", "midpoint"):
        raise ValueError(f"Unknown Lie-Euler node '{node}'.")

    lat = kernel.lattice
    n = lat.n
    La, Lb = _span(kernel, span)
    meta = dict(kernel.meta, integrator=f"lie-euler-{node}", n_steps=int(n_steps), span=[La, Lb])
    if kernel.gamma == 0 or La == Lb:
        return TransferPair.from_normalized(np.eye(n, dtype=complex), np.zeros((n, n), dtype=complex), lat, meta)

    h = (Lb - La) / int(n_steps)
    offset = 0.5 * h if node == "midpoint" else 0.0
    s = np.eye(2 * n, dtype=complex)
    gen = np.zeros((2 * n, 2 * n), dtype=complex)
    for step in range(int(n_steps)):
        L = La + step * h + offset
        k = kernel.normalized(L)
        gen[:n, n:] = k
        gen[n:, :n] = k.conj()
        step_map = expm(h * gen)
        if not np.all(np.isfinite(step_map)):
            raise IntegrationError(f"Matrix exponential diverged at L = {L:.6g} m.", position=L)
        s = step_map @ s

    return TransferPair.from_normalized(s[:n, :n], s[:n, n:], lat, meta)


def convergence_study(
    kernel: CouplingKernel,
    steps: Iterable[int],
    reference: TransferPair | None = None,
    node: str = "left",
) -> pd.DataFrame:
    """Lie-Euler self-convergence against an RK reference; observed order from successive doublings."""
    ref = reference if reference is not None else integrate_rk(kernel)
    ref_norm = np.linalg.norm(np.concatenate([ref.h_hat, ref.b_hat]))
    rows = []
    for n_steps in steps:
        tp = integrate_lie_euler(kernel, n_steps, node=node)
        err = np.linalg.norm(np.concatenate([tp.h_hat - ref.h_hat, tp.b_hat - ref.b_hat])) / ref_norm
        rows.append({"n_steps": int(n_steps), "rel_error": float(err)})

    df = pd.DataFrame(rows)
    order = [np.nan]
    for i in range(1, len(df)):
        e0, e1 = df["rel_error"].iloc[i - 1], df["rel_error"].iloc[i]
        r = df["n_steps"].iloc[i] / df["n_steps"].iloc[i - 1]
        order.append(float(np.log(e0 / e1) / np.log(r)) if e0 > 0 and e1 > 0 and r != 1 else np.nan)
    df["order"] = order
    return df


# -------------------------
# Diagnostics
# -------------------------
def symplectic_residuals(tp: TransferPair) -> Tuple[float, float, float, float]:
    h, b = tp.h_hat, tp.b_hat
    eye = np.eye(tp.n)
    scale = np.linalg.norm(h @ h.conj().T)
    if scale == 0:
        return (np.inf, np.inf, np.inf, np.inf)
    r1 = np.linalg.norm(h @ h.conj().T - b @ b.conj().T - eye)
    r2 = np.linalg.norm(h @ b.T - b @ h.T)
    r3 = np.linalg.norm(h.conj().T @ h - b.T @ b.conj() - eye)
    r4 = np.linalg.norm(h.conj().T @ b - b.T @ h.conj())
    return tuple(float(r / scale) for r in (r1, r2, r3, r4))


def photon_number_density(tp: TransferPair) -> np.ndarray:
    """Vacuum-input mean photon number per unit q: N(q_j) = sum_k |B_jk|^2 w_k."""
    return np.sum(np.abs(tp.b_hat) ** 2, axis=1) / tp.lattice.weights


def total_photon_number(tp: TransferPair) -> float:
    return float(np.sum(np.abs(tp.b_hat) ** 2))


def collinear_intensity(tp: TransferPair) -> float:
    """<N_s(q=0)> dq, interpolated when the lattice has no point at q = 0."""
    lat = tp.lattice
    dens = photon_number_density(tp)
    if lat.n == 1:
        return float(dens[0] * lat.weights[0])
    return float(np.interp(0.0, lat.q, dens) * lat.dq)
