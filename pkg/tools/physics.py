# =========================================
# file: tools/physics.py
# =========================================
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Tuple

import numpy as np

from tools.lab_errors import DomainError

# Fraction of min(k_s, k_i) a lattice may reach before it counts as evanescent.
CONE_MARGIN = 0.95


# -------------------------
# Records
# -------------------------
@dataclass(frozen=True)
class Dispersion:
    """Wave-vector moduli (rad/m) inside the crystal and in the air gap."""

    k_p: float
    k_s: float
    k_i: float
    k_p_air: float
    k_s_air: float
    k_i_air: float
    k_vac: float

    def __post_init__(self):
        for name in ("k_p", "k_s", "k_i", "k_p_air", "k_s_air", "k_i_air", "k_vac"):
            if not float(getattr(self, name)) > 0:
                raise ValueError(f"Dispersion modulus {name} must be positive.")
        if not math.isclose(self.k_s, self.k_i, rel_tol=1e-12):
            raise ValueError("Signal and idler moduli must match (degenerate type-I).")

    @classmethod
    def toy(cls, k_s: float, k_air: float | None = None, k_vac: float | None = None) -> "Dispersion":
        """Constant moduli with exact collinear matching inside and outside the crystal."""
        k_air = float(k_air if k_air is not None else k_s)
        return cls(
            k_p=2.0 * k_s,
            k_s=k_s,
            k_i=k_s,
            k_p_air=2.0 * k_air,
            k_s_air=k_air,
            k_i_air=k_air,
            k_vac=float(k_vac if k_vac is not None else k_air),
        )

    @classmethod
    def bbo_like(
        cls,
        pump_wavelength: float = 400e-9,
        n_signal: float = 1.66055,
        n_air: float = 1.000275,
    ) -> "Dispersion":
        """
        Representative degenerate type-I preset: near-UV pump, signal/idler at twice
        the pump wavelength, ordinary index of BBO at the signal wavelength.
        The pump is phase matched collinearly, the air gap is matched as well.
        """
        k_vac = 2.0 * math.pi / (2.0 * pump_wavelength)
        k_s = n_signal * k_vac
        k_air = n_air * k_vac
        return cls(
            k_p=2.0 * k_s,
            k_s=k_s,
            k_i=k_s,
            k_p_air=2.0 * k_air,
            k_s_air=k_air,
            k_i_air=k_air,
            k_vac=k_vac,
        )


@dataclass(frozen=True)
class PumpProfile:
    sigma: float  # m; field amplitude is folded into gamma

    def __post_init__(self):
        if not float(self.sigma) > 0:
            raise ValueError("Pump waist sigma must be positive.")

    @property
    def fwhm(self) -> float:
        """Intensity FWHM of the Gaussian pump."""
        return 2.0 * self.sigma * math.sqrt(math.log(2.0))


@dataclass(frozen=True)
class CrystalGeometry:
    L1: float
    delta_z: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if not float(self.L1) > 0:
            raise ValueError("Crystal length L1 must be positive.")


# -------------------------
# Lattice
# -------------------------
@dataclass(frozen=True, eq=False)
class Lattice:
    """Uniform transverse wave-vector grid, symmetric about zero, with quadrature weights."""

    q: np.ndarray
    dq: float
    weights: np.ndarray
    rule: str = "trapezoid"

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.ndim != 1 or q.size < 1:
            raise ValueError("Lattice needs a one-dimensional array of points.")
        if q.size > 1:
            steps = np.diff(q)
            if np.max(np.abs(steps - self.dq)) >= 1e-12 * self.dq * max(1.0, q.size):
                raise ValueError("Lattice spacing is not uniform.")
            if np.max(np.abs(q + q[::-1])) > 0.5 * self.dq:
                raise ValueError("Lattice is not symmetric about q = 0.")

    @classmethod
    def symmetric(cls, n: int, q_max: float, rule: str = "trapezoid") -> "Lattice":
        n = int(n)
        if n < 1:
            raise ValueError("Lattice size must be at least 1.")
        if n == 1:
            return cls(q=np.zeros(1), dq=1.0, weights=np.ones(1), rule=rule)
        q = np.linspace(-q_max, q_max, n)
        dq = float(q[1] - q[0])
        w = np.full(n, dq)
        if rule == "trapezoid":
            w[0] = w[-1] = 0.5 * dq
        elif rule != "uniform":
            raise ValueError(f"Unknown quadrature rule '{rule}'.")
        return cls(q=q, dq=dq, weights=w, rule=rule)

    @classmethod
    def from_angle(cls, n: int, theta_extent: float, d: Dispersion, rule: str = "trapezoid") -> "Lattice":
        """Grid spanning +-theta_extent external angle, mapped through k_vac."""
        lat = cls.symmetric(n, theta_extent * d.k_vac, rule=rule)
        lat.check_cone(d)
        return lat

    @property
    def n(self) -> int:
        return int(self.q.size)

    @property
    def sqrt_w(self) -> np.ndarray:
        return np.sqrt(self.weights)

    def delta(self) -> np.ndarray:
        """Discrete delta function: the identity kernel under the weighted measure."""
        return np.diag(1.0 / self.weights).astype(complex)

    def check_cone(self, d: Dispersion) -> None:
        limit = CONE_MARGIN * min(d.k_s, d.k_i)
        if np.max(np.abs(self.q)) > limit:
            raise DomainError(
                f"Lattice reaches |q| = {np.max(np.abs(self.q)):.6g} rad/m, beyond the "
                f"propagating cone guard {limit:.6g} rad/m."
            )

    def matches(self, other: "Lattice") -> bool:
        return (
            self is other
            or (
                self.n == other.n
                and np.array_equal(self.q, other.q)
                and np.array_equal(self.weights, other.weights)
            )
        )

    def angles(self, d: Dispersion) -> np.ndarray:
        return angle_of(self.q, d)

    def grid(self) -> Tuple[np.ndarray, np.ndarray]:
        """(qs, qi) meshes with qs along rows and qi along columns."""
        return np.meshgrid(self.q, self.q, indexing="ij")


# -------------------------
# Point functions
# -------------------------
def _longitudinal(k: float, q, what: str):
    radicand = k * k - np.square(q)
    if np.any(radicand < 0):
        raise DomainError(f"Evanescent {what} wave: |q| exceeds k = {k:.6g} rad/m.")
    return np.sqrt(radicand)


def delta_k(qs, qi, d: Dispersion):
    """Collinear wave-vector mismatch inside the crystal."""
    qs = np.asarray(qs, dtype=float)
    qi = np.asarray(qi, dtype=float)
    return (
        _longitudinal(d.k_p, qs + qi, "pump")
        - _longitudinal(d.k_s, qs, "signal")
        - _longitudinal(d.k_i, qi, "idler")
    )


def delta_k_air(qs, qi, d: Dispersion):
    qs = np.asarray(qs, dtype=float)
    qi = np.asarray(qi, dtype=float)
    return (
        _longitudinal(d.k_p_air, qs + qi, "pump (air)")
        - _longitudinal(d.k_s_air, qs, "signal (air)")
        - _longitudinal(d.k_i_air, qi, "idler (air)")
    )


def pump_kernel(qs, qi, p: PumpProfile):
    s = np.asarray(qs, dtype=float) + np.asarray(qi, dtype=float)
    return np.exp(-0.5 * np.square(s * p.sigma))


def phasematch_first(qs, qi, L: float, d: Dispersion):
    return np.exp(1j * delta_k(qs, qi, d) * L)


def phasematch_second(qs, qi, L: float, geom: CrystalGeometry, d: Dispersion, include_phi: bool = True):
    """
    Second-pass phase matching. With include_phi=False the e^{i phi} factor is split off,
    which is the convention used for the phase-free second pass.
    """
    out = np.exp(-1j * delta_k(qs, qi, d) * (L - 2.0 * geom.L1))
    out = out * np.exp(-1j * delta_k_air(qs, qi, d) * geom.delta_z)
    if include_phi:
        out = out * np.exp(1j * geom.phi)
    return out


def angle_of(q, d: Dispersion):
    """External angle, theta ~ q / k_vac."""
    return np.asarray(q, dtype=float) / d.k_vac


# -------------------------
# Grid phase-matching functions (L -> n x n)
# -------------------------
PhaseOnGrid = Callable[[float], np.ndarray]


def first_pass_phase(lat: Lattice, d: Dispersion) -> PhaseOnGrid:
    qs, qi = lat.grid()
    dk = delta_k(qs, qi, d)

    def h(L: float) -> np.ndarray:
        return np.exp(1j * dk * L)

    return h


def second_pass_phase(lat: Lattice, d: Dispersion, geom: CrystalGeometry, include_phi: bool = True) -> PhaseOnGrid:
    qs, qi = lat.grid()
    dk = delta_k(qs, qi, d)
    offset = np.exp(-1j * delta_k_air(qs, qi, d) * geom.delta_z)
    if include_phi:
        offset = offset * np.exp(1j * geom.phi)

    def h(L: float) -> np.ndarray:
        return np.exp(-1j * dk * (L - 2.0 * geom.L1)) * offset

    return h


# -------------------------
# Coupling kernel
# -------------------------
@dataclass(frozen=True, eq=False)
class CouplingKernel:
    """
    K(L)[j, k] = gamma * M(L)[j, k] * w_k, where M carries pump factor and phase matching.
    The integrators use the symmetric normalized form W^{1/2} M W^{1/2} * gamma.
    """

    lattice: Lattice
    gamma: float
    profile: Callable[[float], np.ndarray]
    span: Tuple[float, float]
    meta: Dict = field(default_factory=dict)

    def __call__(self, L: float) -> np.ndarray:
        if self.gamma == 0:
            return np.zeros((self.lattice.n, self.lattice.n), dtype=complex)
        return self.gamma * self.profile(L) * self.lattice.weights[None, :]

    def normalized(self, L: float) -> np.ndarray:
        if self.gamma == 0:
            return np.zeros((self.lattice.n, self.lattice.n), dtype=complex)
        sw = self.lattice.sqrt_w
        return self.gamma * (sw[:, None] * self.profile(L) * sw[None, :])

    @classmethod
    def diagonal(cls, lat: Lattice, gamma: float, span: Tuple[float, float], meta: Dict | None = None) -> "CouplingKernel":
        """Plane-wave toy kernel: K = gamma * I, every q evolves on its own."""
        m = np.diag(1.0 / lat.weights).astype(complex)
        return cls(
            lattice=lat,
            gamma=float(gamma),
            profile=lambda L: m,
            span=(float(span[0]), float(span[1])),
            meta=dict(meta or {}, kernel="diagonal", gamma=float(gamma)),
        )


def coupling_kernel(
    lat: Lattice,
    gamma: float,
    h: PhaseOnGrid,
    p: PumpProfile,
    span: Tuple[float, float],
    meta: Dict | None = None,
) -> CouplingKernel:
    qs, qi = lat.grid()
    pump = pump_kernel(qs, qi, p)

    def profile(L: float) -> np.ndarray:
        return pump * h(L)

    return CouplingKernel(
        lattice=lat,
        gamma=float(gamma),
        profile=profile,
        span=(float(span[0]), float(span[1])),
        meta=dict(meta or {}, kernel="pdc", gamma=float(gamma)),
    )


def first_pass_kernel(lat: Lattice, gamma: float, p: PumpProfile, d: Dispersion, geom: CrystalGeometry) -> CouplingKernel:
    return coupling_kernel(
        lat, gamma, first_pass_phase(lat, d), p, (0.0, geom.L1),
        meta={"label": "pass1", "phi": 0.0, "delta_z": 0.0},
    )


def second_pass_kernel(
    lat: Lattice,
    gamma: float,
    p: PumpProfile,
    d: Dispersion,
    geom: CrystalGeometry,
    include_phi: bool = False,
) -> CouplingKernel:
    """
    Second pass, integrated over the unfolded coordinate L in [L1, 2 L1] so that it runs
    the first-pass phase matching backwards. By default in the phase-free convention.
    """
    return coupling_kernel(
        lat, gamma, second_pass_phase(lat, d, geom, include_phi=include_phi), p, (geom.L1, 2.0 * geom.L1),
        meta={
            "label": "pass2" if include_phi else "pass2_nophase",
            "phi": float(geom.phi) if include_phi else 0.0,
            "delta_z": float(geom.delta_z),
        },
    )
