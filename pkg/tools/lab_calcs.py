# =========================================
# file: tools/lab_calcs.py
# =========================================
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Tuple

from tools.calibration import GainCurve, fit_sinh2, gain_to_gamma, gamma_grid, sample_gain_curve
from tools.interferometer import SuSetup, XySplit, fringe_phases, visibility, xy_split
from tools.jointdecomp import SchmidtBasis, canonicalize_signs, joint_decompose
from tools.lab_state import RunConfig
from tools.overlaps import FringeOverlaps
from tools.physics import (
    CouplingKernel,
    CrystalGeometry,
    Dispersion,
    Lattice,
    PumpProfile,
    first_pass_kernel,
    second_pass_kernel,
)
from tools.propagator import TransferPair, integrate_lie_euler, integrate_rk
from tools.squeezing import fringe_bases

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LabContext:
    """Everything that stays fixed while gains and delta_z vary."""

    cfg: RunConfig
    dispersion: Dispersion
    lattice: Lattice
    profile: PumpProfile

    @property
    def workers(self) -> int | None:
        return self.cfg.run.workers or None


# -------------------------
# Builders
# -------------------------
def build_dispersion(cfg: RunConfig) -> Dispersion:
    d = cfg.dispersion
    if d.preset == "toy":
        return Dispersion.toy(d.k_s, k_air=d.k_air, k_vac=d.k_vac)
    return Dispersion.bbo_like(pump_wavelength=d.pump_wavelength, n_signal=d.n_signal, n_air=d.n_air)


def build_lattice(cfg: RunConfig, d: Dispersion) -> Lattice:
    lc = cfg.lattice
    if lc.q_max is not None:
        lat = Lattice.symmetric(lc.n, lc.q_max, rule=lc.rule)
        lat.check_cone(d)
        return lat
    return Lattice.from_angle(lc.n, lc.theta_extent, d, rule=lc.rule)


def build_context(cfg: RunConfig) -> LabContext:
    d = build_dispersion(cfg)
    lat = build_lattice(cfg, d)
    logger.debug("Lattice: n = %d, dq = %.6g rad/m, q_max = %.6g rad/m", lat.n, lat.dq, lat.q[-1])
    return LabContext(cfg=cfg, dispersion=d, lattice=lat, profile=PumpProfile(cfg.pump.sigma))


def geometry(ctx: LabContext, delta_z: float = 0.0, phi: float = 0.0) -> CrystalGeometry:
    return CrystalGeometry(L1=ctx.cfg.crystal.L1, delta_z=float(delta_z), phi=float(phi))


def first_kernel(ctx: LabContext, gamma: float) -> CouplingKernel:
    geom = geometry(ctx)
    if ctx.cfg.kernel.type == "diagonal":
        return CouplingKernel.diagonal(ctx.lattice, gamma, (0.0, geom.L1), {"label": "pass1", "phi": 0.0, "delta_z": 0.0})
    return first_pass_kernel(ctx.lattice, gamma, ctx.profile, ctx.dispersion, geom)


def second_kernel(ctx: LabContext, gamma: float, delta_z: float) -> CouplingKernel:
    geom = geometry(ctx, delta_z)
    if ctx.cfg.kernel.type == "diagonal":
        return CouplingKernel.diagonal(
            ctx.lattice, gamma, (0.0, geom.L1), {"label": "pass2_nophase", "phi": 0.0, "delta_z": float(delta_z)}
        )
    return second_pass_kernel(ctx.lattice, gamma, ctx.profile, ctx.dispersion, geom, include_phi=False)


def propagate(ctx: LabContext, kernel: CouplingKernel) -> TransferPair:
    ic = ctx.cfg.integrator
    if ic.method == "lie_euler":
        return integrate_lie_euler(kernel, ic.n_steps, node=ic.node)
    return integrate_rk(kernel, rtol=ic.rtol, atol=ic.atol)


def decompose(ctx: LabContext, tp: TransferPair) -> SchmidtBasis:
    return canonicalize_signs(joint_decompose(tp, ctx.cfg.decomposition.deg_tol))


def single_crystal(ctx: LabContext, gamma: float) -> TransferPair:
    return propagate(ctx, first_kernel(ctx, gamma))


# -------------------------
# Calibration
# -------------------------
def default_A_guess(ctx: LabContext) -> float:
    """Plane-wave estimate: the pump factor integrates to sqrt(2 pi)/sigma over the idler."""
    cal = ctx.cfg.calibration
    if cal.A_guess is not None:
        return cal.A_guess
    L1 = ctx.cfg.crystal.L1
    if ctx.cfg.kernel.type == "diagonal":
        return L1
    return L1 * math.sqrt(2.0 * math.pi) / ctx.profile.sigma


def calibrate(ctx: LabContext) -> GainCurve:
    cal = ctx.cfg.calibration
    gammas = gamma_grid(default_A_guess(ctx), (cal.g_min, cal.g_max), cal.n_samples)
    gammas = gammas[gammas > 0]
    curve = sample_gain_curve(lambda g: first_kernel(ctx, g), gammas, workers=ctx.workers)
    return fit_sinh2(curve)


def resolve_A(ctx: LabContext) -> Tuple[float, GainCurve | None]:
    """Configured fit constant, or a fresh calibration when none is given."""
    if ctx.cfg.calibration.A is not None:
        return ctx.cfg.calibration.A, None
    curve = calibrate(ctx)
    return curve.A, curve


def gammas_for(ctx: LabContext, A: float) -> Tuple[float, float]:
    g = ctx.cfg.gain
    return gain_to_gamma(g.G1, A), gain_to_gamma(g.G2, A)


# -------------------------
# Interferometer
# -------------------------
def su_setup(ctx: LabContext, gamma1: float, gamma2: float, delta_z: float,
             pass1: TransferPair | None = None) -> SuSetup:
    p1 = pass1 if pass1 is not None else single_crystal(ctx, gamma1)
    p2 = propagate(ctx, second_kernel(ctx, gamma2, delta_z))
    return SuSetup(pass1=p1, pass2_nophase=p2, delta_z=float(delta_z), meta={"gamma1": gamma1, "gamma2": gamma2})


def split_builder(ctx: LabContext, gamma1: float, gamma2: float,
                  pass1: TransferPair | None = None) -> Callable[[float], XySplit]:
    """delta_z -> XySplit, with the first pass propagated once."""
    p1 = pass1 if pass1 is not None else single_crystal(ctx, gamma1)

    def build(delta_z: float) -> XySplit:
        return xy_split(su_setup(ctx, gamma1, gamma2, delta_z, pass1=p1))

    return build


def fringe_overlaps_builder(ctx: LabContext, gamma1: float, gamma2: float,
                            pass1: TransferPair | None = None) -> Callable[[float], FringeOverlaps]:
    """delta_z -> g and h at both fringes."""
    p1 = pass1 if pass1 is not None else single_crystal(ctx, gamma1)
    basis1 = decompose(ctx, p1)
    deg_tol = ctx.cfg.decomposition.deg_tol

    def build(delta_z: float) -> FringeOverlaps:
        setup = su_setup(ctx, gamma1, gamma2, delta_z, pass1=p1)
        split = xy_split(setup)
        phi_bf, phi_df = fringe_phases(split)
        basis2c = decompose(ctx, setup.pass2_nophase)
        bright = fringe_bases(setup, basis1, basis2c, phi_bf, deg_tol)
        dark = fringe_bases(setup, basis1, basis2c, phi_df, deg_tol)
        return FringeOverlaps(
            delta_z=float(delta_z),
            phi_bf=phi_bf,
            phi_df=phi_df,
            visibility=visibility(split),
            g_bf=bright.g,
            g_df=dark.g,
            h_bf=bright.h,
            h_df=dark.h,
        )

    return build
