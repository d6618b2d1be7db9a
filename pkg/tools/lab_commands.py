# =========================================
# file: tools/lab_commands.py
# =========================================
from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Dict, Tuple

import numpy as np
import pandas as pd

from tools.asymmetry import (
    asymmetry_metric,
    fit_mode_comparison,
    modulus_decomposition,
    separable_phase_fit,
)
from tools.calibration import gain_to_gamma
from tools.interferometer import (
    DeltaZOptimum,
    fringe_offset,
    fringe_phases,
    optimize_deltaz,
    phi_scan,
    visibility,
)
from tools.jointdecomp import schmidt_number
from tools.lab_calcs import (
    LabContext,
    build_context,
    calibrate,
    decompose,
    fringe_overlaps_builder,
    gammas_for,
    resolve_A,
    single_crystal,
    split_builder,
    su_setup,
)
from tools.lab_errors import ConfigError, LabError, NumericError
from tools.lab_persistence import ensure_dir, write_csv, write_json, write_overlap
from tools.lab_state import RunConfig, build_manifest, config_hash
from tools.lab_visuals import (
    gain_curve_chart,
    mode_traces_chart,
    modulus_contour_chart,
    overlap_cells_chart,
    phase_traces_chart,
    phi_scan_chart,
    save_svg,
    spectrum_chart,
    squeezing_bars_chart,
    visibility_chart,
)
from tools.overlaps import REPORT_MODES, c_matrix, offdiag_mass, phase_sweep
from tools.propagator import symplectic_residuals, total_photon_number
from tools.squeezing import SqueezingOptions, build_report

logger = logging.getLogger(__name__)


# -------------------------
# Helpers
# -------------------------
def _start(cfg: RunConfig, name: str) -> Tuple[Path, LabContext]:
    out = ensure_dir(cfg.run.out)
    manifest = build_manifest(cfg)
    manifest["command"] = name
    manifest["config_hash"] = config_hash(cfg)
    write_json(manifest, out / "manifest.json")
    logger.info("%s: output in %s (config %s)", name, out, manifest["config_hash"])
    try:
        ctx = build_context(cfg)
    except LabError:
        raise
    except ValueError as exc:
        raise ConfigError(f"Invalid setup: {exc}") from exc
    return out, ctx


def _figure(cfg: RunConfig, fig, path: Path) -> None:
    if cfg.run.plots:
        save_svg(fig, path)


def _gain_tag(g: float) -> str:
    return f"G{g:g}".replace(".", "p")


def _fit_constant(ctx: LabContext, out: Path) -> float:
    A, curve = resolve_A(ctx)
    if curve is not None:
        write_csv(curve.to_frame(), out / "gain_curve.csv")
        write_json({"A": curve.A, "B": curve.B, "residual": curve.residual}, out / "fit.json")
    return A


def _delta_z(ctx: LabContext, build, out: Path) -> Tuple[float, DeltaZOptimum | None]:
    ic = ctx.cfg.interferometer
    if not ic.optimize:
        return ic.delta_z, None
    opt = optimize_deltaz(
        build, (ic.dz_min, ic.dz_max), n_samples=ic.dz_samples,
        xatol=1e-3 * ctx.cfg.crystal.L1, workers=ctx.workers,
    )
    write_csv(opt.curve, out / "vis_curve.csv")
    _figure(ctx.cfg, visibility_chart(opt.curve, opt.dz_star), out / "vis_curve.svg")
    return opt.dz_star, opt


# -------------------------
# Pipelines
# -------------------------
def cmd_calibrate(cfg: RunConfig) -> Dict[str, Any]:
    out, ctx = _start(cfg, "calibrate")
    curve = calibrate(ctx)
    write_csv(curve.to_frame(), out / "gain_curve.csv")
    summary = {"A": curve.A, "B": curve.B, "residual": curve.residual, "n_samples": int(curve.gammas.size)}
    write_json(summary, out / "fit.json")
    _figure(cfg, gain_curve_chart(curve), out / "gain_curve.svg")
    return summary


def cmd_single_crystal(cfg: RunConfig) -> Dict[str, Any]:
    out, ctx = _start(cfg, "single-crystal")
    A = _fit_constant(ctx, out)
    sc = cfg.single_crystal
    theta = ctx.lattice.angles(ctx.dispersion)
    summary: Dict[str, Any] = {"A": A, "runs": []}

    for G in sc.gains:
        tag = _gain_tag(G)
        gamma = gain_to_gamma(G, A)
        tp = single_crystal(ctx, gamma)
        basis = decompose(ctx, tp)
        k = min(sc.n_report, basis.n)

        write_csv(
            pd.DataFrame(
                {
                    "n": np.arange(basis.n),
                    "Lambda": basis.Lambda,
                    "Lambda_tilde": basis.Lambda_tilde,
                }
            ),
            out / f"lambdas_{tag}.csv",
        )

        modes = [m for m in sc.modes if m < basis.n]
        if modes:
            cols: Dict[str, Any] = {"theta": theta, "q": ctx.lattice.q}
            for m in modes:
                cols[f"abs_psi_{m}"] = np.abs(basis.Psi[:, m])
                cols[f"arg_psi_{m}"] = np.angle(basis.Psi[:, m])
                cols[f"abs_u_{m}"] = np.abs(basis.U[:, m])
                cols[f"arg_u_{m}"] = np.angle(basis.U[:, m])
            write_csv(pd.DataFrame(cols), out / f"modes_{tag}.csv")
            _figure(cfg, mode_traces_chart(basis, ctx.dispersion, modes, "Psi"), out / f"modes_psi_{tag}.svg")
            _figure(cfg, mode_traces_chart(basis, ctx.dispersion, modes, "U"), out / f"modes_u_{tag}.svg")

        c = c_matrix(basis)
        write_overlap(c, out / f"c_matrix_{tag}.json", k)
        _figure(cfg, spectrum_chart(basis.Lambda, title=f"Schmidt eigenvalues, G = {G:g}"), out / f"lambdas_{tag}.svg")
        _figure(cfg, overlap_cells_chart(c, k), out / f"c_matrix_{tag}.svg")

        diag = np.abs(np.diag(c.entries))[:k]
        summary["runs"].append(
            {
                "G_exp": G,
                "gamma": gamma,
                "photons": total_photon_number(tp),
                "schmidt_number": schmidt_number(basis.Lambda),
                "gap_error": basis.gap_error,
                "symplectic_residuals": list(symplectic_residuals(tp)),
                "c_diag_abs": diag,
                "flags": list(basis.flags),
            }
        )
        logger.info("single crystal G = %g: Lambda_0 = %.6g, K = %.3f", G, basis.Lambda[0], schmidt_number(basis.Lambda))

    write_json(summary, out / "single_crystal.json")
    return summary


def cmd_interferometer(cfg: RunConfig, sweep: bool = False) -> Dict[str, Any]:
    out, ctx = _start(cfg, "sweep-deltaz" if sweep else "interferometer")
    ic = cfg.interferometer
    A = _fit_constant(ctx, out)
    g1, g2 = gammas_for(ctx, A)
    pass1 = single_crystal(ctx, g1)
    build = split_builder(ctx, g1, g2, pass1)

    dz, opt = _delta_z(ctx, build, out)
    split = build(dz)
    v = visibility(split)
    if not ic.optimize:
        write_csv(pd.DataFrame({"delta_z": [dz], "visibility": [v]}), out / "vis_curve.csv")
    upsilon = fringe_offset(split)
    phi_bf, phi_df = fringe_phases(split)

    scan = phi_scan(split, np.linspace(0.0, 2.0 * np.pi, ic.n_phi_scan))
    write_csv(scan, out / "phi_scan.csv")
    _figure(cfg, phi_scan_chart(scan), out / "phi_scan.svg")
    if ic.phis is not None:
        write_csv(phi_scan(split, ic.phis), out / "phi_points.csv")

    fo = fringe_overlaps_builder(ctx, g1, g2, pass1)
    fringes = fo(dz)
    for name, m in (("g_bf", fringes.g_bf), ("g_df", fringes.g_df), ("h_bf", fringes.h_bf), ("h_df", fringes.h_df)):
        write_overlap(m, out / f"{name}.json", REPORT_MODES)
        _figure(cfg, overlap_cells_chart(m, REPORT_MODES, title=name), out / f"{name}.svg")

    summary = {
        "delta_z_star": dz,
        "v_max": v,
        "upsilon": upsilon,
        "phi_bf": phi_bf,
        "phi_df": phi_df,
        "gamma1": g1,
        "gamma2": g2,
        "offdiag_mass_g_df": offdiag_mass(fringes.g_df.entries, REPORT_MODES),
        "offdiag_mass_h_df": offdiag_mass(fringes.h_df.entries, REPORT_MODES),
        "flags": list(opt.flags) if opt else [],
        "vis_roughness": opt.roughness if opt else 0.0,
    }
    write_json(summary, out / "fringe.json")

    if sweep:
        dzs = np.linspace(ic.sweep_min, ic.sweep_max, ic.sweep_samples)
        df = phase_sweep(fo, dzs, ic.mode_pairs, workers=ctx.workers)
        write_csv(df, out / "phase_sweep.csv")
        cols = [c for c in df.columns if c.startswith("arg_g_df_")]
        _figure(cfg, phase_traces_chart(df, cols), out / "phase_sweep.svg")
    return summary


def cmd_sweep_deltaz(cfg: RunConfig) -> Dict[str, Any]:
    return cmd_interferometer(cfg, sweep=True)


def cmd_squeezing(cfg: RunConfig) -> Dict[str, Any]:
    out, ctx = _start(cfg, "squeezing")
    A = _fit_constant(ctx, out)
    g1, g2 = gammas_for(ctx, A)
    pass1 = single_crystal(ctx, g1)
    dz, _ = _delta_z(ctx, split_builder(ctx, g1, g2, pass1), out)
    setup = su_setup(ctx, g1, g2, dz, pass1=pass1)

    sq = cfg.squeezing
    report = build_report(setup, SqueezingOptions(n_report=sq.n_report, n_modes=sq.n_modes, deg_tol=cfg.decomposition.deg_tol))
    write_csv(report.rows, out / "squeezing.csv")
    summary = dict(report.meta, flags=report.flags, gamma1=g1, gamma2=g2)
    write_json(summary, out / "squeezing.json")
    _figure(cfg, squeezing_bars_chart(report.rows), out / "squeezing.svg")
    return summary


def cmd_asymmetry(cfg: RunConfig) -> Dict[str, Any]:
    out, ctx = _start(cfg, "asymmetry")
    ac = cfg.asymmetry
    A = _fit_constant(ctx, out)
    gamma = gain_to_gamma(ac.gain, A)
    tp = single_crystal(ctx, gamma)

    metric = asymmetry_metric(tp.B)
    write_json({"G_exp": ac.gain, "gamma": gamma, "metric": metric}, out / "asymmetry.json")

    fit = separable_phase_fit(tp.B, ctx.lattice, order=ac.order, level=ac.level)
    write_json(fit.to_dict(), out / "phase_fit.json")
    orders = [
        {"order": k, "residual": separable_phase_fit(tp.B, ctx.lattice, order=k, level=ac.level).residual}
        for k in range(1, ac.order + 1)
    ]
    write_csv(pd.DataFrame(orders), out / "phase_fit_orders.csv")

    absbasis = modulus_decomposition(tp.B, ctx.lattice)
    exact = decompose(ctx, tp)
    c_fit = fit_mode_comparison(absbasis, fit, exact)
    write_overlap(absbasis.c_abs, out / "c_abs.json", 20)
    write_overlap(c_fit, out / "c_fit.json", 20)

    _figure(cfg, modulus_contour_chart(tp.B, ctx.dispersion, ctx.lattice.q), out / "beta_modulus.svg")
    _figure(cfg, overlap_cells_chart(absbasis.c_abs, 20, title="c abs"), out / "c_abs.svg")
    _figure(cfg, overlap_cells_chart(c_fit, 20, title="c fit"), out / "c_fit.svg")

    logger.info("asymmetry at G = %g: %.3g, phase fit residual %.3g rad", ac.gain, metric, fit.residual)
    return {"metric": metric, "residual": fit.residual, "correlation": c_fit.provenance.get("correlation")}


COMMANDS = {
    "calibrate": cmd_calibrate,
    "single-crystal": cmd_single_crystal,
    "interferometer": cmd_interferometer,
    "sweep-deltaz": cmd_sweep_deltaz,
    "squeezing": cmd_squeezing,
    "asymmetry": cmd_asymmetry,
}


def run_command(name: str, cfg: RunConfig) -> Dict[str, Any]:
    """
    Run one subcommand. `run` dispatches to `[run].pipeline`. Library
    failures (singular matrices, bad solver input, overflow) surface as
    NumericError so the CLI maps them to exit code 2.
    """
    if name == "run":
        if not cfg.run.pipeline:
            raise ConfigError("run.pipeline is not set; name a subcommand or set [run].pipeline.")
        name = cfg.run.pipeline
    try:
        return COMMANDS[name](cfg)
    except LabError:
        raise
    except (np.linalg.LinAlgError, ValueError, ArithmeticError) as exc:
        raise NumericError(f"{name}: {type(exc).__name__}: {exc}") from exc
