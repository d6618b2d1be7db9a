# =========================================
# file: tools/lab_visuals.py
# =========================================
from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
import plotly.graph_objects as go

from tools.calibration import GainCurve
from tools.jointdecomp import SchmidtBasis
from tools.overlaps import OverlapMatrix
from tools.physics import Dispersion

logger = logging.getLogger(__name__)

SUPPORT_LEVEL = 1e-3
CONTOUR_LEVELS = (np.exp(-1.0), 0.1, 1e-3)
PHASE_HANDLE_MIN = 0.02


def _layout(fig: go.Figure, title: str, height: int = 420, **kwargs) -> go.Figure:
    fig.update_layout(
        title=dict(text=title, x=0, xanchor="left"),
        height=height,
        margin=dict(l=20, r=20, t=55, b=20),
        template="plotly_white",
        **kwargs,
    )
    return fig


def save_svg(fig: go.Figure, path: str | Path) -> Path | None:
    """Static SVG through kaleido; a missing exporter only costs the picture."""
    path = Path(path)
    try:
        fig.write_image(str(path), format="svg")
    except (ValueError, ImportError, RuntimeError) as exc:
        logger.warning("SVG export unavailable for %s: %s", path.name, exc)
        return None
    return path


# ------------------------------
# GAIN CURVE
# ------------------------------
def gain_curve_chart(curve: GainCurve):
    df = curve.to_frame()
    fig = go.Figure()
    fig.add_trace(go.Scatter(x=df["gamma"], y=df["n0"], mode="markers", name="simulated"))
    if curve.fitted:
        dense = np.linspace(0.0, float(df["gamma"].max()), 200)
        fig.add_trace(
            go.Scatter(x=dense, y=curve.model(dense), mode="lines", name=f"B sinh²(AΓ), A = {curve.A:.4g}")
        )
    return _layout(fig, "Collinear intensity vs coupling", xaxis_title="Γ", yaxis_title="⟨N(q=0)⟩ dq", yaxis_type="log")


# ------------------------------
# MODES
# ------------------------------
def mode_traces_chart(basis: SchmidtBasis, d: Dispersion, modes: Sequence[int] = (0, 1, 2), family: str = "Psi"):
    """|mode| and arg(mode) against the external angle, phases shown where |mode| exceeds 1e-3 of its peak."""
    theta_mrad = basis.lattice.angles(d) * 1e3
    data = basis.Psi if family == "Psi" else basis.U
    label = "ψ" if family == "Psi" else "u"
    fig = go.Figure()
    for n in modes:
        if n >= data.shape[1]:
            continue
        f = data[:, n]
        a = np.abs(f)
        ph = np.where(a >= SUPPORT_LEVEL * a.max(), np.angle(f), np.nan)
        fig.add_trace(go.Scatter(x=theta_mrad, y=a, mode="lines", name=f"|{label}{n}|"))
        fig.add_trace(go.Scatter(x=theta_mrad, y=ph, mode="lines", name=f"arg {label}{n}", yaxis="y2", line=dict(dash="dot")))
    return _layout(
        fig,
        f"Mode functions {label}",
        xaxis_title="θ (mrad)",
        yaxis=dict(title="modulus"),
        yaxis2=dict(title="phase (rad)", overlaying="y", side="right"),
    )


def spectrum_chart(Lambda: np.ndarray, n_show: int = 30, title: str = "Schmidt eigenvalues"):
    lam = np.asarray(Lambda)[:n_show]
    fig = go.Figure(go.Bar(x=np.arange(lam.size), y=lam, name="Λ"))
    return _layout(fig, title, xaxis_title="mode n", yaxis_title="Λₙ", yaxis_type="log")


# ------------------------------
# OVERLAPS
# ------------------------------
def overlap_cells_chart(m: OverlapMatrix, k: int = 15, title: str | None = None):
    """|entry| as colour, phase handles on cells above 0.02."""
    e = m.entries[:k, :k]
    a = np.abs(e)
    fig = go.Figure(go.Heatmap(z=a, colorscale="Blues", zmin=0, zmax=1, colorbar=dict(title="|·|")))
    rows, cols = np.nonzero(a > PHASE_HANDLE_MIN)
    if rows.size:
        ph = np.angle(e[rows, cols])
        fig.add_trace(
            go.Scatter(
                x=cols,
                y=rows,
                mode="markers",
                marker=dict(symbol="line-ew", size=12, angle=np.degrees(-ph), line=dict(width=2, color="crimson")),
                name="phase",
                hovertext=[f"{p / np.pi:.3f} π" for p in ph],
            )
        )
    return _layout(
        fig,
        title or f"Overlap {m.row_family} × {m.col_family}",
        height=520,
        xaxis_title=m.col_family,
        yaxis=dict(title=m.row_family, autorange="reversed"),
        showlegend=False,
    )


# ------------------------------
# INTERFEROMETER
# ------------------------------
def visibility_chart(curve: pd.DataFrame, dz_star: float | None = None):
    fig = go.Figure(go.Scatter(x=curve["delta_z"] * 1e6, y=curve["visibility"], mode="lines+markers", name="v"))
    if dz_star is not None:
        fig.add_vline(x=dz_star * 1e6, line_dash="dash", annotation_text="δz*")
    return _layout(fig, "Visibility vs δz", xaxis_title="δz (µm)", yaxis_title="v (%)")


def phi_scan_chart(df: pd.DataFrame):
    fig = go.Figure(go.Scatter(x=df["phi"] / np.pi, y=df["intensity"], mode="lines", name="N_total"))
    return _layout(fig, "Total intensity vs φ", xaxis_title="φ (π rad)", yaxis_title="⟨N⟩")


def phase_traces_chart(df: pd.DataFrame, columns: Sequence[str]):
    fig = go.Figure()
    for c in columns:
        fig.add_trace(go.Scatter(x=df["delta_z"] * 1e6, y=df[c] / np.pi, mode="lines", name=c))
    return _layout(fig, "Overlap phases vs δz", xaxis_title="δz (µm)", yaxis_title="phase (π rad)")


# ------------------------------
# SQUEEZING
# ------------------------------
def squeezing_bars_chart(rows: pd.DataFrame):
    fig = go.Figure()
    for col, name in (("S_direct", "direct"), ("S_exact", "exact"), ("S_hg", "high gain")):
        fig.add_trace(go.Bar(x=rows["l"], y=rows[col], name=name))
    for col, name in (("AS_direct", "direct AS"), ("AS_exact", "exact AS"), ("AS_hg", "high gain AS")):
        fig.add_trace(go.Bar(x=rows["l"], y=rows[col], name=name, opacity=0.5))
    return _layout(fig, "Squeezing and antisqueezing per mode", barmode="group", xaxis_title="mode l", yaxis_title="dB")


# ------------------------------
# ASYMMETRY
# ------------------------------
def modulus_contour_chart(B: np.ndarray, d: Dispersion, q: np.ndarray, title: str = "|β(q, q')|"):
    """Normalized |B| with contours where it has decayed to 1/e, 1/10 and 1/1000 of the peak."""
    a = np.abs(B)
    a = a / a.max() if a.max() > 0 else a
    theta = q / d.k_vac * 1e3
    fig = go.Figure(go.Heatmap(x=theta, y=theta, z=a, colorscale="Viridis"))
    for level in CONTOUR_LEVELS:
        fig.add_trace(
            go.Contour(
                x=theta, y=theta, z=a,
                contours=dict(start=level, end=level, size=1, coloring="none"),
                line=dict(width=1.5, color="white"),
                showscale=False,
                name=f"{level:.3g}",
            )
        )
    return _layout(fig, title, height=520, xaxis_title="θ_i (mrad)", yaxis_title="θ_s (mrad)")
