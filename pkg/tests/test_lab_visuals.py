# =========================================
# file: tests/test_lab_visuals.py
# =========================================
import logging

import numpy as np
import pandas as pd
import plotly.graph_objects as go

from tools.calibration import GainCurve, fit_sinh2
from tools.lab_visuals import (
    gain_curve_chart,
    modulus_contour_chart,
    overlap_cells_chart,
    save_svg,
    spectrum_chart,
    squeezing_bars_chart,
)
from tools.overlaps import OverlapMatrix
from tools.physics import Dispersion, Lattice


class TestFigures:
    """Figure builders return populated plotly figures"""

    def test_gain_curve(self):
        g = np.linspace(0.01, 0.05, 6)
        raw = GainCurve(g, 2.0 * np.sinh(100.0 * g) ** 2)
        assert len(gain_curve_chart(raw).data) == 1
        assert len(gain_curve_chart(fit_sinh2(raw)).data) == 2

    def test_spectrum_truncated(self):
        fig = spectrum_chart(np.linspace(5.0, 0.1, 50), n_show=10)
        assert len(fig.data[0].y) == 10

    def test_overlap_handles(self):
        e = np.diag([1.0, 1j, 0.01])
        fig = overlap_cells_chart(OverlapMatrix(e, "u", "psi"), k=3)
        assert isinstance(fig.data[0], go.Heatmap)
        assert len(fig.data[1].x) == 2
        assert fig.layout.title.text == "Overlap u × psi"

    def test_squeezing_bars(self):
        cols = ["S_direct", "S_exact", "S_hg", "AS_direct", "AS_exact", "AS_hg"]
        rows = pd.DataFrame({"l": [0, 1], **{c: [1.0, 2.0] for c in cols}})
        assert len(squeezing_bars_chart(rows).data) == 6

    def test_contours(self):
        lat = Lattice.symmetric(9, 1e5)
        qs, qi = lat.grid()
        fig = modulus_contour_chart(np.exp(-((qs + qi) ** 2) / 1e10), Dispersion.toy(1e7), lat.q)
        assert len(fig.data) == 4


class TestSaveSvg:
    def test_export_failure_is_logged(self, tmp_path, monkeypatch, caplog):
        fig = go.Figure()

        def broken(*args, **kwargs):
            raise ValueError("kaleido missing")

        monkeypatch.setattr(fig, "write_image", broken)
        with caplog.at_level(logging.WARNING):
            assert save_svg(fig, tmp_path / "x.svg") is None
        assert "SVG export unavailable" in caplog.text
