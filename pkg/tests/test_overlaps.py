# =========================================
# file: tests/test_overlaps.py
# =========================================
import numpy as np
import pandas as pd
import pytest

from tools.jointdecomp import SchmidtBasis, joint_decompose
from tools.lab_errors import LatticeMismatchError, PhaseMismatchError
from tools.overlaps import (
    FringeOverlaps,
    OverlapMatrix,
    c_matrix,
    g_check,
    g_matrix,
    h_matrix,
    offdiag_mass,
    overlap,
    phase_sweep,
    unwrap_traces,
    wrap_half_pi,
)
from tools.physics import Lattice

PLANTED = [5.0, 3.0, 2.0, 1.0, 0.5, 0.1]


def basis_from(U_hat, Psi_hat, lat, phi=0.0):
    sw = lat.sqrt_w[:, None]
    n = lat.n
    return SchmidtBasis(
        U=U_hat / sw,
        Psi=Psi_hat / sw,
        Lambda=np.linspace(2.0, 0.5, n),
        blocks=tuple((i,) for i in range(n)),
        lattice=lat,
        phi=phi,
    )


class TestOverlap:
    """Weighted inner products of mode families"""

    def test_c_identity(self, lattice6, random_unitary, tol):
        """c is the identity when both mode families coincide"""
        u = random_unitary(6)
        c = c_matrix(basis_from(u, u, lattice6))
        assert np.allclose(c.entries, np.eye(6), atol=tol, rtol=0)
        assert c.shape == (6, 6)
        assert c.top(3).shape == (3, 3)

    def test_unitary(self, lattice6, random_unitary, tol):
        b = basis_from(random_unitary(6), random_unitary(6), lattice6)
        m = overlap(b.U, b.Psi, True, lattice6).entries
        assert np.allclose(m @ m.conj().T, np.eye(6), atol=tol, rtol=0)

    def test_wrong_lattice(self, lattice6):
        with pytest.raises(LatticeMismatchError):
            overlap(np.ones((5, 2)), np.ones((6, 2)), True, lattice6)


class TestNamedMatrices:
    def test_g_fringe_phases(self, lattice6, planted_pair, tol):
        """g at phi + pi equals i times g at phi"""
        b1 = joint_decompose(planted_pair(lattice6, PLANTED)[0])
        b2 = joint_decompose(planted_pair(lattice6, [2.0, 1.5, 1.0, 0.7, 0.3, 0.05])[0])
        g0 = g_matrix(b1, b2, 0.3)
        g1 = g_matrix(b1, b2, 0.3 + np.pi)
        assert np.allclose(g1.entries, 1j * g0.entries, atol=tol, rtol=0)
        assert np.allclose(g_check(g0), g_check(g1), atol=tol, rtol=0)
        bare = OverlapMatrix(g0.entries, "u(1)", "psi(2)", phi=0.3)
        assert np.allclose(g_check(bare), g_check(g0), atol=tol, rtol=0)

    def test_g_lattice_mismatch(self, random_unitary):
        a = basis_from(random_unitary(6), random_unitary(6), Lattice.symmetric(6, 1.0))
        b = basis_from(random_unitary(6), random_unitary(6), Lattice.symmetric(6, 2.0))
        with pytest.raises(LatticeMismatchError):
            g_matrix(a, b, 0.0)

    def test_h_phase_mismatch(self, lattice6, random_unitary):
        a = basis_from(random_unitary(6), random_unitary(6), lattice6, phi=0.0)
        b = basis_from(random_unitary(6), random_unitary(6), lattice6, phi=1.0)
        with pytest.raises(PhaseMismatchError, match="different phases"):
            h_matrix(a, b)

    def test_h_same_basis(self, lattice6, random_unitary, tol):
        a = basis_from(random_unitary(6), random_unitary(6), lattice6, phi=0.5)
        assert np.allclose(h_matrix(a, a).entries, np.eye(6), atol=tol, rtol=0)


class TestDiagnostics:
    def test_offdiag_mass(self):
        assert offdiag_mass(np.eye(4)) == 0.0
        assert offdiag_mass(np.ones((2, 2))) == pytest.approx(0.5)
        assert offdiag_mass(np.zeros((3, 3))) == 0.0
        assert offdiag_mass(np.ones((4, 4)), k=1) == 0.0

    def test_wrap_half_pi(self, tol):
        wrapped = wrap_half_pi([0.1, np.pi / 2, np.pi, -np.pi / 2 - 0.1])
        assert np.allclose(wrapped, [0.1, -np.pi / 2, 0.0, np.pi / 2 - 0.1], atol=tol, rtol=0)

    def test_unwrap_traces(self, tol):
        t = np.linspace(0.0, 2 * np.pi, 20)
        order = np.random.default_rng(3).permutation(20)
        df = pd.DataFrame({"delta_z": t[order], "arg": wrap_half_pi(t)[order]})
        out = unwrap_traces(df, ["arg"])
        assert np.allclose(out["delta_z"], t, atol=tol, rtol=0)
        assert np.allclose(out["arg"], t, atol=tol, rtol=0)


class TestPhaseSweep:
    """Overlap phases along delta_z"""

    @staticmethod
    def fake(dz):
        m = OverlapMatrix(np.exp(0.2j * dz) * np.ones((2, 2)), "a", "b")
        return FringeOverlaps(
            delta_z=dz, phi_bf=0.0, phi_df=np.pi, visibility=90.0, g_bf=m, g_df=m, h_bf=m, h_df=m
        )

    def test_columns(self, tol):
        df = phase_sweep(self.fake, [0.0, 1.0, 2.0], [(0, 0), (1, 1), (0, 1)], workers=1)
        for name in ("arg_g_bf_0_0", "arg_g_df_1_1", "arg_h_bf_0_1", "arg_h_df_0_0"):
            assert np.allclose(df[name], [0.0, 0.2, 0.4], atol=tol, rtol=0)
        assert np.allclose(df["g_diag_spread"], 0.0, atol=tol, rtol=0)
        assert list(df["visibility"]) == [90.0, 90.0, 90.0]
