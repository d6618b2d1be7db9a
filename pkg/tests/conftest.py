# =========================================
# file: tests/conftest.py
# =========================================
from pathlib import Path

import numpy as np
import pytest

from tools.physics import Lattice
from tools.propagator import TransferPair


@pytest.fixture
def config_dir():
    return Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def tol():
    return 1e-8


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def lattice6():
    return Lattice.symmetric(6, 1.0)


@pytest.fixture
def random_unitary(rng):
    """Haar-distributed n x n unitary from the QR of a complex Gaussian matrix."""

    def make(n):
        z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        q, r = np.linalg.qr(z)
        return q * (np.diag(r) / np.abs(np.diag(r)))[None, :]

    return make


@pytest.fixture
def planted_pair(random_unitary):
    """
    Symplectic pair with prescribed eigenvalues:
    B_hat = U diag(sqrt(L)) Psi^T, H_hat = U diag(sqrt(L + 1)) Psi^dagger.
    Returns (pair, U_hat, Psi_hat).
    """

    def make(lat, Lambda, U_hat=None, Psi_hat=None):
        lam = np.asarray(Lambda, dtype=float)
        n = lat.n
        U_hat = random_unitary(n) if U_hat is None else U_hat
        Psi_hat = random_unitary(n) if Psi_hat is None else Psi_hat
        s = np.sqrt(lam)
        st = np.sqrt(lam + 1.0)
        b_hat = (U_hat * s[None, :]) @ Psi_hat.T
        h_hat = (U_hat * st[None, :]) @ Psi_hat.conj().T
        tp = TransferPair.from_normalized(h_hat, b_hat, lat, {"label": "planted"})
        return tp, U_hat, Psi_hat

    return make


@pytest.fixture
def balanced_second():
    """Phase-free second pass of a compensated balanced device: H2 = H1^dagger, B2 = B1^T."""

    def make(pass1):
        return TransferPair.from_normalized(
            pass1.h_hat.conj().T, pass1.b_hat.T, pass1.lattice, {"label": "pass2_nophase", "phi": 0.0}
        )

    return make
