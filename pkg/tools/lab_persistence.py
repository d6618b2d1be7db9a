# =========================================
# file: tools/lab_persistence.py
# =========================================
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, Tuple

import numpy as np
import pandas as pd

from tools.jointdecomp import SchmidtBasis
from tools.lab_errors import ConfigError
from tools.overlaps import OverlapMatrix
from tools.physics import Lattice
from tools.propagator import TransferPair

logger = logging.getLogger(__name__)


# -------------------------
# Helpers
# -------------------------
def to_jsonable(x: Any) -> Any:
    """Complex numbers become [re, im]; numpy scalars and arrays become plain Python."""
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return to_jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return [float(np.real(x)), float(np.imag(x))]
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def ensure_dir(path: str | Path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def write_csv(df: pd.DataFrame, path: str | Path) -> Path:
    path = Path(path)
    df.to_csv(path, float_format="%.17g", lineterminator="\n", index=False)
    logger.debug("wrote %s (%d rows)", path, len(df))
    return path


def write_json(data: Any, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(to_jsonable(data), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    logger.debug("wrote %s", path)
    return path


def read_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def overlap_payload(m: OverlapMatrix, k: int | None = None) -> Dict[str, Any]:
    e = m.entries if k is None else m.entries[:k, :k]
    return {
        "rows": m.row_family,
        "cols": m.col_family,
        "phi": m.phi,
        "entries": e,
    }


def write_overlap(m: OverlapMatrix, path: str | Path, k: int | None = None) -> Path:
    return write_json(overlap_payload(m, k), path)


# -------------------------
# Binary containers
# -------------------------
def _lattice_header(lat: Lattice) -> Dict[str, Any]:
    return {"n": lat.n, "dq": lat.dq, "q0": float(lat.q[0]), "rule": lat.rule}


def _lattice_from(header: Dict[str, Any]) -> Lattice:
    n = int(header["n"])
    if n == 1:
        return Lattice.symmetric(1, 0.0, rule=header.get("rule", "trapezoid"))
    return Lattice.symmetric(n, -float(header["q0"]), rule=header.get("rule", "trapezoid"))


def _paths(path: str | Path) -> Tuple[Path, Path]:
    p = Path(path)
    if p.suffix == ".npz":
        p = p.with_suffix("")
    return p.with_suffix(".npz"), p.with_suffix(".json")


def save_transfer_pair(tp: TransferPair, path: str | Path) -> Path:
    npz, side = _paths(path)
    np.savez(npz, H=np.ascontiguousarray(tp.H), B=np.ascontiguousarray(tp.B), weights=tp.lattice.weights)
    write_json({"kind": "transfer_pair", "lattice": _lattice_header(tp.lattice), "meta": tp.meta}, side)
    return npz


def load_transfer_pair(path: str | Path) -> TransferPair:
    npz, side = _paths(path)
    if not npz.is_file() or not side.is_file():
        raise ConfigError(f"Transfer pair container not found: {npz}")
    header = read_json(side)
    lat = _lattice_from(header["lattice"])
    with np.load(npz) as data:
        return TransferPair(H=data["H"], B=data["B"], lattice=lat, meta=header.get("meta", {}))


def save_basis(basis: SchmidtBasis, path: str | Path) -> Path:
    npz, side = _paths(path)
    np.savez(
        npz,
        U=basis.U,
        Psi=basis.Psi,
        Lambda=basis.Lambda,
        Lambda_tilde=basis.Lambda_tilde,
    )
    write_json(
        {
            "kind": "schmidt_basis",
            "lattice": _lattice_header(basis.lattice),
            "blocks": [list(b) for b in basis.blocks],
            "phi": basis.phi,
            "sign_convention": basis.sign_convention,
            "flags": list(basis.flags),
            "meta": basis.meta,
        },
        side,
    )
    return npz


def load_basis(path: str | Path) -> SchmidtBasis:
    npz, side = _paths(path)
    if not npz.is_file() or not side.is_file():
        raise ConfigError(f"Basis container not found: {npz}")
    header = read_json(side)
    lat = _lattice_from(header["lattice"])
    with np.load(npz) as data:
        return SchmidtBasis(
            U=data["U"],
            Psi=data["Psi"],
            Lambda=data["Lambda"],
            blocks=tuple(tuple(b) for b in header["blocks"]),
            lattice=lat,
            Lambda_tilde=data["Lambda_tilde"],
            phi=float(header["phi"]),
            sign_convention=header.get("sign_convention", ""),
            flags=tuple(header.get("flags", [])),
            meta=header.get("meta", {}),
        )
