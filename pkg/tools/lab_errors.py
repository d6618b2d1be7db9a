# =========================================
# file: tools/lab_errors.py
# =========================================
from __future__ import annotations


class LabError(Exception):
    """Base class for every failure the lab reports. `exit_code` is what the CLI returns."""

    exit_code = 2


# -------------------------
# Config (exit 1)
# -------------------------
class ConfigError(LabError):
    exit_code = 1


# -------------------------
# Numerics (exit 2)
# -------------------------
class NumericError(LabError):
    exit_code = 2


class DomainError(NumericError, ValueError):
    """Grid point outside the propagating-wave cone."""


class IntegrationError(NumericError):
    def __init__(self, message: str, position: float | None = None):
        super().__init__(message)
        self.position = position


class PropagationError(NumericError):
    """One or more independent jobs failed; `failures` maps parameter -> message."""

    def __init__(self, message: str, failures: dict | None = None):
        super().__init__(message)
        self.failures = dict(failures or {})


class ReconstructionError(NumericError):
    pass


class DegeneracyError(NumericError):
    pass


class SymmetryError(NumericError):
    pass


class UnitarityError(NumericError):
    pass


class PhysicalityError(NumericError):
    pass


class TruncationError(NumericError):
    pass


class PhaseMismatchError(NumericError):
    pass


class LatticeMismatchError(NumericError):
    pass


class FringeError(NumericError):
    """No usable fringe: |C| vanishes or the intensity denominator is zero."""


class UnwrapError(NumericError):
    pass


# -------------------------
# Fits (exit 3)
# -------------------------
class FitError(LabError):
    exit_code = 3
