# =========================================
# file: tools/lab_state.py
# =========================================
from __future__ import annotations

import hashlib
import json
import math
import re
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Tuple

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import tools
from tools.lab_errors import ConfigError

# -------------------------
# Units
# -------------------------
LENGTH_UNITS = {"nm": 1e-9, "um": 1e-6, "µm": 1e-6, "mm": 1e-3, "m": 1.0}
ANGLE_UNITS = {"mrad": 1e-3, "rad": 1.0}
WAVEVECTOR_UNITS = {"rad/m": 1.0, "rad/um": 1e6, "rad/µm": 1e6}

_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([^\s\d].*?)\s*$")


def parse_quantity(value: Any, units: Dict[str, float], what: str) -> float:
    """'3 mm' -> 0.003. A bare number is rejected; the unit must be spelled out."""
    if isinstance(value, bool) or not isinstance(value, str):
        raise ConfigError(f"{what} needs a unit suffix (one of {', '.join(units)}), got {value!r}.")
    m = _QUANTITY.match(value)
    if not m:
        raise ConfigError(f"{what} must look like '<number> <unit>', got {value!r}.")
    number, unit = m.group(1), m.group(2)
    if unit not in units:
        raise ConfigError(f"{what}: unknown unit {unit!r} (allowed: {', '.join(units)}).")
    out = float(number) * units[unit]
    if not math.isfinite(out):
        raise ConfigError(f"{what} must be finite.")
    return out


def length(value, what: str) -> float:
    return parse_quantity(value, LENGTH_UNITS, what)


def angle(value, what: str) -> float:
    return parse_quantity(value, ANGLE_UNITS, what)


def wavevector(value, what: str) -> float:
    return parse_quantity(value, WAVEVECTOR_UNITS, what)


def number(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{what} must be a plain number, got {value!r}.")
    return float(value)


def count(value, what: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{what} must be an integer >= {minimum}, got {value!r}.")
    return int(value)


# -------------------------
# Config tree
# -------------------------
# Subcommands `[run].pipeline` may name
PIPELINES = ("calibrate", "single-crystal", "interferometer", "sweep-deltaz", "squeezing", "asymmetry")


@dataclass(frozen=True)
class RunSection:
    pipeline: str = ""
    out: str = "out"
    workers: int = 0
    seed: int = 0
    plots: bool = True


@dataclass(frozen=True)
class DispersionSection:
    preset: str = "bbo_like"
    pump_wavelength: float = 400e-9
    n_signal: float = 1.66055
    n_air: float = 1.000275
    k_s: float | None = None
    k_air: float | None = None
    k_vac: float | None = None


@dataclass(frozen=True)
class PumpSection:
    sigma: float = 70e-6 / math.sqrt(2.0)


@dataclass(frozen=True)
class CrystalSection:
    L1: float = 3e-3


@dataclass(frozen=True)
class LatticeSection:
    n: int = 61
    theta_extent: float | None = 0.03
    q_max: float | None = None
    rule: str = "trapezoid"


@dataclass(frozen=True)
class KernelSection:
    type: str = "pdc"


@dataclass(frozen=True)
class GainSection:
    G1: float = 1.0
    G2: float = 1.0


@dataclass(frozen=True)
class CalibrationSection:
    A: float | None = None
    A_guess: float | None = None
    g_min: float = 0.01
    g_max: float = 8.0
    n_samples: int = 24


@dataclass(frozen=True)
class InterferometerSection:
    delta_z: float = 0.0
    optimize: bool = False
    dz_min: float = 0.0
    dz_max: float = 1e-3
    dz_samples: int = 32
    phis: Tuple[float, ...] | None = None
    n_phi_scan: int = 181
    sweep_min: float = 0.0
    sweep_max: float = 1e-3
    sweep_samples: int = 41
    mode_pairs: Tuple[Tuple[int, int], ...] = ((0, 0), (1, 1), (2, 2), (0, 1))


@dataclass(frozen=True)
class IntegratorSection:
    method: str = "rk45"
    rtol: float = 1e-9
    atol: float = 1e-12
    n_steps: int = 2000
    node: str = "left"


@dataclass(frozen=True)
class DecompositionSection:
    deg_tol: float = 1e-8


@dataclass(frozen=True)
class SingleCrystalSection:
    gains: Tuple[float, ...] = (0.1, 1.0, 8.0)
    modes: Tuple[int, ...] = (0, 1, 2)
    n_report: int = 15


@dataclass(frozen=True)
class SqueezingSection:
    n_report: int = 15
    n_modes: int | None = None


@dataclass(frozen=True)
class AsymmetrySection:
    gain: float = 8.0
    order: int = 4
    level: float = 1e-3


@dataclass(frozen=True)
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    dispersion: DispersionSection = field(default_factory=DispersionSection)
    pump: PumpSection = field(default_factory=PumpSection)
    crystal: CrystalSection = field(default_factory=CrystalSection)
    lattice: LatticeSection = field(default_factory=LatticeSection)
    kernel: KernelSection = field(default_factory=KernelSection)
    gain: GainSection = field(default_factory=GainSection)
    calibration: CalibrationSection = field(default_factory=CalibrationSection)
    interferometer: InterferometerSection = field(default_factory=InterferometerSection)
    integrator: IntegratorSection = field(default_factory=IntegratorSection)
    decomposition: DecompositionSection = field(default_factory=DecompositionSection)
    single_crystal: SingleCrystalSection = field(default_factory=SingleCrystalSection)
    squeezing: SqueezingSection = field(default_factory=SqueezingSection)
    asymmetry: AsymmetrySection = field(default_factory=AsymmetrySection)


# -------------------------
# Section parsers
# -------------------------
def _take(section: str, data: Dict, allowed: set) -> Dict:
    if not isinstance(data, dict):
        raise ConfigError(f"[{section}] must be a table.")
    extra = sorted(set(data) - allowed)
    if extra:
        raise ConfigError(f"[{section}] has unknown keys: {', '.join(extra)}.")
    return data


def _choice(value, options, what: str) -> str:
    if value not in options:
        raise ConfigError(f"{what} must be one of {', '.join(options)}, got {value!r}.")
    return value


def _run(d: Dict) -> RunSection:
    d = _take("run", d, {"pipeline", "out", "workers", "seed", "plots"})
    base = RunSection()
    return RunSection(
        pipeline=_choice(str(d["pipeline"]), PIPELINES, "run.pipeline") if "pipeline" in d else base.pipeline,
        out=str(d.get("out", base.out)),
        workers=count(d.get("workers", base.workers), "run.workers"),
        seed=count(d.get("seed", base.seed), "run.seed"),
        plots=bool(d.get("plots", base.plots)),
    )


def _dispersion(d: Dict) -> DispersionSection:
    d = _take("dispersion", d, {"preset", "pump_wavelength", "n_signal", "n_air", "k_s", "k_air", "k_vac"})
    base = DispersionSection()
    preset = _choice(d.get("preset", base.preset), ("bbo_like", "toy"), "dispersion.preset")
    opt = lambda key: wavevector(d[key], f"dispersion.{key}") if key in d else None
    out = DispersionSection(
        preset=preset,
        pump_wavelength=length(d["pump_wavelength"], "dispersion.pump_wavelength") if "pump_wavelength" in d else base.pump_wavelength,
        n_signal=number(d.get("n_signal", base.n_signal), "dispersion.n_signal"),
        n_air=number(d.get("n_air", base.n_air), "dispersion.n_air"),
        k_s=opt("k_s"),
        k_air=opt("k_air"),
        k_vac=opt("k_vac"),
    )
    if preset == "toy" and out.k_s is None:
        raise ConfigError("dispersion.k_s is required for the toy preset.")
    return out


def _pump(d: Dict) -> PumpSection:
    d = _take("pump", d, {"sigma"})
    if "sigma" not in d:
        raise ConfigError("pump.sigma is required.")
    sigma = length(d["sigma"], "pump.sigma")
    if sigma <= 0:
        raise ConfigError("pump.sigma must be positive.")
    return PumpSection(sigma=sigma)


def _crystal(d: Dict) -> CrystalSection:
    d = _take("crystal", d, {"L1"})
    return CrystalSection(L1=length(d["L1"], "crystal.L1")) if "L1" in d else CrystalSection()


def _lattice(d: Dict) -> LatticeSection:
    d = _take("lattice", d, {"n", "theta_extent", "q_max", "rule"})
    base = LatticeSection()
    if "theta_extent" in d and "q_max" in d:
        raise ConfigError("Give either lattice.theta_extent or lattice.q_max, not both.")
    theta = angle(d["theta_extent"], "lattice.theta_extent") if "theta_extent" in d else None
    q_max = wavevector(d["q_max"], "lattice.q_max") if "q_max" in d else None
    if theta is None and q_max is None:
        theta = base.theta_extent
    return LatticeSection(
        n=count(d.get("n", base.n), "lattice.n", minimum=1),
        theta_extent=theta,
        q_max=q_max,
        rule=_choice(d.get("rule", base.rule), ("trapezoid", "uniform"), "lattice.rule"),
    )


def _kernel(d: Dict) -> KernelSection:
    d = _take("kernel", d, {"type"})
    return KernelSection(type=_choice(d.get("type", "pdc"), ("pdc", "diagonal"), "kernel.type"))


def _gain(d: Dict) -> GainSection:
    d = _take("gain", d, {"G1", "G2"})
    base = GainSection()
    g1 = number(d.get("G1", base.G1), "gain.G1")
    g2 = number(d.get("G2", g1), "gain.G2")
    if g1 < 0 or g2 < 0:
        raise ConfigError("Gains must be nonnegative.")
    return GainSection(G1=g1, G2=g2)


def _calibration(d: Dict) -> CalibrationSection:
    d = _take("calibration", d, {"A", "A_guess", "g_min", "g_max", "n_samples"})
    base = CalibrationSection()
    A = d.get("A", "calibrate")
    if A == "calibrate":
        A = None
    else:
        A = number(A, "calibration.A")
        if A <= 0:
            raise ConfigError("calibration.A must be positive.")
    guess = number(d["A_guess"], "calibration.A_guess") if "A_guess" in d else None
    out = CalibrationSection(
        A=A,
        A_guess=guess,
        g_min=number(d.get("g_min", base.g_min), "calibration.g_min"),
        g_max=number(d.get("g_max", base.g_max), "calibration.g_max"),
        n_samples=count(d.get("n_samples", base.n_samples), "calibration.n_samples", minimum=3),
    )
    if not (0 <= out.g_min < out.g_max):
        raise ConfigError("calibration.g_min must be below calibration.g_max.")
    return out


def _interferometer(d: Dict) -> InterferometerSection:
    d = _take(
        "interferometer", d,
        {"delta_z", "dz_min", "dz_max", "dz_samples", "phis", "n_phi_scan",
         "sweep_min", "sweep_max", "sweep_samples", "mode_pairs"},
    )
    base = InterferometerSection()
    dz = d.get("delta_z", "0 um")
    optimize = dz == "optimize"
    phis = d.get("phis", "fringes")
    if phis == "fringes":
        phis = None
    elif isinstance(phis, list):
        phis = tuple(angle(p, "interferometer.phis") for p in phis)
    else:
        raise ConfigError("interferometer.phis must be 'fringes' or a list of angles.")
    pairs = d.get("mode_pairs", [list(p) for p in base.mode_pairs])
    try:
        pairs = tuple((int(a), int(b)) for a, b in pairs)
    except (TypeError, ValueError) as exc:
        raise ConfigError("interferometer.mode_pairs must be a list of [row, col] pairs.") from exc
    dist = lambda key: length(d[key], f"interferometer.{key}") if key in d else getattr(base, key)
    out = InterferometerSection(
        delta_z=0.0 if optimize else length(dz, "interferometer.delta_z"),
        optimize=optimize,
        dz_min=dist("dz_min"),
        dz_max=dist("dz_max"),
        dz_samples=count(d.get("dz_samples", base.dz_samples), "interferometer.dz_samples", minimum=1),
        phis=phis,
        n_phi_scan=count(d.get("n_phi_scan", base.n_phi_scan), "interferometer.n_phi_scan", minimum=2),
        sweep_min=dist("sweep_min"),
        sweep_max=dist("sweep_max"),
        sweep_samples=count(d.get("sweep_samples", base.sweep_samples), "interferometer.sweep_samples", minimum=1),
        mode_pairs=pairs,
    )
    if out.dz_max < out.dz_min or out.sweep_max < out.sweep_min:
        raise ConfigError("delta_z ranges must be ordered.")
    return out


def _integrator(d: Dict) -> IntegratorSection:
    d = _take("integrator", d, {"method", "rtol", "atol", "n_steps", "node"})
    base = IntegratorSection()
    return IntegratorSection(
        method=_choice(d.get("method", base.method), ("rk45", "lie_euler"), "integrator.method"),
        rtol=number(d.get("rtol", base.rtol), "integrator.rtol"),
        atol=number(d.get("atol", base.atol), "integrator.atol"),
        n_steps=count(d.get("n_steps", base.n_steps), "integrator.n_steps", minimum=1),
        node=_choice(d.get("node", base.node), ("left", "midpoint"), "integrator.node"),
    )


def _decomposition(d: Dict) -> DecompositionSection:
    d = _take("decomposition", d, {"deg_tol"})
    return DecompositionSection(deg_tol=number(d.get("deg_tol", DecompositionSection.deg_tol), "decomposition.deg_tol"))


def _single_crystal(d: Dict) -> SingleCrystalSection:
    d = _take("single_crystal", d, {"gains", "modes", "n_report"})
    base = SingleCrystalSection()
    gains = d.get("gains", list(base.gains))
    if not isinstance(gains, list) or not gains:
        raise ConfigError("single_crystal.gains must be a nonempty list of numbers.")
    return SingleCrystalSection(
        gains=tuple(number(g, "single_crystal.gains") for g in gains),
        modes=tuple(count(m, "single_crystal.modes") for m in d.get("modes", list(base.modes))),
        n_report=count(d.get("n_report", base.n_report), "single_crystal.n_report", minimum=1),
    )


def _squeezing(d: Dict) -> SqueezingSection:
    d = _take("squeezing", d, {"n_report", "n_modes"})
    n_modes = count(d.get("n_modes", 0), "squeezing.n_modes")
    return SqueezingSection(
        n_report=count(d.get("n_report", SqueezingSection.n_report), "squeezing.n_report", minimum=1),
        n_modes=n_modes or None,
    )


def _asymmetry(d: Dict) -> AsymmetrySection:
    d = _take("asymmetry", d, {"gain", "order", "level"})
    base = AsymmetrySection()
    return AsymmetrySection(
        gain=number(d.get("gain", base.gain), "asymmetry.gain"),
        order=count(d.get("order", base.order), "asymmetry.order", minimum=1),
        level=number(d.get("level", base.level), "asymmetry.level"),
    )


_SECTIONS = {
    "run": _run,
    "dispersion": _dispersion,
    "pump": _pump,
    "crystal": _crystal,
    "lattice": _lattice,
    "kernel": _kernel,
    "gain": _gain,
    "calibration": _calibration,
    "interferometer": _interferometer,
    "integrator": _integrator,
    "decomposition": _decomposition,
    "single_crystal": _single_crystal,
    "squeezing": _squeezing,
    "asymmetry": _asymmetry,
}


# -------------------------
# Load / apply
# -------------------------
def config_from_dict(data: Dict[str, Any]) -> RunConfig:
    unknown = sorted(set(data) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"Unknown config sections: {', '.join(unknown)}.")
    return RunConfig(**{name: parse(data.get(name, {})) for name, parse in _SECTIONS.items()})


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)


def with_overrides(cfg: RunConfig, out: str | None = None, workers: int | None = None,
                   plots: bool | None = None, seed: int | None = None) -> RunConfig:
    run = cfg.run
    if seed is not None:
        run = replace(run, seed=int(seed))
    if plots is not None:
        run = replace(run, plots=bool(plots))
    if out is not None:
        run = replace(run, out=str(out))
    if workers is not None:
        run = replace(run, workers=int(workers))
    return replace(cfg, run=run)


def build_manifest(cfg: RunConfig) -> Dict[str, Any]:
    """Resolved config in SI units plus code version. Output paths are left out so reruns compare equal."""
    resolved = asdict(cfg)
    resolved["run"].pop("out", None)
    return {"version": tools.__version__, "config": resolved}


def config_hash(cfg: RunConfig) -> str:
    payload = json.dumps(build_manifest(cfg), sort_keys=True, default=list)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]
