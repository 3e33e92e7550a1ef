"""TOML configuration for simulations and experiment plans.

Schema (every table and key optional; unknown keys are rejected)::

    [grid]      nx, ny, nt, dt          # dx, dy follow from the detector
    [crystal]   length, coupling, theta_deg, phi_deg, walkoff_scale,
                walkoff_axis, delta_k, dispersion ("bbo" | "none")
    [pump]      wavelength, waist, duration
    [solver]    nz, pump_dynamic, absorber, absorber_fraction
    [detector]  focal_length, pixel_pitch, region = [x0, y0, w, h],
                efficiency, background_sigma, oversampling,
                mask_center, mask_bandwidth
    [plan]      gains | amplitudes | energies, shots, binning, seed,
                search_radius, background, misregistration = [dx, dy],
                spectral_mask, calibration_means, calibration_pixels,
                out_dir

Lengths are in metres, times in seconds, energies in joules.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .detection import DetectorModel, Region
from .errors import ConfigurationError
from .field import CrystalParams, Grid, PumpParams, WaveDispersion
from .materials import bbo_type2
from .propagation import SolverParams

DEFAULT_GAINS = (3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0, 6.5)


def no_dispersion() -> tuple[WaveDispersion, WaveDispersion, WaveDispersion]:
    """Huge indices and no walk-off/delay: diffraction-free, purely local gain."""
    return (WaveDispersion(1e9), WaveDispersion(1e9 + 1), WaveDispersion(1e9))


@dataclass(frozen=True)
class SimulationConfig:
    grid: Grid
    crystal: CrystalParams
    pump: PumpParams
    solver: SolverParams
    detector: DetectorModel

    @property
    def signal_wavelength(self) -> float:
        return self.pump.signal_wavelength

    def pump_for_gain(self, g: float) -> PumpParams:
        """Pump whose peak exponent sigma*A0*L equals ``g``."""
        if g < 0:
            raise ConfigurationError("gain exponent must be >= 0")
        a0 = g / (self.crystal.coupling * self.crystal.length)
        return replace(self.pump, peak_amplitude=a0, energy=None)

    def peak_exponent(self, pump: PumpParams | None = None) -> float:
        p = pump or self.pump
        return self.crystal.coupling * p.amplitude(self.grid) * self.crystal.length


def default_config(nx: int = 256, ny: int = 128, nt: int = 1, dt: float = 0.0,
                   dispersion: str = "bbo", **crystal_kw) -> SimulationConfig:
    """Desk-scale 2-D configuration with BBO type-II dispersion."""
    detector = DetectorModel()
    pump = PumpParams(peak_amplitude=0.0)
    grid = detector.matched_grid(nx, ny, pump.signal_wavelength, nt=nt, dt=dt)
    crystal = _make_crystal({"dispersion": dispersion, **crystal_kw}, pump.wavelength)
    return SimulationConfig(grid, crystal, pump, SolverParams(), detector)


@dataclass(frozen=True)
class ExperimentPlan:
    config: SimulationConfig
    amplitudes: tuple[float, ...]
    shots: int = 10
    binning: tuple[int, ...] = (1, 2, 4, 5, 8, 10, 20)
    seed: int = 0
    out_dir: str = "twinbeam_out"
    search_radius: int = 3
    background: bool = True
    misregistration: tuple[float, float] = (0.0, 0.0)
    spectral_mask: bool = False
    calibration_means: tuple[float, ...] = (0.0, 10.0, 100.0, 1000.0)
    calibration_pixels: tuple[int, int] = (40, 100)
    labels: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.shots < 1:
            raise ConfigurationError("shots must be >= 1")
        if not self.amplitudes:
            raise ConfigurationError("pump sweep is empty")
        if any(a < 0 for a in self.amplitudes):
            raise ConfigurationError("pump amplitudes must be >= 0")
        if any(n < 1 for n in self.binning):
            raise ConfigurationError("binning sizes must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must fit in an unsigned 64-bit integer")

    def pumps(self) -> list[PumpParams]:
        return [replace(self.config.pump, peak_amplitude=a, energy=None) for a in self.amplitudes]


# -- parsing ---------------------------------------------------------------

_KEYS = {
    "grid": {"nx", "ny", "nt", "dt"},
    "crystal": {"length", "coupling", "theta_deg", "phi_deg", "walkoff_scale",
                "walkoff_axis", "delta_k", "dispersion"},
    "pump": {"wavelength", "waist", "duration"},
    "solver": {"nz", "pump_dynamic", "absorber", "absorber_fraction"},
    "detector": {"focal_length", "pixel_pitch", "region", "efficiency", "background_sigma",
                 "oversampling", "mask_center", "mask_bandwidth"},
    "plan": {"gains", "amplitudes", "energies", "shots", "binning", "seed", "search_radius",
             "background", "misregistration", "spectral_mask", "calibration_means",
             "calibration_pixels", "out_dir"},
}


def _check_keys(doc: dict) -> None:
    for table, body in doc.items():
        if table not in _KEYS:
            raise ConfigurationError(f"unknown config table [{table}]")
        if not isinstance(body, dict):
            raise ConfigurationError(f"[{table}] must be a table")
        extra = set(body) - _KEYS[table]
        if extra:
            raise ConfigurationError(f"unknown key(s) in [{table}]: {', '.join(sorted(extra))}")


def _make_crystal(c: dict, pump_wavelength: float) -> CrystalParams:
    theta = float(c.get("theta_deg", 49.05))
    mode = c.get("dispersion", "bbo")
    if mode == "bbo":
        sig, idl, pmp, dk = bbo_type2(theta, pump_wavelength, float(c.get("walkoff_scale", 1.0)))
        dk = 0.0  # tuned to collinear phase matching unless delta_k is given
    elif mode == "none":
        sig, idl, pmp = no_dispersion()
        dk = 0.0
    else:
        raise ConfigurationError(f"unknown dispersion model {mode!r}")
    return CrystalParams(
        length=float(c.get("length", 4e-3)),
        coupling=float(c.get("coupling", 1.0)),
        signal=sig, idler=idl, pump=pmp,
        theta_deg=theta,
        phi_deg=float(c.get("phi_deg", 0.0)),
        delta_k=float(c.get("delta_k", dk)),
        walkoff_axis=str(c.get("walkoff_axis", "y")),
    )


def config_from_dict(doc: dict) -> SimulationConfig:
    _check_keys(doc)
    d = doc.get("detector", {})
    region = d.get("region", [-50, -20, 100, 40])
    if len(region) != 4:
        raise ConfigurationError("detector.region must be [x0, y0, width, height]")
    detector = DetectorModel(
        focal_length=float(d.get("focal_length", 0.10)),
        pixel_pitch=float(d.get("pixel_pitch", 20e-6)),
        region=Region(*(int(v) for v in region)),
        efficiency=float(d.get("efficiency", 0.75)),
        background_sigma=float(d.get("background_sigma", 7.0)),
        oversampling=int(d.get("oversampling", 2)),
        mask_center=d.get("mask_center"),
        mask_bandwidth=d.get("mask_bandwidth"),
    )
    p = doc.get("pump", {})
    pump = PumpParams(wavelength=float(p.get("wavelength", 352e-9)),
                      waist=float(p.get("waist", 1e-3)),
                      duration=float(p.get("duration", 1e-12)),
                      peak_amplitude=0.0)
    g = doc.get("grid", {})
    grid = detector.matched_grid(int(g.get("nx", 256)), int(g.get("ny", 128)),
                                 pump.signal_wavelength, nt=int(g.get("nt", 1)),
                                 dt=float(g.get("dt", 0.0)))
    crystal = _make_crystal(doc.get("crystal", {}), pump.wavelength)
    s = doc.get("solver", {})
    solver = SolverParams(nz=int(s.get("nz", 64)),
                          pump_dynamic=bool(s.get("pump_dynamic", False)),
                          absorber=bool(s.get("absorber", True)),
                          absorber_fraction=float(s.get("absorber_fraction", 0.1)))
    return SimulationConfig(grid, crystal, pump, solver, detector)


def plan_from_dict(doc: dict) -> ExperimentPlan:
    config = config_from_dict(doc)
    p = doc.get("plan", {})
    sweeps = [k for k in ("gains", "amplitudes", "energies") if k in p]
    if len(sweeps) > 1:
        raise ConfigurationError("give only one of plan.gains, plan.amplitudes, plan.energies")
    kind = sweeps[0] if sweeps else "gains"
    values = tuple(float(v) for v in p.get(kind, DEFAULT_GAINS))
    if kind == "gains":
        amps = tuple(config.pump_for_gain(v).peak_amplitude for v in values)
    elif kind == "amplitudes":
        amps = values
    else:
        amps = tuple(replace(config.pump, energy=v, peak_amplitude=None).amplitude(config.grid)
                     for v in values)
    mis = p.get("misregistration", [0.0, 0.0])
    if len(mis) != 2:
        raise ConfigurationError("plan.misregistration must be [dx, dy] in pixels")
    cal = p.get("calibration_pixels", [40, 100])
    return ExperimentPlan(
        config=config,
        amplitudes=amps,
        shots=int(p.get("shots", 10)),
        binning=tuple(int(n) for n in p.get("binning", (1, 2, 4, 5, 8, 10, 20))),
        seed=int(p.get("seed", 0)),
        out_dir=str(p.get("out_dir", "twinbeam_out")),
        search_radius=int(p.get("search_radius", 3)),
        background=bool(p.get("background", True)),
        misregistration=(float(mis[0]), float(mis[1])),
        spectral_mask=bool(p.get("spectral_mask", False)),
        calibration_means=tuple(float(v) for v in p.get("calibration_means",
                                                         (0.0, 10.0, 100.0, 1000.0))),
        calibration_pixels=(int(cal[0]), int(cal[1])),
        labels=values,
    )


def load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc


def load_plan(path=None) -> ExperimentPlan:
    return plan_from_dict(load_toml(path) if path else {})


def plan_to_dict(plan: ExperimentPlan) -> dict:
    """Snapshot for the run manifest (floats kept at full precision by json)."""
    c = plan.config
    return {
        "grid": {"nx": c.grid.nx, "ny": c.grid.ny, "nt": c.grid.nt, "dx": c.grid.dx,
                 "dy": c.grid.dy, "dt": c.grid.dt},
        "crystal": {"length": c.crystal.length, "coupling": c.crystal.coupling,
                    "theta_deg": c.crystal.theta_deg, "phi_deg": c.crystal.phi_deg,
                    "delta_k": c.crystal.delta_k, "walkoff_axis": c.crystal.walkoff_axis,
                    **{w: vars(getattr(c.crystal, w)) for w in ("signal", "idler", "pump")}},
        "pump": {"wavelength": c.pump.wavelength, "waist": _num(c.pump.waist),
                 "duration": _num(c.pump.duration)},
        "solver": vars(c.solver).copy(),
        "detector": {"focal_length": c.detector.focal_length,
                     "pixel_pitch": c.detector.pixel_pitch,
                     "region": list(vars(c.detector.region).values()),
                     "efficiency": c.detector.efficiency,
                     "background_sigma": c.detector.background_sigma,
                     "oversampling": c.detector.oversampling,
                     "mask_center": c.detector.mask_center,
                     "mask_bandwidth": c.detector.mask_bandwidth},
        "plan": {"amplitudes": list(plan.amplitudes), "labels": list(plan.labels),
                 "shots": plan.shots, "binning": list(plan.binning), "seed": plan.seed,
                 "search_radius": plan.search_radius, "background": plan.background,
                 "misregistration": list(plan.misregistration),
                 "spectral_mask": plan.spectral_mask,
                 "calibration_means": list(plan.calibration_means),
                 "calibration_pixels": list(plan.calibration_pixels)},
    }


def _num(v: float):
    return v if math.isfinite(v) else str(v)
