"""Grids, crystal/pump parameters and initial fields.

Fields are stored in photon-amplitude units: for every grid cell (one mode of
the discretised problem) ``|a|**2`` is a photon number.  Signal and idler are
sampled in the truncated Wigner representation, so an empty mode carries
half a photon of symmetric-ordering noise.
"""
from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ResolutionError

C_LIGHT = 299792458.0
H_PLANCK = 6.62607015e-34

FOUR_LN2 = 4.0 * math.log(2.0)


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Transverse (x, y) and temporal (t) sampling.

    ``nt == 1`` selects the monochromatic reduction; ``dt`` is then ignored.
    Arrays built on this grid have shape ``(nx, ny, nt)`` and are centred, i.e.
    x = 0 sits at index ``nx // 2``.
    """

    nx: int
    ny: int
    nt: int = 1
    dx: float = 27.5e-6
    dy: float = 55.0e-6
    dt: float = 0.0

    def __post_init__(self):
        for name in ("nx", "ny", "nt"):
            n = getattr(self, name)
            if not isinstance(n, (int, np.integer)) or not _is_pow2(int(n)):
                raise ConfigurationError(f"{name}={n!r} must be a positive power of two")
        if not (self.dx > 0 and self.dy > 0):
            raise ConfigurationError("dx and dy must be positive")
        if self.nt > 1 and not self.dt > 0:
            raise ConfigurationError("dt must be positive when nt > 1")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nt)

    @property
    def n_modes(self) -> int:
        return self.nx * self.ny * self.nt

    @property
    def width_x(self) -> float:
        return self.nx * self.dx

    @property
    def width_y(self) -> float:
        return self.ny * self.dy

    def x(self) -> np.ndarray:
        return (np.arange(self.nx) - self.nx // 2) * self.dx

    def y(self) -> np.ndarray:
        return (np.arange(self.ny) - self.ny // 2) * self.dy

    def t(self) -> np.ndarray:
        if self.nt == 1:
            return np.zeros(1)
        return (np.arange(self.nt) - self.nt // 2) * self.dt

    def qx(self) -> np.ndarray:
        """Transverse wavevectors in FFT order [rad/m]."""
        return 2 * np.pi * np.fft.fftfreq(self.nx, self.dx)

    def qy(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.ny, self.dy)

    def omega(self) -> np.ndarray:
        """Optical frequency detuning in FFT order [rad/s].

        Sign follows the optical convention exp(-i*Omega*t), which is the
        opposite of numpy's transform kernel.
        """
        if self.nt == 1:
            return np.zeros(1)
        return -2 * np.pi * np.fft.fftfreq(self.nt, self.dt)


@dataclass(frozen=True)
class WaveDispersion:
    """Second-order expansion data for one wave.

    group_delay is 1/v_g - 1/v_ref [s/m] in the frame moving with the
    reference group velocity; gvd is d2k/domega2 [s^2/m]; walkoff is the
    Poynting-vector angle in the x-z plane [rad].
    """

    index: float
    group_delay: float = 0.0
    gvd: float = 0.0
    walkoff: float = 0.0

    def __post_init__(self):
        if not self.index > 1.0:
            raise ConfigurationError(f"refractive index {self.index} must exceed 1")


@dataclass(frozen=True)
class CrystalParams:
    length: float
    coupling: float
    signal: WaveDispersion
    idler: WaveDispersion
    pump: WaveDispersion
    theta_deg: float = 49.05
    phi_deg: float = 0.0
    delta_k: float = 0.0  # collinear k_p - k_s - k_i [1/m]
    walkoff_axis: str = "y"  # transverse axis of the extraordinary polarisation

    def __post_init__(self):
        if self.walkoff_axis not in ("x", "y"):
            raise ConfigurationError(f"walkoff_axis must be 'x' or 'y', got {self.walkoff_axis!r}")
        if not self.length > 0:
            raise ConfigurationError("crystal length must be positive")
        if self.coupling < 0:
            raise ConfigurationError("coupling must be non-negative")
        if self.signal == self.idler:
            # type II: orthogonal polarisations never share dispersion data
            raise ConfigurationError("signal and idler dispersion must differ (type II)")


@dataclass(frozen=True)
class PumpParams:
    wavelength: float = 352e-9
    waist: float = 1.0e-3  # intensity FWHM; math.inf gives a plane wave
    duration: float = 1.0e-12  # intensity FWHM; math.inf gives CW
    peak_amplitude: float | None = None
    energy: float | None = None

    def __post_init__(self):
        if not (self.wavelength > 0 and self.waist > 0 and self.duration > 0):
            raise ConfigurationError("pump wavelength, waist and duration must be positive")
        if self.peak_amplitude is None and self.energy is None:
            raise ConfigurationError("pump needs peak_amplitude or energy")
        if self.peak_amplitude is not None and self.peak_amplitude < 0:
            raise ConfigurationError("peak_amplitude must be >= 0")
        if self.energy is not None and self.energy < 0:
            raise ConfigurationError("pump energy must be >= 0")

    @property
    def signal_wavelength(self) -> float:
        return 2.0 * self.wavelength

    def amplitude(self, grid: Grid) -> float:
        if self.peak_amplitude is not None:
            return float(self.peak_amplitude)
        return pump_amplitude_from_energy(self, grid)


@dataclass(frozen=True)
class FieldState:
    """Signal, idler and pump envelopes at distance ``z``.

    ``domain`` is "near" inside/at the exit of the crystal and "far" after the
    lens transform.  Arrays are made read-only on construction.
    """

    a_s: np.ndarray
    a_i: np.ndarray
    a_p: np.ndarray
    grid: Grid
    z: float = 0.0
    domain: str = "near"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("a_s", "a_i", "a_p"):
            arr = getattr(self, name)
            if arr.shape != self.grid.shape:
                raise ConfigurationError(
                    f"{name} has shape {arr.shape}, grid is {self.grid.shape}")
            arr.setflags(write=False)
        if self.z < 0:
            raise ConfigurationError("z must be non-negative")

    def replace(self, **changes) -> "FieldState":
        return dataclasses.replace(self, **changes)


def vacuum_noise(shape, rng: np.random.Generator) -> np.ndarray:
    """Complex Gaussian with <|a|^2> = 1/2 (each quadrature variance 1/4)."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return 0.5 * (re + 1j * im)


def init_vacuum(grid: Grid, rng: np.random.Generator) -> FieldState:
    """Wigner vacuum for signal and idler; pump left at zero."""
    a_s = vacuum_noise(grid.shape, rng)
    a_i = vacuum_noise(grid.shape, rng)
    a_p = np.zeros(grid.shape, dtype=complex)
    return FieldState(a_s, a_i, a_p, grid, z=0.0)


def check_pump_resolution(params: PumpParams, grid: Grid) -> None:
    if math.isfinite(params.waist):
        if params.waist < 4 * grid.dx or params.waist < 4 * grid.dy:
            raise ResolutionError(
                f"pump waist {params.waist:g} m spans fewer than 4 grid steps")
        if grid.width_x <= 4 * params.waist or grid.width_y <= 4 * params.waist:
            raise ConfigurationError(
                "transverse window must exceed 4x the pump waist "
                f"({grid.width_x:g} x {grid.width_y:g} m vs waist {params.waist:g} m)")
    if grid.nt > 1 and math.isfinite(params.duration) and params.duration < 4 * grid.dt:
        raise ResolutionError(
            f"pump duration {params.duration:g} s spans fewer than 4 time steps")


def make_pump(params: PumpParams, grid: Grid) -> np.ndarray:
    """Gaussian pump A0*exp(-2 ln2 (x^2+y^2)/w0^2)*exp(-2 ln2 t^2/tau^2)."""
    check_pump_resolution(params, grid)
    a0 = params.amplitude(grid)
    x, y, t = grid.x(), grid.y(), grid.t()
    if math.isfinite(params.waist):
        fx = np.exp(-0.5 * FOUR_LN2 * x**2 / params.waist**2)
        fy = np.exp(-0.5 * FOUR_LN2 * y**2 / params.waist**2)
    else:
        fx, fy = np.ones_like(x), np.ones_like(y)
    if grid.nt > 1 and math.isfinite(params.duration):
        ft = np.exp(-0.5 * FOUR_LN2 * t**2 / params.duration**2)
    else:
        ft = np.ones_like(t)
    return (a0 * fx[:, None, None] * fy[None, :, None] * ft[None, None, :]).astype(complex)


def gaussian_photon_sum(params: PumpParams, grid: Grid) -> float:
    """Closed form of sum |A_p|^2 over the grid for unit peak amplitude."""
    if not math.isfinite(params.waist):
        raise ConfigurationError("energy calibration needs a finite pump waist")
    spatial = math.pi * params.waist**2 / FOUR_LN2 / (grid.dx * grid.dy)
    if grid.nt > 1:
        if not math.isfinite(params.duration):
            raise ConfigurationError("energy calibration needs a finite pulse duration")
        temporal = params.duration * math.sqrt(math.pi / FOUR_LN2) / grid.dt
    else:
        temporal = 1.0  # CW reduction: a single temporal mode carries the pulse
    return spatial * temporal


def pump_amplitude_from_energy(params: PumpParams, grid: Grid) -> float:
    """Peak amplitude whose pulse holds energy/(h c / lambda_p) photons."""
    if params.energy is None:
        raise ConfigurationError("pump energy not set")
    photons = params.energy * params.wavelength / (H_PLANCK * C_LIGHT)
    return math.sqrt(photons / gaussian_photon_sum(params, grid))


def shot_seed(master_seed: int, amplitude_index: int, shot_index: int) -> int:
    """64-bit seed for one shot.

    First 8 bytes (little endian) of SHA-256 over the ASCII string
    "<master>:<amplitude_index>:<shot_index>".  Independent of platform and of
    the order in which shots are executed.
    """
    key = f"{int(master_seed)}:{int(amplitude_index)}:{int(shot_index)}".encode("ascii")
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


def shot_rng(master_seed: int, amplitude_index: int, shot_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(shot_seed(master_seed, amplitude_index, shot_index)))


STREAM_NAMES = ("vacuum", "absorber", "mask", "loss", "background")


def shot_streams(master_seed: int, amplitude_index: int, shot_index: int) -> dict:
    """Independent generators for each stochastic stage of one shot.

    Children of ``SeedSequence(shot_seed(...))`` in STREAM_NAMES order, so
    switching a stage on or off (or changing nz) leaves the others' draws
    untouched.
    """
    root = np.random.SeedSequence(shot_seed(master_seed, amplitude_index, shot_index))
    return {name: np.random.Generator(np.random.PCG64(child))
            for name, child in zip(STREAM_NAMES, root.spawn(len(STREAM_NAMES)))}
