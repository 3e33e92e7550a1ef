"""From crystal-output fields to CCD photoelectron maps.

A pixel collects ``oversampling x oversampling`` far-field grid modes (and
every temporal sample).  Detected counts are Wigner intensities with the
symmetric-ordering half photon removed per mode; shot noise is already
carried by the sampled vacuum, so no Poisson draw is made for PDC light.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from .errors import ConfigurationError, GeometryError
from .field import C_LIGHT, FieldState, Grid, vacuum_noise

_XY = (0, 1)


@dataclass(frozen=True)
class Region:
    """Pixel box; offsets are in pixels relative to the far-field centre pixel."""

    x0: int
    y0: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise GeometryError("region must be at least one pixel")


@dataclass(frozen=True)
class DetectorModel:
    focal_length: float = 0.10
    pixel_pitch: float = 20e-6
    region: Region = Region(-50, -20, 100, 40)
    efficiency: float = 0.75
    background_sigma: float = 7.0
    oversampling: int = 2
    mask_center: float | None = None
    mask_bandwidth: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ConfigurationError(f"efficiency {self.efficiency} outside [0, 1]")
        if self.background_sigma < 0:
            raise ConfigurationError("background_sigma must be >= 0")
        if self.oversampling < 1:
            raise ConfigurationError("oversampling must be >= 1")
        if not (self.focal_length > 0 and self.pixel_pitch > 0):
            raise ConfigurationError("focal length and pixel pitch must be positive")

    @property
    def idler_region(self) -> Region:
        """Point reflection of the signal box through the far-field centre."""
        r = self.region
        return Region(-r.x0 - r.width, -r.y0 - r.height, r.width, r.height)

    def matched_grid(self, nx: int, ny: int, wavelength: float, nt: int = 1,
                     dt: float = 0.0) -> Grid:
        """Grid whose far-field step is pixel_pitch / oversampling."""
        window = self.oversampling * wavelength * self.focal_length / self.pixel_pitch
        return Grid(nx, ny, nt, window / nx, window / ny, dt)

    def check_grid(self, grid: Grid, wavelength: float, rtol: float = 0.02) -> None:
        for width in (grid.width_x, grid.width_y):
            step = wavelength * self.focal_length / width
            if abs(step * self.oversampling - self.pixel_pitch) > rtol * self.pixel_pitch:
                raise GeometryError(
                    f"far-field step {step:.3g} m x {self.oversampling} does not match "
                    f"pixel pitch {self.pixel_pitch:.3g} m")


@dataclass(frozen=True)
class PeMap:
    """Photoelectron counts for one detection region, rows = y, columns = x.

    ``ordering_variance`` is the per-pixel variance excess that the Wigner
    estimator carries (1/4 per summed mode); zero for real or Poisson data.
    """

    counts: np.ndarray
    pixel_pitch: float = 20e-6
    shot_id: str = ""
    region_id: str = ""
    ordering_variance: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.counts.ndim != 2:
            raise GeometryError("PeMap counts must be 2-D")
        if not np.all(np.isfinite(self.counts)):
            raise ValueError("PeMap counts must be finite")

    @property
    def shape(self):
        return self.counts.shape

    def with_counts(self, counts, **changes) -> "PeMap":
        return replace(self, counts=np.asarray(counts, dtype=float), **changes)


def far_field_coordinates(grid: Grid, focal_length: float, wavelength: float):
    """Focal-plane positions x' = f q / k0 of the centred far-field samples."""
    k0 = 2 * math.pi / wavelength
    qx = 2 * math.pi * (np.arange(grid.nx) - grid.nx // 2) / grid.width_x
    qy = 2 * math.pi * (np.arange(grid.ny) - grid.ny // 2) / grid.width_y
    return focal_length * qx / k0, focal_length * qy / k0


def _ff(a):
    return sfft.fftshift(sfft.fftn(sfft.ifftshift(a, axes=_XY), axes=_XY, norm="ortho"), axes=_XY)


def _iff(a):
    return sfft.fftshift(sfft.ifftn(sfft.ifftshift(a, axes=_XY), axes=_XY, norm="ortho"), axes=_XY)


def to_far_field(state: FieldState, focal_length: float, wavelength: float) -> FieldState:
    """Unitary lens transform of every wave and time slice."""
    xf, yf = far_field_coordinates(state.grid, focal_length, wavelength)
    meta = dict(state.meta, focal_length=focal_length, wavelength=wavelength,
                far_dx=float(xf[1] - xf[0]), far_dy=float(yf[1] - yf[0]))
    return state.replace(a_s=_ff(state.a_s), a_i=_ff(state.a_i), a_p=_ff(state.a_p),
                         domain="far", meta=meta)


def apply_loss(state: FieldState, efficiency: float, rng: np.random.Generator) -> FieldState:
    """Beam-splitter loss with fresh vacuum in the open port, per arm."""
    if not 0.0 <= efficiency <= 1.0:
        raise ConfigurationError(f"efficiency {efficiency} outside [0, 1]")
    if efficiency == 1.0:
        return state
    t, r = math.sqrt(efficiency), math.sqrt(1.0 - efficiency)
    shape = state.grid.shape
    a_s = t * state.a_s + r * vacuum_noise(shape, rng)
    a_i = t * state.a_i + r * vacuum_noise(shape, rng)
    return state.replace(a_s=a_s, a_i=a_i)


def spectral_mask(state: FieldState, center: float, bandwidth: float,
                  carrier: float | None = None,
                  rng: np.random.Generator | None = None) -> FieldState:
    """Hard band-pass of width ``bandwidth`` [m] around ``center`` [m].

    Blocked temporal-frequency bins are zeroed, or refilled with vacuum when
    an rng is given (a filter is a loss channel for Wigner samples).
    ``carrier`` defaults to the degenerate signal wavelength in state.meta or
    to ``center``.
    """
    grid = state.grid
    if grid.nt == 1:
        warnings.warn("spectral mask ignored: no temporal axis (nt == 1)", stacklevel=2)
        return state
    carrier = carrier or state.meta.get("wavelength", center)
    w_carrier = 2 * math.pi * C_LIGHT / carrier
    w_center = 2 * math.pi * C_LIGHT / center
    half = math.pi * C_LIGHT * bandwidth / center**2
    omega = w_carrier + grid.omega()
    passband = np.abs(omega - w_center) <= half
    if passband.all():
        return state
    blocked = ~passband

    def filt(a):
        spec = sfft.fft(a, axis=2, norm="ortho")
        if rng is None:
            spec[:, :, blocked] = 0.0
        else:
            spec[:, :, blocked] = vacuum_noise(spec[:, :, blocked].shape, rng)
        return sfft.ifft(spec, axis=2, norm="ortho")

    return state.replace(a_s=filt(state.a_s), a_i=filt(state.a_i))


def _reflect_xy(a: np.ndarray) -> np.ndarray:
    """a(-x', -y') on a centred grid (centre index n // 2)."""
    return np.roll(np.roll(a[::-1, ::-1], 1, axis=0), 1, axis=1)


def detect_pixels(state: FieldState, detector: DetectorModel, region: str = "signal",
                  shot_id: str = "") -> PeMap:
    """Integrate ordering-corrected intensity over the pixels of a region.

    The idler map is returned in its natural CCD orientation (the point
    reflection of the signal box); pixel (r, c) of the signal box pairs with
    pixel (H-1-r, W-1-c) of the idler map.
    """
    if region not in ("signal", "idler"):
        raise ValueError(f"unknown region {region!r}")
    grid = state.grid
    a = state.a_s if region == "signal" else state.a_i
    intensity = (np.abs(a) ** 2 - 0.5).sum(axis=2)
    if region == "idler":
        intensity = _reflect_xy(intensity)
    box = detector.region
    m = detector.oversampling
    i0 = grid.nx // 2 + box.x0 * m
    j0 = grid.ny // 2 + box.y0 * m
    i1, j1 = i0 + box.width * m, j0 + box.height * m
    if i0 < 0 or j0 < 0 or i1 > grid.nx or j1 > grid.ny:
        raise GeometryError(f"{region} region {box} falls outside the far-field grid")
    block = intensity[i0:i1, j0:j1].reshape(box.width, m, box.height, m).sum(axis=(1, 3))
    counts = block.T
    if region == "idler":
        counts = counts[::-1, ::-1]
    return PeMap(np.ascontiguousarray(counts), detector.pixel_pitch, shot_id, region,
                 ordering_variance=0.25 * m * m * grid.nt)


def add_background(pe: PeMap, sigma_b: float, rng: np.random.Generator) -> PeMap:
    if sigma_b < 0:
        raise ConfigurationError("sigma_b must be >= 0")
    if sigma_b == 0:
        return pe
    return pe.with_counts(pe.counts + sigma_b * rng.standard_normal(pe.shape))


def bin_pixels(pe: PeMap, n: int) -> PeMap:
    """Non-overlapping n x n sums; trailing rows/columns that do not fill a block are dropped."""
    if n < 1:
        raise ValueError("bin size must be >= 1")
    if n == 1:
        return pe
    h, w = pe.shape
    hb, wb = h // n, w // n
    if hb == 0 or wb == 0:
        raise GeometryError(f"bin size {n} exceeds map shape {pe.shape}")
    c = pe.counts[:hb * n, :wb * n].reshape(hb, n, wb, n).sum(axis=(1, 3))
    return pe.with_counts(c, pixel_pitch=pe.pixel_pitch * n,
                          ordering_variance=pe.ordering_variance * n * n)


def coherent_source(mean_map, rng: np.random.Generator, pixel_pitch: float = 20e-6,
                    shot_id: str = "") -> tuple[PeMap, PeMap]:
    """Poissonian signal/idler maps with equal per-pixel means (SNL calibration).

    The idler map is laid out like ``detect_pixels`` output, i.e. point
    reflected, so symmetric pairs see the same mean.
    """
    mean = np.asarray(mean_map, dtype=float)
    if np.any(mean < 0):
        raise ValueError("mean counts must be non-negative")
    s = rng.poisson(mean).astype(float)
    i = rng.poisson(mean[::-1, ::-1]).astype(float)
    return (PeMap(s, pixel_pitch, shot_id, "signal"),
            PeMap(i, pixel_pitch, shot_id, "idler"))


def _phase_ramp(shape, dx, dy):
    ky = sfft.fftfreq(shape[0])[:, None]
    kx = sfft.fftfreq(shape[1])[None, :]
    return np.exp(-2j * np.pi * (kx * dx + ky * dy))


def subpixel_shift(obj, dx: float, dy: float, wave: str = "idler", oversampling: int = 1):
    """Translate by (dx, dy) pixels with a Fourier phase ramp (circular).

    Accepts a 2-D array (rows y, columns x), a PeMap, or a far-field
    FieldState; for a FieldState only ``wave`` ("signal", "idler" or "both")
    is moved and the shift is given in detector pixels of ``oversampling``
    grid modes each.
    """
    if dx == 0 and dy == 0:
        return obj
    if isinstance(obj, PeMap):
        return obj.with_counts(subpixel_shift(obj.counts, dx, dy))
    if isinstance(obj, FieldState):
        if obj.domain != "far":
            raise ValueError("subpixel_shift expects a far-field state")
        sx, sy = dx * oversampling, dy * oversampling
        ramp = _phase_ramp((obj.grid.ny, obj.grid.nx), sx, sy).T[:, :, None]

        def move(a):
            return sfft.ifftn(sfft.fftn(a, axes=_XY) * ramp, axes=_XY)

        changes = {}
        if wave in ("signal", "both"):
            changes["a_s"] = move(obj.a_s)
        if wave in ("idler", "both"):
            changes["a_i"] = move(obj.a_i)
        if not changes:
            raise ValueError(f"unknown wave {wave!r}")
        return obj.replace(**changes)
    a = np.asarray(obj)
    out = sfft.ifft2(sfft.fft2(a) * _phase_ramp(a.shape, dx, dy))
    return out.real if np.isrealobj(a) else out


# -- serialisation ---------------------------------------------------------

def save_pemap_text(pe: PeMap, path) -> Path:
    path = Path(path)
    np.savetxt(path, pe.counts, fmt="%.17g")
    return path


def load_pemap_text(path, **kw) -> PeMap:
    return PeMap(np.atleast_2d(np.loadtxt(path, dtype=float)), **kw)


def save_pemap_pgm(pe: PeMap, path) -> tuple[Path, Path]:
    """16-bit binary PGM plus a sidecar '<name>.scale.txt'.

    counts = offset + scale * pixel_value.
    """
    path = Path(path)
    lo, hi = float(pe.counts.min()), float(pe.counts.max())
    scale = (hi - lo) / 65535.0 if hi > lo else 1.0
    values = np.round((pe.counts - lo) / scale).astype(">u2")
    h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(values.tobytes())
    sidecar = path.with_suffix(".scale.txt")
    sidecar.write_text(f"offset {lo!r}\nscale {scale!r}\n")
    return path, sidecar


def load_pemap_pgm(path) -> PeMap:
    path = Path(path)
    raw = path.read_bytes()
    header = raw.split(b"\n", 3)
    w, h = (int(v) for v in header[1].split())
    values = np.frombuffer(header[3], dtype=">u2").reshape(h, w).astype(float)
    params = dict(line.split() for line in path.with_suffix(".scale.txt").read_text().splitlines())
    return PeMap(float(params["offset"]) + float(params["scale"]) * values)
