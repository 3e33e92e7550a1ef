"""Closed-form references for the parametric amplifier."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TwoModeSolution:
    g: float
    gain: float  # G = cosh^2 g
    mean_photons: float  # sinh^2 g per mode, from vacuum input


def two_mode_gain(g: float) -> TwoModeSolution:
    if g < 0:
        raise ValueError("gain exponent must be >= 0")
    return TwoModeSolution(float(g), math.cosh(g) ** 2, math.sinh(g) ** 2)


def exponent_for_gain(gain: float) -> float:
    """Inverse of G = cosh^2 g."""
    if gain < 1:
        raise ValueError("intensity gain must be >= 1")
    return math.acosh(math.sqrt(gain))


def ideal_normalized_variance(g: float, efficiency: float) -> float:
    """1 - eta: twin beams seen through equal losses on large detectors."""
    if not 0 <= efficiency <= 1:
        raise ValueError("efficiency outside [0, 1]")
    return 1.0 - efficiency


def profile_fwhm(coords, values, baseline: float = 0.0) -> float:
    """Full width at half maximum of a single-peaked sampled profile.

    Half maximum is taken halfway between ``baseline`` and the peak.  Returns
    nan when the profile does not fall below it on both sides of the peak.
    """
    x = np.asarray(coords, dtype=float)
    v = np.asarray(values, dtype=float)
    c = int(np.argmax(v))
    if not v[c] > baseline:
        return math.nan
    half = baseline + 0.5 * (v[c] - baseline)
    below = v < half
    left = np.nonzero(below[:c])[0]
    right = np.nonzero(below[c:])[0]
    if left.size == 0 or right.size == 0:
        return math.nan
    l0 = left[-1]
    r0 = c + right[0]
    xl = x[l0] + (half - v[l0]) * (x[l0 + 1] - x[l0]) / (v[l0 + 1] - v[l0])
    xr = x[r0 - 1] + (half - v[r0 - 1]) * (x[r0] - x[r0 - 1]) / (v[r0] - v[r0 - 1])
    return float(xr - xl)


@dataclass(frozen=True)
class GainProfile:
    gain: np.ndarray
    fwhm_x: float
    fwhm_y: float

    @property
    def defined(self) -> bool:
        return math.isfinite(self.fwhm_x) and math.isfinite(self.fwhm_y)


def gain_profile(amplitude, coupling: float, length: float, x=None, y=None) -> GainProfile:
    """Local gain cosh^2(sigma A(r) L) and its FWHM through the peak.

    The width is that of the gain excess G - 1 (the amplified photon number
    from vacuum), i.e. half maximum is measured above the unamplified level
    G = 1.  ``amplitude`` is a 1-D or 2-D real map (axis 0 = x).  FWHM is in
    the units of ``x``/``y`` (sample index when omitted); nan when undefined,
    e.g. for zero gain.
    """
    a = np.abs(np.asarray(amplitude, dtype=float))
    gain = np.cosh(coupling * a * length) ** 2
    g2 = np.atleast_2d(gain.T).T if gain.ndim == 1 else gain
    ix, iy = np.unravel_index(int(np.argmax(g2)), g2.shape)
    x = np.arange(g2.shape[0]) if x is None else np.asarray(x)
    y = np.arange(g2.shape[1]) if y is None else np.asarray(y)
    fx = profile_fwhm(x, g2[:, iy], 1.0) if g2.shape[0] > 1 else math.nan
    fy = profile_fwhm(y, g2[ix, :], 1.0) if g2.shape[1] > 1 else math.nan
    return GainProfile(gain, fx, fy)
