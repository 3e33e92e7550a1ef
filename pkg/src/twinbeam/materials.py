"""BBO dispersion data for the type-II (e -> o + e) degenerate interaction.

Sellmeier coefficients from Tamosauskas et al., Opt. Mater. Express 8, 1410
(2018); wavelengths in micrometres.
"""
from __future__ import annotations

import math

import numpy as np

from .field import C_LIGHT, WaveDispersion


def n_ordinary(wavelength):
    x2 = (np.asarray(wavelength) * 1e6) ** 2
    return np.sqrt(1 + 0.90291 / (1 - 0.003926 / x2) + 0.83155 / (1 - 0.018786 / x2)
                   + 0.76536 / (1 - 60.01 / x2))


def n_extraordinary(wavelength):
    x2 = (np.asarray(wavelength) * 1e6) ** 2
    return np.sqrt(1 + 1.151075 / (1 - 0.007142 / x2) + 0.21803 / (1 - 0.02259 / x2)
                   + 0.656 / (1 - 263 / x2))


def n_theta(wavelength, theta):
    """Extraordinary index at angle theta [rad] to the optic axis."""
    no, ne = n_ordinary(wavelength), n_extraordinary(wavelength)
    return 1 / np.sqrt(np.cos(theta) ** 2 / no**2 + np.sin(theta) ** 2 / ne**2)


def walkoff_angle(wavelength, theta) -> float:
    no, ne = n_ordinary(wavelength), n_extraordinary(wavelength)
    n = n_theta(wavelength, theta)
    return float(np.arctan(0.5 * n**2 * (1 / no**2 - 1 / ne**2) * np.sin(2 * theta)))


def _k_derivatives(index_fn, wavelength, rel_step=2e-3):
    """k, dk/domega, d2k/domega2 at the given vacuum wavelength (central differences)."""
    w0 = 2 * math.pi * C_LIGHT / wavelength
    h = rel_step * w0
    ws = np.array([w0 - h, w0, w0 + h])
    ks = index_fn(2 * math.pi * C_LIGHT / ws) * ws / C_LIGHT
    k1 = (ks[2] - ks[0]) / (2 * h)
    k2 = (ks[2] - 2 * ks[1] + ks[0]) / h**2
    return float(ks[1]), float(k1), float(k2)


def bbo_type2(theta_deg: float = 49.05, pump_wavelength: float = 352e-9,
              walkoff_scale: float = 1.0):
    """Signal (o), idler (e) and pump (e) dispersion plus collinear mismatch.

    Group delays are referred to the pump group velocity.  ``walkoff_scale``
    multiplies every walk-off angle (0 switches walk-off off).

    Returns (signal, idler, pump, delta_k).
    """
    theta = math.radians(theta_deg)
    ls = 2 * pump_wavelength
    ks, k1s, k2s = _k_derivatives(n_ordinary, ls)
    ki, k1i, k2i = _k_derivatives(lambda lam: n_theta(lam, theta), ls)
    kp, k1p, k2p = _k_derivatives(lambda lam: n_theta(lam, theta), pump_wavelength)
    signal = WaveDispersion(float(n_ordinary(ls)), k1s - k1p, k2s, 0.0)
    idler = WaveDispersion(float(n_theta(ls, theta)), k1i - k1p, k2i,
                           walkoff_scale * walkoff_angle(ls, theta))
    pump = WaveDispersion(float(n_theta(pump_wavelength, theta)), 0.0, k2p,
                          walkoff_scale * walkoff_angle(pump_wavelength, theta))
    return signal, idler, pump, kp - ks - ki
