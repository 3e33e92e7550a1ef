"""Split-step Fourier integration of the three-wave equations.

    da_s/dz = sigma a_p conj(a_i)
    da_i/dz = sigma a_p conj(a_s)
    da_p/dz = -sigma a_s a_i

Linear propagation (diffraction, walk-off, group delay, GVD) is applied as a
unit-modulus multiplier in (q_x, q_y, Omega) space; the coupling is applied
pointwise in (x, y, t).  Steps are composed in symmetric Strang order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .errors import ConfigurationError, StepSizeError
from .field import CrystalParams, FieldState, Grid, WaveDispersion, vacuum_noise

NONLINEAR_GUARD = 0.3
_AXES = (0, 1, 2)


@dataclass(frozen=True)
class SolverParams:
    nz: int = 64
    pump_dynamic: bool = False
    absorber: bool = True
    absorber_fraction: float = 0.1
    scheme: str = "strang"

    def __post_init__(self):
        if self.nz < 8:
            raise ConfigurationError(f"nz={self.nz} must be >= 8")
        if self.scheme != "strang":
            raise ConfigurationError(f"unsupported split-step scheme {self.scheme!r}")
        if not 0 < self.absorber_fraction < 0.5:
            raise ConfigurationError("absorber_fraction must lie in (0, 0.5)")


def wave_mismatch(disp: WaveDispersion, wavelength: float, qx, qy, omega,
                  walkoff_axis: str = "y"):
    """Second-order expansion D(q_x, q_y, Omega) of one wave's k_z [1/m]."""
    k = 2 * math.pi * disp.index / wavelength
    q_w = qy if walkoff_axis == "y" else qx
    return (-(qx**2 + qy**2) / (2 * k) - disp.walkoff * q_w
            + disp.group_delay * omega + 0.5 * disp.gvd * omega**2)


@dataclass(frozen=True)
class LinearOperators:
    """D_j sampled on the FFT grid for signal, idler and pump."""

    d_s: np.ndarray
    d_i: np.ndarray
    d_p: np.ndarray

    @classmethod
    def build(cls, grid: Grid, crystal: CrystalParams, pump_wavelength: float):
        qx = grid.qx()[:, None, None]
        qy = grid.qy()[None, :, None]
        om = grid.omega()[None, None, :]
        ls = 2 * pump_wavelength
        ax = crystal.walkoff_axis
        d_s = np.broadcast_to(wave_mismatch(crystal.signal, ls, qx, qy, om, ax), grid.shape)
        d_i = np.broadcast_to(wave_mismatch(crystal.idler, ls, qx, qy, om, ax), grid.shape)
        d_p = wave_mismatch(crystal.pump, pump_wavelength, qx, qy, om, ax) + crystal.delta_k
        d_p = np.broadcast_to(d_p, grid.shape)
        return cls(np.ascontiguousarray(d_s), np.ascontiguousarray(d_i),
                   np.ascontiguousarray(d_p))

    def multipliers(self, dz: float):
        return tuple(np.exp(1j * dz * d) for d in (self.d_s, self.d_i, self.d_p))


def _apply_multiplier(a: np.ndarray, mult: np.ndarray) -> np.ndarray:
    return sfft.ifftn(sfft.fftn(a, axes=_AXES) * mult, axes=_AXES)


def linear_step(state: FieldState, dz: float, ops: LinearOperators) -> FieldState:
    if not dz > 0:
        raise ValueError("dz must be positive")
    m_s, m_i, m_p = ops.multipliers(dz)
    a_p = state.a_p
    if np.any(a_p):
        a_p = _apply_multiplier(a_p, m_p)
    return state.replace(a_s=_apply_multiplier(state.a_s, m_s),
                         a_i=_apply_multiplier(state.a_i, m_i),
                         a_p=np.array(a_p), z=state.z + dz)


def _check_guard(a_p, coupling, dz):
    peak = coupling * float(np.max(np.abs(a_p))) * dz
    if peak >= NONLINEAR_GUARD:
        nz_hint = math.ceil(peak / NONLINEAR_GUARD)
        raise StepSizeError(
            f"sigma*|a_p|*dz = {peak:.3g} exceeds {NONLINEAR_GUARD}; "
            f"increase nz by at least a factor {nz_hint}")


def _coupling_frozen(a_s, a_i, a_p, coupling, dz):
    g = coupling * np.abs(a_p) * dz
    ch, sh = np.cosh(g), np.sinh(g)
    phase = np.exp(1j * np.angle(a_p))
    return ch * a_s + phase * sh * np.conj(a_i), ch * a_i + phase * sh * np.conj(a_s)


def _rhs(a_s, a_i, a_p, coupling):
    return (coupling * a_p * np.conj(a_i),
            coupling * a_p * np.conj(a_s),
            -coupling * a_s * a_i)


def _coupling_rk4(a_s, a_i, a_p, coupling, dz):
    k1 = _rhs(a_s, a_i, a_p, coupling)
    k2 = _rhs(*(a + 0.5 * dz * k for a, k in zip((a_s, a_i, a_p), k1)), coupling)
    k3 = _rhs(*(a + 0.5 * dz * k for a, k in zip((a_s, a_i, a_p), k2)), coupling)
    k4 = _rhs(*(a + dz * k for a, k in zip((a_s, a_i, a_p), k3)), coupling)
    return tuple(a + dz / 6 * (q1 + 2 * q2 + 2 * q3 + q4)
                 for a, q1, q2, q3, q4 in zip((a_s, a_i, a_p), k1, k2, k3, k4))


def nonlinear_step(state: FieldState, dz: float, coupling: float,
                   pump_dynamic: bool = False) -> FieldState:
    """Pointwise coupling over ``dz``.

    Frozen pump uses the exact cosh/sinh two-mode solution; the dynamic pump
    is advanced with RK4.
    """
    if not np.any(state.a_p) or coupling == 0:
        return state.replace(z=state.z + dz)
    _check_guard(state.a_p, coupling, dz)
    if pump_dynamic:
        a_s, a_i, a_p = _coupling_rk4(state.a_s, state.a_i, state.a_p, coupling, dz)
    else:
        a_s, a_i = _coupling_frozen(state.a_s, state.a_i, state.a_p, coupling, dz)
        a_p = np.array(state.a_p)
    return state.replace(a_s=a_s, a_i=a_i, a_p=a_p, z=state.z + dz)


def absorber_mask(grid: Grid, fraction: float = 0.1) -> np.ndarray:
    """Amplitude transmission, 1 inside and sin^2-tapered to 0 over the outer ``fraction``."""
    def taper(n):
        edge = max(1, int(round(fraction * n)))
        d = np.minimum(np.arange(n), np.arange(n)[::-1]).astype(float)
        return np.sin(0.5 * np.pi * np.minimum(d / edge, 1.0)) ** 2
    return taper(grid.nx)[:, None] * taper(grid.ny)[None, :]


class _Absorber:
    """Lossy border that refills vacuum, so Wigner statistics stay physical."""

    def __init__(self, grid: Grid, fraction: float):
        mask = np.broadcast_to(absorber_mask(grid, fraction)[:, :, None], grid.shape)
        self.where = mask < 1.0
        self.keep = mask[self.where]
        self.refill = np.sqrt(1.0 - self.keep**2)

    def __call__(self, a: np.ndarray, rng: np.random.Generator) -> None:
        noise = vacuum_noise(self.keep.shape, rng)
        a[self.where] = self.keep * a[self.where] + self.refill * noise


def propagate(state: FieldState, crystal: CrystalParams, solver: SolverParams,
              pump_wavelength: float, rng: np.random.Generator | None = None,
              ops: LinearOperators | None = None) -> FieldState:
    """Integrate from z = 0 to the crystal length."""
    if state.z != 0:
        raise ConfigurationError("propagate expects a state at z = 0")
    if solver.absorber and rng is None:
        raise ConfigurationError("absorbing border needs an rng stream for vacuum refill")
    if ops is None:
        ops = LinearOperators.build(state.grid, crystal, pump_wavelength)
    dz = crystal.length / solver.nz
    m_half = ops.multipliers(0.5 * dz)
    m_full = ops.multipliers(dz)
    absorb = _Absorber(state.grid, solver.absorber_fraction) if solver.absorber else None

    a_s, a_i, a_p = (np.array(a) for a in (state.a_s, state.a_i, state.a_p))
    pump_moves = bool(np.any(a_p)) and bool(np.any(ops.d_p))
    coupled = bool(np.any(a_p)) and crystal.coupling != 0

    def linear(mults):
        nonlocal a_s, a_i, a_p
        a_s = _apply_multiplier(a_s, mults[0])
        a_i = _apply_multiplier(a_i, mults[1])
        if pump_moves:
            a_p = _apply_multiplier(a_p, mults[2])

    if coupled:
        _check_guard(a_p, crystal.coupling, dz)
    linear(m_half)
    for step in range(solver.nz):
        if coupled:
            if solver.pump_dynamic:
                a_s, a_i, a_p = _coupling_rk4(a_s, a_i, a_p, crystal.coupling, dz)
            else:
                a_s, a_i = _coupling_frozen(a_s, a_i, a_p, crystal.coupling, dz)
        if absorb is not None:
            absorb(a_s, rng)
            absorb(a_i, rng)
        linear(m_half if step == solver.nz - 1 else m_full)
    return state.replace(a_s=a_s, a_i=a_i, a_p=a_p, z=crystal.length)
