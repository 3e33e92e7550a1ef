"""Single-shot spatial statistics over symmetric signal/idler pixel pairs.

All averages are spatial averages within one shot, with population (1/K)
normalisation.  Maps follow the ``detect_pixels`` layout: signal pixel
(r, c) pairs with idler pixel (H-1-r, W-1-c).  A shift (dx, dy) moves the
pairing partner to the mirrored idler pixel at (r + dy, c + dx).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .detection import PeMap, bin_pixels
from .errors import GeometryError, StatisticsError, UndefinedCorrelationError


def _counts(m):
    return m.counts if isinstance(m, PeMap) else np.asarray(m, dtype=float)


def _ordering(m):
    return m.ordering_variance if isinstance(m, PeMap) else 0.0


def aligned_maps(s_map, i_map, shift=(0, 0)):
    """Overlapping signal block and mirrored idler block for a given shift."""
    s, i = _counts(s_map), _counts(i_map)
    if s.shape != i.shape:
        raise GeometryError(f"signal {s.shape} and idler {i.shape} maps differ in shape")
    im = i[::-1, ::-1]
    dx, dy = (int(v) for v in shift)
    h, w = s.shape
    r0, r1 = max(0, -dy), min(h, h - dy)
    c0, c1 = max(0, -dx), min(w, w - dx)
    if r1 <= r0 or c1 <= c0:
        return s[:0, :0], im[:0, :0]
    return s[r0:r1, c0:c1], im[r0 + dy:r1 + dy, c0 + dx:c1 + dx]


@dataclass(frozen=True)
class PairEnsemble:
    n_s: np.ndarray
    n_i: np.ndarray
    center: tuple[int, int] = (0, 0)
    geometry: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.n_s.shape != self.n_i.shape or self.n_s.ndim != 1:
            raise StatisticsError("pair arrays must be 1-D and of equal length")

    def __len__(self):
        return self.n_s.size

    @classmethod
    def from_maps(cls, s_map, i_map, shift=(0, 0)) -> "PairEnsemble":
        s, i = aligned_maps(s_map, i_map, shift)
        return cls(s.ravel().copy(), i.ravel().copy(), tuple(int(v) for v in shift),
                   _counts(s_map).shape)


def pair_difference_variance(ens: PairEnsemble) -> float:
    """<(n_s - n_i)^2> - <n_s - n_i>^2 over the pairs."""
    if len(ens) < 2:
        raise StatisticsError(f"need at least 2 pairs, got {len(ens)}")
    d = ens.n_s - ens.n_i
    return float(np.mean(d * d) - np.mean(d) ** 2)


def shot_noise_level(ens: PairEnsemble) -> float:
    if len(ens) < 1:
        raise StatisticsError("empty ensemble")
    return float(np.mean(ens.n_s + ens.n_i))


def normalize(variance: float, snl: float) -> float:
    if not snl > 0:
        raise StatisticsError(f"shot-noise level {snl} is not positive")
    return variance / snl


def _normalize_or_nan(variance: float, snl: float) -> float:
    # faint, background-corrected shots can have a non-positive mean; keep the row
    return variance / snl if snl > 0 else math.nan


def normalized_variance(ens: PairEnsemble) -> float:
    return normalize(pair_difference_variance(ens), shot_noise_level(ens))


def background_correct(measured_variance: float, sigma_b: float) -> float:
    """Remove two independent background contributions; the result may be negative."""
    if sigma_b < 0:
        raise ValueError("sigma_b must be >= 0")
    return measured_variance - 2.0 * sigma_b**2


def ordering_correct(measured_variance: float, ordering_s: float, ordering_i: float) -> float:
    """Remove the Wigner symmetric-ordering excess (1/4 per summed mode, per arm)."""
    return measured_variance - ordering_s - ordering_i


def cross_correlation_degree(s_map, i_map, shift=(0, 0)) -> float:
    """Pearson correlation between signal pixels and mirrored, shifted idler pixels."""
    s, i = aligned_maps(s_map, i_map, shift)
    if s.size < 2:
        raise GeometryError(f"maps overlap on {s.size} pixels at shift {shift}")
    s = s.ravel()
    i = i.ravel()
    ds, di = s - s.mean(), i - i.mean()
    vs, vi = float(np.mean(ds * ds)), float(np.mean(di * di))
    if vs <= 0 or vi <= 0:
        raise UndefinedCorrelationError("zero variance in a map")
    gamma = float(np.mean(ds * di)) / math.sqrt(vs * vi)
    return max(-1.0, min(1.0, gamma))


def correlation_map(s_map, i_map, max_shift: int) -> np.ndarray:
    """gamma on the integer shift lattice; entry [dy + R, dx + R]."""
    r = int(max_shift)
    out = np.full((2 * r + 1, 2 * r + 1), np.nan)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            try:
                out[dy + r, dx + r] = cross_correlation_degree(s_map, i_map, (dx, dy))
            except (GeometryError, UndefinedCorrelationError):
                pass
    return out


def find_symmetry_center(s_map, i_map, search_radius: int):
    """Integer shift maximising gamma within the radius, and that gamma.

    Ties go to the smallest |shift|, then to the lexicographically smallest
    (dx, dy).
    """
    if search_radius < 0:
        raise GeometryError("search radius must be >= 0")
    cmap = correlation_map(s_map, i_map, search_radius)
    if np.all(np.isnan(cmap)):
        raise GeometryError("no valid shift within the search window")
    r = search_radius
    best = None
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            g = cmap[dy + r, dx + r]
            if np.isnan(g):
                continue
            key = (-g, dx * dx + dy * dy, dx, dy)
            if best is None or key < best:
                best = key
    _, _, dx, dy = best
    return (dx, dy), float(-best[0])


def correlation_peak_width(profile: Sequence[float]) -> float:
    """FWHM [samples] of the central peak of a 1-D correlation section.

    The baseline is the profile minimum; crossings are linearly interpolated.
    """
    p = np.asarray(profile, dtype=float)
    c = int(np.nanargmax(p))
    base = np.nanmin(p)
    half = base + 0.5 * (p[c] - base)

    def crossing(direction):
        k = c
        while 0 <= k + direction < p.size and p[k + direction] > half:
            k += direction
        nxt = k + direction
        if not 0 <= nxt < p.size:
            return math.nan
        return k + direction * (p[k] - half) / (p[k] - p[nxt])

    left, right = crossing(-1), crossing(+1)
    return right - left


@dataclass(frozen=True)
class BinningRow:
    n: int
    mean_sum_per_pair: float
    normalized_variance: float


def binning_sweep(s_map, i_map, n_list: Iterable[int], shift=(0, 0),
                  sigma_b: float = 0.0) -> list[BinningRow]:
    """Normalised difference variance of N x N binned symmetric pairs.

    Maps are first aligned at ``shift``; each binned pixel's background and
    Wigner-ordering excess scale with its N^2 member pixels.
    """
    s, im = aligned_maps(s_map, i_map, shift)
    # aligned blocks pair pixel-for-pixel, so binning both on one block grid keeps pairs intact
    s_pe = PeMap(np.ascontiguousarray(s), ordering_variance=_ordering(s_map))
    i_pe = PeMap(np.ascontiguousarray(im), ordering_variance=_ordering(i_map))
    rows = []
    for n in n_list:
        sb, ib = bin_pixels(s_pe, n), bin_pixels(i_pe, n)
        ens = PairEnsemble(sb.counts.ravel(), ib.counts.ravel(), tuple(shift), s.shape)
        var = pair_difference_variance(ens)
        var = ordering_correct(var, sb.ordering_variance, ib.ordering_variance)
        var = background_correct(var, n * sigma_b)
        snl = shot_noise_level(ens)
        rows.append(BinningRow(int(n), snl, _normalize_or_nan(var, snl)))
    return rows


@dataclass(frozen=True)
class ShotStatistics:
    shot_id: str
    mean_sum: float
    diff_variance: float
    normalized_variance: float
    gamma_peak: float
    center: tuple[int, int]
    corrected: bool = False
    group: object = None

    @property
    def negative_variance(self) -> bool:
        return self.diff_variance < 0


def analyze_shot(s_map, i_map, search_radius: int = 3, sigma_b: float = 0.0,
                 correct_background: bool = False, shot_id: str = "",
                 group=None, center=None) -> ShotStatistics:
    """Centre search, pairing and SNL-normalised variance for one shot."""
    if center is None:
        center, gamma = find_symmetry_center(s_map, i_map, search_radius)
    else:
        gamma = cross_correlation_degree(s_map, i_map, center)
    ens = PairEnsemble.from_maps(s_map, i_map, center)
    var = pair_difference_variance(ens)
    var = ordering_correct(var, _ordering(s_map), _ordering(i_map))
    if correct_background:
        var = background_correct(var, sigma_b)
    snl = shot_noise_level(ens)
    return ShotStatistics(shot_id, snl, var, _normalize_or_nan(var, snl), gamma,
                          (int(center[0]), int(center[1])), bool(correct_background), group)


@dataclass(frozen=True)
class GroupMean:
    group: object
    n_shots: int
    mean_sum: float
    normalized_variance: float
    gamma_peak: float


def _nanmean(values) -> float:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    return float(v.mean()) if v.size else math.nan


def shot_scatter(shots: Sequence[ShotStatistics]):
    """One row per shot plus per-group means (groups keep first-seen order)."""
    rows = [(s.shot_id, s.mean_sum, s.diff_variance, s.normalized_variance,
             s.gamma_peak, s.center[0], s.center[1], int(s.corrected)) for s in shots]
    order, members = [], {}
    for s in shots:
        if s.group not in members:
            order.append(s.group)
            members[s.group] = []
        members[s.group].append(s)
    groups = []
    for key in order:
        ms = members[key]
        groups.append(GroupMean(key, len(ms),
                                float(np.mean([s.mean_sum for s in ms])),
                                _nanmean([s.normalized_variance for s in ms]),
                                float(np.mean([s.gamma_peak for s in ms]))))
    return rows, groups
