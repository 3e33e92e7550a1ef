"""Batch driver: seeded multi-shot runs, calibration and figure rendering."""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentPlan, SimulationConfig, plan_to_dict
from .detection import (PeMap, add_background, apply_loss, coherent_source, detect_pixels,
                        save_pemap_pgm, spectral_mask, subpixel_shift, to_far_field)
from .errors import ReportError, ShotFailure, TwinBeamError
from .field import CrystalParams, Grid, PumpParams, init_vacuum, make_pump, shot_seed, shot_streams
from .propagation import LinearOperators, propagate
from .statistics import (BinningRow, ShotStatistics, analyze_shot, binning_sweep,
                         correlation_map, shot_scatter)

SHOT_COLUMNS = ("shot_id", "amplitude_index", "shot_index", "amplitude", "mean_sum",
                "diff_variance", "normalized_variance", "gamma_peak", "center_dx",
                "center_dy", "corrected")
GROUP_COLUMNS = ("group", "label", "amplitude", "n_shots", "mean_sum", "normalized_variance",
                 "gamma_peak")
BINNING_COLUMNS = ("N", "mean_sum_per_pair", "normalized_variance")
CALIBRATION_COLUMNS = ("mean_pe", "mean_sum", "diff_variance", "normalized_variance",
                       "standard_error", "flag")


def _fmt(v) -> str:
    # repr round-trips floats exactly
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


@lru_cache(maxsize=4)
def _operators(grid: Grid, crystal: CrystalParams, pump_wavelength: float) -> LinearOperators:
    return LinearOperators.build(grid, crystal, pump_wavelength)


def _stage(name: str, shot_id: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ShotFailure:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with stage context
        raise ShotFailure(name, shot_id, f"{type(exc).__name__}: {exc}") from exc


@dataclass(frozen=True)
class ShotResult:
    stats: ShotStatistics
    signal: PeMap
    idler: PeMap
    binning: tuple[BinningRow, ...] = ()
    cmap: np.ndarray | None = None


def simulate_far_field(config: SimulationConfig, pump: PumpParams, streams: dict,
                       shot_id: str = ""):
    """Pump, vacuum, crystal and lens: the far-field state of one shot."""
    grid = config.grid
    ops = _operators(grid, config.crystal, pump.wavelength)
    a_p = _stage("pump", shot_id, make_pump, pump, grid)
    st = init_vacuum(grid, streams["vacuum"]).replace(a_p=a_p)
    st = _stage("propagate", shot_id, propagate, st, config.crystal, config.solver,
                pump.wavelength, streams["absorber"], ops)
    return _stage("far_field", shot_id, to_far_field, st, config.detector.focal_length,
                  config.signal_wavelength)


def simulate_shot(config: SimulationConfig, pump: PumpParams, seed: int,
                  amplitude_index: int = 0, shot_index: int = 0, *,
                  background: bool = True, misregistration=(0.0, 0.0),
                  use_mask: bool = False, search_radius: int = 3,
                  binning=(), cmap_radius: int | None = None) -> ShotResult:
    """Full pipeline for one shot.

    simulate -> far field -> mask -> loss -> misregistration -> detect ->
    background -> centre search -> statistics.
    """
    shot_id = f"a{amplitude_index}s{shot_index}"
    streams = shot_streams(seed, amplitude_index, shot_index)
    det = config.detector
    ff = simulate_far_field(config, pump, streams, shot_id)
    if use_mask and det.mask_center is not None:
        ff = _stage("mask", shot_id, spectral_mask, ff, det.mask_center, det.mask_bandwidth,
                    config.signal_wavelength, streams["mask"])
    ff = _stage("loss", shot_id, apply_loss, ff, det.efficiency, streams["loss"])
    dx, dy = misregistration
    if dx or dy:
        ff = _stage("misregistration", shot_id, subpixel_shift, ff, dx, dy, "idler",
                    det.oversampling)
    s_map = _stage("detect", shot_id, detect_pixels, ff, det, "signal", shot_id)
    i_map = _stage("detect", shot_id, detect_pixels, ff, det, "idler", shot_id)
    sigma_b = det.background_sigma if background else 0.0
    if sigma_b > 0:
        rng = streams["background"]
        s_map = add_background(s_map, sigma_b, rng)
        i_map = add_background(i_map, sigma_b, rng)
    stats = _stage("statistics", shot_id, analyze_shot, s_map, i_map, search_radius,
                   sigma_b, sigma_b > 0, shot_id, amplitude_index)
    rows = ()
    if binning:
        rows = tuple(_stage("binning", shot_id, binning_sweep, s_map, i_map, binning,
                            stats.center, sigma_b))
    cmap = None
    if cmap_radius is not None:
        cmap = _stage("correlation_map", shot_id, correlation_map, s_map, i_map, cmap_radius)
    return ShotResult(stats, s_map, i_map, rows, cmap)


@dataclass(frozen=True)
class RunManifest:
    config: dict
    seeds: list
    artifacts: list
    version: str = __version__
    out_dir: str = ""

    def to_json(self) -> str:
        return json.dumps({"version": self.version, "config": self.config,
                           "seeds": self.seeds, "artifacts": self.artifacts},
                          indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "RunManifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        d = json.loads(path.read_text())
        return cls(d["config"], d["seeds"], d["artifacts"], d["version"], str(path.parent))


def _task(args):
    plan, k, j = args
    pump = plan.pumps()[k]
    first = j == 0
    return simulate_shot(plan.config, pump, plan.seed, k, j,
                         background=plan.background, misregistration=plan.misregistration,
                         use_mask=plan.spectral_mask, search_radius=plan.search_radius,
                         binning=plan.binning if first else (),
                         cmap_radius=max(plan.search_radius, 6) if first else None)


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def run_plan(plan: ExperimentPlan, out_dir=None, parallel: int = 1) -> RunManifest:
    """Run every (amplitude, shot) of the plan and write the artifacts.

    Shot rows are appended and flushed in plan order as results arrive, so
    a failure leaves the rows of earlier shots intact.
    """
    out = Path(out_dir or plan.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise TwinBeamError(f"output directory {out} is not writable")
    tasks = [(plan, k, j) for k in range(len(plan.amplitudes)) for j in range(plan.shots)]
    seeds = [{"amplitude_index": k, "shot_index": j, "seed": shot_seed(plan.seed, k, j)}
             for _, k, j in tasks]
    artifacts = ["manifest.json", "shots.csv"]
    stats = []

    def manifest():
        m = RunManifest(plan_to_dict(plan), seeds, sorted(artifacts), out_dir=str(out))
        (out / "manifest.json").write_text(m.to_json() + "\n")
        return m

    pool = ProcessPoolExecutor(parallel) if parallel > 1 else None
    results = pool.map(_task, tasks) if pool else map(_task, tasks)
    try:
        with open(out / "shots.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SHOT_COLUMNS)
            fh.flush()
            for (_, k, j), res in zip(tasks, results):
                st = res.stats
                stats.append(st)
                w.writerow([_fmt(v) for v in (st.shot_id, k, j, plan.amplitudes[k], st.mean_sum,
                                              st.diff_variance, st.normalized_variance,
                                              st.gamma_peak, st.center[0], st.center[1],
                                              int(st.corrected))])
                fh.flush()
                if j == 0:
                    artifacts.extend(_write_shot_artifacts(out, k, res))
    finally:
        if pool:
            pool.shutdown(cancel_futures=True)
        manifest()

    _, groups = shot_scatter(stats)
    labels = plan.labels or plan.amplitudes
    _write_csv(out / "groups.csv", GROUP_COLUMNS,
               [(g.group, labels[g.group], plan.amplitudes[g.group], g.n_shots, g.mean_sum,
                 g.normalized_variance, g.gamma_peak) for g in groups])
    artifacts.append("groups.csv")
    return manifest()


def _write_shot_artifacts(out: Path, k: int, res: ShotResult) -> list[str]:
    names = []
    if res.binning:
        name = f"binning_a{k}.csv"
        _write_csv(out / name, BINNING_COLUMNS,
                   [(r.n, r.mean_sum_per_pair, r.normalized_variance) for r in res.binning])
        names.append(name)
    if res.cmap is not None:
        name = f"corrmap_a{k}.txt"
        np.savetxt(out / name, res.cmap, fmt="%.17g")
        names.append(name)
    for pe, tag in ((res.signal, "signal"), (res.idler, "idler")):
        pgm, side = save_pemap_pgm(pe, out / f"{tag}_a{k}.pgm")
        names += [pgm.name, side.name]
    return names


def calibrate_snl(plan: ExperimentPlan, out_dir=None) -> Path:
    """Coherent-pair SNL check over the plan's mean-pe sweep; writes calibration.csv."""
    out = Path(out_dir or plan.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h, w = plan.calibration_pixels
    rows = []
    for k, mean in enumerate(plan.calibration_means):
        rng = shot_streams(plan.seed, k, 0)["background"]
        s, i = coherent_source(np.full((h, w), mean), rng, shot_id=f"cal{k}")
        rows.append(calibration_row(mean, s.counts, i.counts[::-1, ::-1]))
    path = out / "calibration.csv"
    _write_csv(path, CALIBRATION_COLUMNS, rows)
    return path


def calibration_row(mean: float, s: np.ndarray, i_mirrored: np.ndarray):
    """(mean, SNL, variance, normalised variance, its standard error, flag)."""
    d = (s - i_mirrored).ravel()
    snl = float(np.mean(s + i_mirrored))
    var = float(np.var(d))
    if snl <= 0:
        return (mean, snl, var, math.nan, math.nan, "zero_snl")
    dev2 = (d - d.mean()) ** 2
    se = float(np.std(dev2) / math.sqrt(d.size)) / snl
    return (mean, snl, var, var / snl, se, "ok")


# -- figures -------------------------------------------------------------------

def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass
class Report:
    files: list = field(default_factory=list)
    series: dict = field(default_factory=dict)  # name -> (x, y) exactly as plotted


def report_figures(source, fit_window=(8.0, 20.0), out_dir=None, fmt: str = "png") -> Report:
    """Render the shot scatter and binning curves from a run's CSV tables.

    ``fit_window`` bounds the group means entering the linear trend line.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    src = Path(source.out_dir if isinstance(source, RunManifest) else source)
    if src.is_file():
        src = src.parent
    out = Path(out_dir) if out_dir else src
    shots = _read_csv(src / "shots.csv") if (src / "shots.csv").exists() else []
    if not shots:
        raise ReportError(f"no shot rows in {src / 'shots.csv'}; nothing to plot")
    rep = Report()

    fig, ax = plt.subplots(figsize=(5, 4))
    x = np.array([float(r["mean_sum"]) for r in shots])
    y = np.array([float(r["normalized_variance"]) for r in shots])
    ax.plot(x, y, "o", mfc="white", mec="k", label="single shot")
    groups = _read_csv(src / "groups.csv") if (src / "groups.csv").exists() else []
    if groups:
        gx = np.array([float(r["mean_sum"]) for r in groups])
        gy = np.array([float(r["normalized_variance"]) for r in groups])
        ax.plot(gx, gy, "^", color="k", label="group mean")
        rep.series["groups"] = (gx, gy)
        sel = (gx >= fit_window[0]) & (gx <= fit_window[1])
        if sel.sum() >= 2:
            slope, icpt = np.polyfit(gx[sel], gy[sel], 1)
            xf = np.array(fit_window, dtype=float)
            ax.plot(xf, icpt + slope * xf, "-", color="0.4", label="linear fit")
    ax.axhline(1.0, color="k", lw=0.8, ls="--")
    ax.set_xlabel(r"$\langle n_s + n_i \rangle$ [pe]")
    ax.set_ylabel(r"$\sigma^2_{s-i} / \langle n_s + n_i \rangle$")
    ax.legend(frameon=False)
    rep.series["shots"] = (x, y)
    path = out / f"scatter.{fmt}"
    fig.savefig(path)
    plt.close(fig)
    rep.files.append(path)

    tables = sorted(src.glob("binning_a*.csv"), key=lambda p: int(p.stem.split("_a")[1]))
    if tables:
        fig, ax = plt.subplots(figsize=(5, 4))
        for t in tables:
            rows = _read_csv(t)
            n = np.array([int(r["N"]) for r in rows])
            v = np.array([float(r["normalized_variance"]) for r in rows])
            m1 = float(rows[0]["mean_sum_per_pair"]) if rows else math.nan
            ax.plot(n, v, "o-", label=f"{m1:.3g} pe")
            rep.series[t.stem] = (n, v)
        ax.axhline(1.0, color="k", lw=0.8, ls="--")
        ax.set_xlabel("N")
        ax.set_ylabel(r"$\sigma^2_{s-i} / \langle n_s + n_i \rangle$")
        ax.legend(frameon=False, fontsize=8)
        path = out / f"binning.{fmt}"
        fig.savefig(path)
        plt.close(fig)
        rep.files.append(path)
    _register(out, rep.files)
    return rep


def _register(out: Path, files) -> None:
    """Add report files to the run manifest in the same directory, if any."""
    mpath = out / "manifest.json"
    if not mpath.exists():
        return
    d = json.loads(mpath.read_text())
    d["artifacts"] = sorted(set(d["artifacts"]) | {Path(f).name for f in files})
    mpath.write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")
