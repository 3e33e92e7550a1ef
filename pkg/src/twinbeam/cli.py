"""Command line entry point: ``twinbeam {run,calibrate,report,oracle}``."""
from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from dataclasses import replace

from .config import load_plan
from .errors import TwinBeamError
from .harness import calibrate_snl, report_figures, run_plan
from .oracle import gain_profile, ideal_normalized_variance, two_mode_gain

OUT_ENV = "TWINBEAM_OUT"


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="twinbeam", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML configuration file")
        p.add_argument("--seed", type=_u64, help="master seed (overrides plan.seed)")
        p.add_argument("--out", help=f"output directory (else ${OUT_ENV}, else plan.out_dir)")

    p = sub.add_parser("run", help="simulate the pump sweep and write tables/images")
    common(p)
    p.add_argument("--shots", type=_positive, help="shots per amplitude")
    p.add_argument("--parallel", type=_positive, default=1, help="worker processes")

    p = sub.add_parser("calibrate", help="coherent-pair shot-noise calibration")
    common(p)

    p = sub.add_parser("report", help="render figures from a finished run")
    p.add_argument("--out", help="run directory (else $TWINBEAM_OUT)")
    p.add_argument("--fit-window", nargs=2, type=float, default=(8.0, 20.0),
                   metavar=("LO", "HI"), help="<n_s+n_i> range of the trend line")
    p.add_argument("--format", default="png", choices=("png", "pdf", "svg"))

    p = sub.add_parser("oracle", help="closed-form gain table")
    p.add_argument("--gains", nargs="+", type=float, default=[1, 2, 3, 4, 5, 6])
    p.add_argument("--efficiency", type=float, default=0.75)
    p.add_argument("--waist", type=float, default=1e-3, help="pump FWHM [m]")
    return ap


def _out_dir(args, plan) -> str:
    return args.out or os.environ.get(OUT_ENV) or plan.out_dir


def _plan(args):
    plan = load_plan(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "shots", None):
        changes["shots"] = args.shots
    return replace(plan, **changes) if changes else plan


def _oracle(args) -> None:
    import numpy as np
    x = np.linspace(-3 * args.waist, 3 * args.waist, 4001)
    amp = np.exp(-2 * math.log(2) * x**2 / args.waist**2)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["g", "gain", "mean_photons", "gain_fwhm", "loss_floor"])
    for g in args.gains:
        sol = two_mode_gain(g)
        fwhm = gain_profile(amp, g, 1.0, x).fwhm_x
        w.writerow([repr(g), repr(sol.gain), repr(sol.mean_photons), repr(fwhm),
                    repr(ideal_normalized_variance(g, args.efficiency))])


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            plan = _plan(args)
            out = _out_dir(args, plan)
            run_plan(plan, out, parallel=args.parallel)
            print(f"wrote {out}")
        elif args.command == "calibrate":
            plan = _plan(args)
            print(f"wrote {calibrate_snl(plan, _out_dir(args, plan))}")
        elif args.command == "report":
            src = args.out or os.environ.get(OUT_ENV)
            if not src:
                raise TwinBeamError("report needs --out or $TWINBEAM_OUT")
            rep = report_figures(src, tuple(args.fit_window), fmt=args.format)
            for f in rep.files:
                print(f"wrote {f}")
        else:
            _oracle(args)
    except (TwinBeamError, OSError) as exc:
        print(f"twinbeam: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
