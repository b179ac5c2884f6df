"""Command-line interface: ``countcp {detect,simulate,replicate,slope}``."""

from __future__ import annotations

import argparse
import difflib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CalibrationError, CountCPError, ConfigError
from .experiments import reports_to_csv, reports_to_json, run_replications, stderr_progress
from .models import DEFAULT_ALPHA0_MAX, FAMILY_NAMES, make_family
from .qmle import HISTORY_MODES
from .segment import (DetectionConfig, PenaltySpec, Segmentation, build_ml_matrix, detect,
                      slope_fit, unpenalized_curve, write_curve_csv)
from .simulate import get_scenario, load_scenario, scenario_library, simulate_piecewise

SCHEMA_VERSION = 1


class InputError(CountCPError, ValueError):
    pass


def read_counts(path) -> np.ndarray:
    """One non-negative integer per line; ``#`` lines and blank lines are
    skipped, and a single non-numeric first line is taken as a header."""
    values = []
    seen_data = False
    header_used = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                v = int(line)
            except ValueError:
                if not seen_data and not header_used:
                    header_used = True
                    continue
                raise InputError(f"{path}:{lineno}: not an integer: {line!r}") from None
            if v < 0:
                raise InputError(f"{path}:{lineno}: negative count {v}")
            values.append(v)
            seen_data = True
    if not values:
        raise InputError(f"{path}: no data")
    return np.asarray(values, dtype=np.int64)


def write_counts(path, y) -> None:
    with open(path, "w") as fh:
        fh.write("".join(f"{int(v)}\n" for v in y))


def _family_for(args, y):
    alpha0_max = args.alpha0_max
    if alpha0_max is None:
        alpha0_max = max(DEFAULT_ALPHA0_MAX, 2.0 * float(np.max(y)))
    return make_family(args.family, alpha0_max=alpha0_max)


def _config(args) -> DetectionConfig:
    return DetectionConfig(k_max=args.kmax, u_min=args.umin, penalty=PenaltySpec.parse(args.penalty),
                           grid_step=args.grid_step, history=args.history)


def _write_manifest(out: Path | None, manifest: dict, started: float) -> None:
    if out is None:
        return
    manifest = dict(manifest, tool_version=__version__, wall_seconds=round(time.time() - started, 3))
    Path(str(out) + ".manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def segmentation_json(seg: Segmentation, config_echo: dict) -> dict:
    segments = []
    for (start, end), fit, cov in zip(seg.segments, seg.per_segment, seg.covariances):
        segments.append({
            "start": start,
            "end": end,
            "theta": [float(v) for v in fit.theta_hat],
            "std_errors": None if cov is None else [float(v) for v in cov.std_errors],
            "loglik": float(fit.loglik),
            "converged": bool(fit.converged),
        })
    return {
        "schema_version": SCHEMA_VERSION,
        "k_hat": seg.k_hat,
        "breaks": [int(b) for b in seg.breaks],
        "tau_hat": [float(t) for t in seg.tau_hat],
        "segments": segments,
        "kappa": _num(seg.kappa),
        "penalty": seg.penalty,
        "criterion": float(seg.total_contrast),
        "n": seg.n,
        "u_min": seg.u_min,
        "k_max": seg.k_max,
        "slope_window": None if seg.slope is None else list(seg.slope.window),
        "config": config_echo,
    }


def _echo(args, family) -> dict:
    return {
        "input": str(getattr(args, "input", "")),
        "family": family.variant,
        "bounds": [list(family.space.lower), list(family.space.upper)],
        "kmax": args.kmax,
        "umin": args.umin,
        "penalty": args.penalty,
        "grid_step": args.grid_step,
        "history": args.history,
        "seed": getattr(args, "seed", None),
    }


def cmd_detect(args) -> int:
    started = time.time()
    y = read_counts(args.input)
    family = _family_for(args, y)
    cfg = _config(args)
    _, u_min = cfg.resolve(y.size, family.dim)
    if y.size < 2 * u_min:
        raise ConfigError(f"series of length {y.size} is shorter than 2 * u_min = {2 * u_min}")
    seg = detect(y, family, cfg)
    echo = _echo(args, family)
    text = json.dumps(segmentation_json(seg, echo), indent=2, sort_keys=True) + "\n"
    out = Path(args.out) if args.out else None
    if out:
        out.write_text(text)
    else:
        sys.stdout.write(text)
    prefix = args.curves
    if prefix:
        ks = np.arange(1, seg.k_max + 1)
        write_curve_csv(f"{prefix}_qlik.csv", ks, -seg.qlik, ("K", "neg_min_qlik"))
        write_curve_csv(f"{prefix}_penqlik.csv", ks, seg.pen_qlik, ("K", "min_penqlik"))
    _write_manifest(out, {"command": "detect", **echo}, started)
    return 0


def _scenario(args):
    if args.scenario_file:
        scen = load_scenario(args.scenario_file)
    else:
        try:
            scen = get_scenario(args.scenario)
        except ConfigError:
            names = list(scenario_library())
            close = difflib.get_close_matches(args.scenario.upper(), names, n=3, cutoff=0.3)
            hint = f" (did you mean {', '.join(close)}?)" if close else ""
            raise ConfigError(f"unknown scenario {args.scenario!r}{hint}; available: {', '.join(names)}") from None
    if args.n is not None:
        scen = scen.with_n(args.n)
    if args.seed is not None:
        scen = scen.with_seed(args.seed)
    return scen


def cmd_simulate(args) -> int:
    started = time.time()
    scen = _scenario(args)
    y = simulate_piecewise(scen)
    out = Path(args.out) if args.out else None
    if out:
        write_counts(out, y)
    else:
        sys.stdout.write("".join(f"{int(v)}\n" for v in y))
    _write_manifest(out, {"command": "simulate", "scenario": scen.name, "family": scen.family.variant,
                          "emission": scen.emission.name, "n": scen.n, "seed": scen.seed,
                          "burn_in": scen.burn_in}, started)
    return 0


def cmd_replicate(args) -> int:
    started = time.time()
    if args.R < 1:
        raise argparse.ArgumentTypeError("--R must be at least 1")
    scen = _scenario(args)
    penalties = [PenaltySpec.parse(p) for p in args.penalty.split(",") if p.strip()]
    cfg = DetectionConfig(k_max=args.kmax, u_min=args.umin, grid_step=args.grid_step)
    reports = run_replications(scen, args.R, penalties, cfg, workers=args.workers,
                               progress=None if args.quiet else stderr_progress)
    text = reports_to_csv(reports)
    out = Path(args.out) if args.out else None
    if out:
        out.write_text(text)
    else:
        sys.stdout.write(text)
    if args.json:
        Path(args.json).write_text(reports_to_json(reports))
    _write_manifest(out, {"command": "replicate", "scenario": scen.name, "family": scen.family.variant,
                          "n": scen.n, "seed": scen.seed, "R": args.R, "penalty": args.penalty,
                          "kmax": args.kmax, "umin": args.umin, "grid_step": args.grid_step}, started)
    return 0


def cmd_slope(args) -> int:
    started = time.time()
    y = read_counts(args.input)
    family = _family_for(args, y)
    cfg = _config(args)
    k_max, _ = cfg.resolve(y.size, family.dim)
    ml = build_ml_matrix(y, family, cfg)
    qlik = unpenalized_curve(ml, k_max)
    try:
        fit = slope_fit(qlik)
    except CalibrationError as exc:
        raise CalibrationError(f"{exc} (adjust --kmax)") from None
    summary = f"kappa_hat={fit.kappa!r} slope={fit.slope!r} window={fit.window[0]}-{fit.window[1]}"
    out = Path(args.out) if args.out else None
    if out:
        write_curve_csv(out, np.arange(1, k_max + 1), -qlik, ("K", "neg_min_qlik"), summary)
    else:
        sys.stdout.write("K,neg_min_qlik\n")
        for k, v in enumerate(-qlik, start=1):
            sys.stdout.write(f"{k},{float(v)!r}\n")
        sys.stdout.write(f"# {summary}\n")
    _write_manifest(out, {"command": "slope", **_echo(args, family)}, started)
    return 0


def _add_detection_flags(p):
    p.add_argument("--family", choices=FAMILY_NAMES, default="inarch1")
    p.add_argument("--penalty", default="slope", help="slope | logn | cuberoot | fixed=<value>")
    p.add_argument("--kmax", type=int, default=15)
    p.add_argument("--umin", type=int, default=None, help="minimum segment length (default floor(ln(n)^2))")
    p.add_argument("--grid-step", type=int, default=1)
    p.add_argument("--history", choices=HISTORY_MODES, default="full",
                   help="conditional mean uses the whole observed past (full) or restarts at each segment")
    p.add_argument("--alpha0-max", type=float, default=None,
                   help="upper bound on the intercept (default max(20, 2 * max(y)))")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="countcp", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect change points in a count series")
    p.add_argument("input")
    _add_detection_flags(p)
    p.add_argument("--curves", default=None, help="prefix for the contrast-curve CSV files")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("simulate", help="simulate a scenario")
    p.add_argument("--scenario", default="IA2")
    p.add_argument("--scenario-file", default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replicate", help="Monte Carlo break-frequency study")
    p.add_argument("--scenario", default="IA1")
    p.add_argument("--scenario-file", default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--R", type=int, default=30)
    p.add_argument("--penalty", default="slope,logn,cuberoot")
    p.add_argument("--kmax", type=int, default=15)
    p.add_argument("--umin", type=int, default=None)
    p.add_argument("--grid-step", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None, help="worker processes (default $COUNTCP_WORKERS or 1)")
    p.add_argument("--out", default=None)
    p.add_argument("--json", default=None)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_replicate)

    p = sub.add_parser("slope", help="export the -min QLIK(K) curve and the calibrated penalty")
    p.add_argument("input")
    _add_detection_flags(p)
    p.set_defaults(func=cmd_slope)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except argparse.ArgumentTypeError as exc:
        parser.error(str(exc))
    except (CountCPError, OSError) as exc:
        print(f"countcp {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
