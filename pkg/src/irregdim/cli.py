"""Command-line front end.

Exit codes: 0 success, 2 invalid configuration or input, 3 optimizer failure,
4 harvest or budget failure.  Data goes to ``--out`` when given, else stdout;
diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dimension, moran, spectrum
from .config import ExperimentConfig, load_config
from .errors import BudgetError, ConvergenceError, HarvestError, NumericError, ValidationError
from .interval_maps import parabolic_hull
from .symbolic import cylinder_pass

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_OPTIMIZER = 3
EXIT_HARVEST = 4

# per-task seed offsets from the root seed
POINT_SEED_OFFSET = 1
CLOUD_SEED_OFFSET = 100_000
OSCILLATION_SEED_OFFSET = 900_000


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")


def _warn(msg: str):
    print(f"warning: {msg}", file=sys.stderr)


# ---------------------------------------------------------------- commands


def cmd_map_info(cfg: ExperimentConfig) -> int:
    T = cfg.build_map()
    branches = []
    for i, (a, b) in enumerate(T.domains):
        da = abs(float(T.derivative[i](np.asarray(a))))
        db = abs(float(T.derivative[i](np.asarray(b))))
        branches.append({"branch": i + 1, "domain": [a, b], "abs_derivative": [da, db],
                         "fixed_point": T.fixed_points[i]})
    report = {
        "map": T.describe(),
        "branches": branches,
        "fixed_points": list(T.fixed_points),
        "parabolic_points": list(T.parabolic_points),
        "caveats": list(T.caveats),
    }
    if cfg.potential is not None:
        pot = cfg.build_potential(T)
        try:
            hull = parabolic_hull(T, pot)
            report["parabolic_hull"] = [] if hull.empty else [p.tolist() for p in hull.generator_points]
        except ConvergenceError as exc:
            report["parabolic_hull"] = "unresolved"
            _warn(str(exc))
    _emit(_dump_json(report), cfg.out)
    return EXIT_OK


def cmd_spectrum(cfg: ExperimentConfig) -> int:
    seed = cfg.require_seed("spectrum")
    T = cfg.build_map()
    p = cfg.spectrum
    if p.sup:
        point = spectrum.hyperbolic_dimension(T, p.order, p.starts, seed)
        _emit(spectrum.spectrum_csv([point]), cfg.out)
        return EXIT_OK
    if not p.alphas:
        raise ValidationError("spectrum grid is empty")
    pot = cfg.build_potential(T)
    points, flags = spectrum.spectrum_curve(T, pot, p.alphas, p.order, p.starts, seed, threads=cfg.threads)
    _emit(spectrum.spectrum_csv(points), cfg.out)
    if not flags["concave"]:
        _warn("spectrum values are not concave on the grid")
    if flags["failed"]:
        print(f"error: {flags['failed']} grid points failed", file=sys.stderr)
        return EXIT_OPTIMIZER
    return EXIT_OK


def _construction(cfg: ExperimentConfig, seed: int):
    T = cfg.build_map()
    pot = cfg.build_potential(T)
    mu, nu = cfg.build_measures(T)
    q = cfg.irregular
    sched = moran.build_schedule(q.stages, q.base_length, q.growth, q.eps0, q.delta, symmetric=q.symmetric)
    cm = moran.build_concatenated(sched, mu, nu, pot, T, seed=seed, budget=q.budget)
    alpha, beta = cm.targets
    if np.allclose(alpha, beta, atol=1e-9):
        _warn("not irregular: both phases have the same Birkhoff target")
    return T, pot, cm


def cmd_oscillation(cfg: ExperimentConfig) -> int:
    seed = cfg.require_seed("oscillation")
    T, pot, cm = _construction(cfg, seed)
    w = moran.generate_point(cm, seed + OSCILLATION_SEED_OFFSET)
    _emit(moran.oscillation_csv(moran.oscillation_profile(cm, T, pot, w)), cfg.out)
    return EXIT_OK


def cmd_irregular(cfg: ExperimentConfig) -> int:
    seed = cfg.require_seed("irregular")
    q = cfg.irregular
    T, pot, cm = _construction(cfg, seed)
    length = min(q.point_length, cm.schedule.total_length)
    pts = moran.generate_points(cm, seed + POINT_SEED_OFFSET, q.points, length)
    rows = []
    for j, w in enumerate(pts):
        est = moran.local_dimension(cm, T, w)
        rows.append([j, f"{est.slope:.10g}", f"{est.diagnostics['deep_min_ratio']:.10g}",
                     est.diagnostics["max_cylinders"], f"{est.r_squared:.10g}"])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["point", "slope", "deep_min_ratio", "max_cylinders", "r_squared"])
    writer.writerows(rows)
    cloud = moran.generate_points(cm, seed + CLOUD_SEED_OFFSET, q.cloud, min(q.cloud_length, cm.schedule.total_length))
    xs = cylinder_pass(T, cloud).center
    box = dimension.box_counting(xs, min_points=min(dimension.MIN_POINTS, xs.size))
    osc_word = moran.generate_point(cm, seed + OSCILLATION_SEED_OFFSET)
    osc = moran.oscillation_profile(cm, T, pot, osc_word)
    floor = min(f.h / f.lam for f in cm.families[:2])
    summary = {
        "schedule": cm.schedule.to_dict(),
        "schedule_check": cm.schedule.check(),
        "targets": [t.tolist() for t in cm.targets],
        "floor": floor,
        "local_dimension_min_slope": min(float(r[1]) for r in rows) if rows else None,
        "box_dimension": box.summary(),
    }
    if cfg.out is None:
        sys.stdout.write(_dump_json(summary))
        return EXIT_OK
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "construction.yaml").write_text(cm.to_yaml(), encoding="utf-8")
    (out / "local_dimension.csv").write_text(buf.getvalue(), encoding="utf-8")
    (out / "points.csv").write_text(moran.points_csv(T, cloud), encoding="utf-8")
    (out / "boxcount.csv").write_text(box.to_csv(), encoding="utf-8")
    (out / "oscillation.csv").write_text(moran.oscillation_csv(osc), encoding="utf-8")
    (out / "summary.json").write_text(_dump_json(summary), encoding="utf-8")
    return EXIT_OK


def cmd_boxdim(cfg: ExperimentConfig) -> int:
    T = cfg.build_map()
    b = cfg.boxdim
    if int(b.depth) != b.depth or b.depth < 1:
        raise ValidationError(f"depth must be a positive integer, got {b.depth!r}")
    pts = dimension.attractor_sample(T, int(b.depth), budget=b.budget)
    scales = dimension.default_scales(b.scales, b.ratio, b.start)
    est = dimension.box_counting(pts, scales, min_points=min(dimension.MIN_POINTS, pts.size))
    _emit(_dump_json(dict(est.summary(), map=T.describe(), depth=int(b.depth),
                          table={k: np.asarray(v).tolist() for k, v in est.table.items()})), cfg.out)
    return EXIT_OK


COMMANDS = {
    "map-info": cmd_map_info,
    "spectrum": cmd_spectrum,
    "irregular": cmd_irregular,
    "boxdim": cmd_boxdim,
    "oscillation": cmd_oscillation,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irregdim", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="YAML experiment config")
    parser.add_argument("--seed", type=int, default=None, help="root seed (overrides config)")
    parser.add_argument("--out", default=None, help="output file (directory for 'irregular')")
    parser.add_argument("--threads", type=int, default=None, help="worker threads")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config)
        overrides = {k: v for k, v in (("seed", args.seed), ("out", args.out), ("threads", args.threads)) if v is not None}
        cfg = replace(cfg, **overrides)
        if cfg.threads < 1:
            raise ValidationError("threads must be >= 1")
        return COMMANDS[args.command](cfg)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HarvestError, BudgetError) as exc:
        stage = getattr(exc, "stage", None)
        print(f"error: {exc}" + (f" [stage {stage}]" if stage is not None else ""), file=sys.stderr)
        return EXIT_HARVEST
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OPTIMIZER


if __name__ == "__main__":
    sys.exit(main())
