"""Command-line interface.

Subcommands::

    twoline fit POINTS [--methods all] [--format csv|json] [--out FILE]
    twoline simulate --scenario FILE [--reps-override N] [--out DIR]
    twoline coverage --scenario FILE [--levels 0.8,0.95] [--out DIR]
    twoline equivariance (--scenario FILE | --points FILE) [--transforms 20] [--identity]

Exit codes: 0 success, 1 usage error, 2 data error, 3 every method failed.
"""

from __future__ import annotations

import argparse
import io
import math
import os
import secrets
import sys
from typing import Optional, Sequence

import numpy as np

from .errors import EstimationFailure, InvalidInput, TooFewPoints
from .estimators import COV_METHODS, fit, parse_methods
from .fileio import dump_json, read_points, read_scenario, write_csv
from .geometry import SimilarityTransform, as_sample
from .simulate import (
    coverage_study,
    equivariance_suite,
    replicate_sample,
    run_monte_carlo,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_ALL_FAILED = 0, 1, 2, 3

FIT_COLUMNS = (
    "method", "ok", "k1", "h1", "k2", "h2", "sigma2",
    "se_k1", "se_h1", "se_k2", "se_h2", "x", "y", "se_x", "se_y", "error",
)  # fmt: skip
SUMMARY_COLUMNS = ("method", "successes", "failures", "mean_x", "mean_y", "sd_x", "sd_y", "se_x", "se_y")
ESTIMATE_COLUMNS = ("rep", "method", "ok", "k1", "h1", "k2", "h2", "sigma2", "x", "y", "se_x", "se_y", "error")
COVERAGE_COLUMNS = ("method", "level", "coverage_pct", "median_area", "used", "failures")
EQUIVARIANCE_COLUMNS = (
    "transform", "K", "angle", "reflect", "dx", "dy", "method", "status", "deviation", "relative",
)  # fmt: skip


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _methods(text, allowed=None):
    try:
        methods = parse_methods(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if allowed is not None:
        bad = [m.label for m in methods if m not in allowed]
        if bad:
            raise UsageError(f"methods without covariance: {', '.join(bad)}")
    return methods


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="twoline", description="Estimate two intersecting lines from noisy points.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, methods_default="all"):
        sp.add_argument("--methods", default=methods_default, help="comma-separated: ignore-f,update,or,ml,rban or all")
        sp.add_argument("--seed", type=int, default=None, help="random seed (printed when generated)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--out", default=None, help="output file (fit) or directory (other commands)")

    sp = sub.add_parser("fit", help="fit estimators to a points file")
    sp.add_argument("points", help="CSV file with two numeric columns x,y")
    common(sp)

    for name, help_ in (("simulate", "Monte Carlo comparison"), ("coverage", "confidence ellipse coverage")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--scenario", required=True, help="key = value scenario file")
        sp.add_argument("--reps-override", type=int, default=None, help="replace the scenario's reps")
        common(sp, "all" if name == "simulate" else "ignore-f,update,rban")
        if name == "coverage":
            sp.add_argument("--levels", default="0.8,0.95", help="comma-separated nominal levels")

    sp = sub.add_parser("equivariance", help="similarity equivariance check")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help="draw one sample from this scenario")
    src.add_argument("--points", help="use this points file")
    sp.add_argument("--transforms", type=int, default=20, help="number of random similarity transforms")
    sp.add_argument("--identity", action="store_true", help="use the identity transform only")
    sp.add_argument("--scale", type=float, default=None, help="fixed transform: scale K")
    sp.add_argument("--angle", type=float, default=0.0, help="fixed transform: rotation in degrees")
    sp.add_argument("--shift", default="0,0", help="fixed transform: translation dx,dy")
    sp.add_argument("--reflect", action="store_true", help="fixed transform: reflect before rotating")
    common(sp)
    return p


def _generated_seed() -> int:
    seed = secrets.randbits(63)
    print(f"seed: {seed}", file=sys.stderr)
    return seed


def _resolve_seed(seed: Optional[int]) -> int:
    return _generated_seed() if seed is None else seed


def _se(cov, i):
    return math.sqrt(max(cov[i, i], 0.0)) if cov is not None else None


def _fit_row(method, sample, seed):
    try:
        r = fit(method, sample, seed=seed)
        params = r.params()
        point = r.intersection()
        pse = r.intersection_se()
        row = [method.value, True, *params, r.sigma2_hat]
        row += [_se(r.cov_lines, i) for i in range(4)]
        row += [*point, *(pse if pse is not None else (None, None)), ""]
    except (EstimationFailure, InvalidInput) as exc:
        row = [method.value, False] + [None] * 13 + [f"{type(exc).__name__}: {exc}"]
    return row


def _emit(text: str, out: Optional[str]):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _csv_text(columns, rows):
    buf = io.StringIO()
    write_csv(buf, columns, rows)
    return buf.getvalue()


def _emit_tables(tables: dict, fmt: str, out: Optional[str], meta: dict):
    """Write named tables: a directory of files when ``out`` is set, else to stdout."""
    if fmt == "json":
        payload = dict(meta)
        payload["tables"] = {name: [dict(zip(cols, row)) for row in rows] for name, (cols, rows) in tables.items()}
        text = dump_json(payload) + "\n"
        if out is None:
            sys.stdout.write(text)
        else:
            os.makedirs(out, exist_ok=True)
            _emit(text, os.path.join(out, f"{meta['command']}.json"))
        return
    if out is None:
        for name, (cols, rows) in tables.items():
            sys.stdout.write(f"# {name}\n")
            sys.stdout.write(_csv_text(cols, rows))
            sys.stdout.write("\n")
        return
    os.makedirs(out, exist_ok=True)
    for name, (cols, rows) in tables.items():
        _emit(_csv_text(cols, rows), os.path.join(out, f"{name}.csv"))


def cmd_fit(args) -> int:
    methods = _methods(args.methods)
    sample = as_sample(read_points(args.points))
    if sample.shape[0] < 6:
        raise TooFewPoints(f"need at least 6 points, got {sample.shape[0]}")
    seed = _resolve_seed(args.seed)
    rows = [_fit_row(m, sample, seed) for m in methods]
    if args.format == "json":
        payload = {"command": "fit", "n": int(sample.shape[0]), "results": [dict(zip(FIT_COLUMNS, r)) for r in rows]}
        _emit(dump_json(payload) + "\n", args.out)
    else:
        _emit(_csv_text(FIT_COLUMNS, rows), args.out)
    return EXIT_OK if any(r[1] for r in rows) else EXIT_ALL_FAILED


def _scenario(args):
    cfg = read_scenario(args.scenario, _generated_seed if args.seed is None else args.seed)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "reps_override", None) is not None:
        changes["reps"] = args.reps_override
    if changes:
        cfg = cfg.replace(**changes)
    return cfg


def _meta(command, cfg):
    return {
        "command": command,
        "distribution": cfg.distribution.value,
        "n": cfg.n,
        "sigma": cfg.sigma,
        "reps": cfg.reps,
        "seed": cfg.seed,
        "protocol": "functional" if cfg.functional else "structural",
    }


def _opt(v, i):
    return None if v is None else v[i]


def cmd_simulate(args) -> int:
    methods = _methods(args.methods)
    cfg = _scenario(args)
    res = run_monte_carlo(cfg, methods)
    summary = []
    for m in methods:
        s = res.summaries[m]
        summary.append(
            [m.value, s.successes, s.failures, *s.mean, *s.sd, _opt(s.median_se, 0), _opt(s.median_se, 1)]
        )
    rms = [[cfg.n, cfg.sigma, *(res.summaries[m].rms for m in methods)]]
    estimates = []
    for r in res.records:
        params = r.params if r.params is not None else [None] * 4
        point = r.point if r.ok else (None, None)
        se = np.sqrt(np.clip(np.diag(r.point_cov), 0, None)) if r.point_cov is not None else (None, None)
        sig = r.sigma2 if r.ok else None
        estimates.append([r.rep, r.method.value, r.ok, *params, sig, *point, *se, r.error])
    tables = {
        "summary": (SUMMARY_COLUMNS, summary),
        "rms": (("n", "sigma", *(m.value for m in methods)), rms),
        "estimates": (ESTIMATE_COLUMNS, estimates),
    }
    _emit_tables(tables, args.format, args.out, _meta("simulate", cfg))
    return EXIT_OK


def cmd_coverage(args) -> int:
    methods = _methods(args.methods, COV_METHODS)
    try:
        levels = [float(v) for v in args.levels.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad --levels {args.levels!r}") from None
    if not levels or not all(0 < v < 1 for v in levels):
        raise UsageError("levels must lie in (0, 1)")
    cfg = _scenario(args)
    rows, _ = coverage_study(cfg, levels, methods)
    table = [[r.method.value, r.level, 100.0 * r.coverage, r.median_area, r.used, r.failures] for r in rows]
    _emit_tables({"coverage": (COVERAGE_COLUMNS, table)}, args.format, args.out, _meta("coverage", cfg))
    return EXIT_OK


def _transforms(args, seed):
    if args.identity:
        return [SimilarityTransform()], [(1.0, 0.0, False, 0.0, 0.0)]
    if args.scale is not None:
        try:
            dx, dy = (float(v) for v in args.shift.split(","))
        except ValueError:
            raise UsageError(f"bad --shift {args.shift!r}") from None
        g = SimilarityTransform.from_angle(args.scale, math.radians(args.angle), (dx, dy), args.reflect)
        return [g], [(args.scale, args.angle, args.reflect, dx, dy)]
    if args.transforms < 1:
        raise UsageError("--transforms must be positive")
    rng = np.random.default_rng([seed, 7])
    gs, desc = [], []
    for _ in range(args.transforms):
        g = SimilarityTransform.random(rng)
        reflect = bool(np.linalg.det(g.U) < 0)
        u = g.U @ np.diag([1.0, -1.0]) if reflect else g.U
        angle = math.degrees(math.atan2(u[1, 0], u[0, 0]))
        gs.append(g)
        desc.append((g.K, angle, reflect, *g.dz))
    return gs, desc


def cmd_equivariance(args) -> int:
    methods = _methods(args.methods)
    if args.points:
        sample = as_sample(read_points(args.points))
        seed = _resolve_seed(args.seed)
        meta = {"command": "equivariance", "source": args.points, "seed": seed}
    else:
        cfg = _scenario(args)
        seed = cfg.seed
        sample = replicate_sample(cfg, 0)
        meta = _meta("equivariance", cfg)
    gs, desc = _transforms(args, seed)
    outcomes = equivariance_suite(sample, gs, methods, seed=seed)
    rows = []
    for i, o in enumerate(outcomes):
        t = i // len(methods)
        rows.append([t, *desc[t], o.method.value, o.status, o.deviation, o.relative])
    _emit_tables({"equivariance": (EQUIVARIANCE_COLUMNS, rows)}, args.format, args.out, meta)
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "coverage": cmd_coverage,
    "equivariance": cmd_equivariance,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"twoline: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvalidInput, OSError) as exc:
        print(f"twoline: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"twoline: invalid data: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
