"""Command-line entry point.

Exit status: 0 on success, 1 when an acceptance band fails, 2 on usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import config as cfgmod
from .experiments import EXPERIMENTS, run_experiment
from .geometry import GeometryError
from .materials import dump_tables

OUT_ENV = "PCMTOGGLE_OUT"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser():
    p = _Parser(prog="pcmtoggle", description="Six-contact phase-change toggle device simulator")
    g = p.add_mutually_exclusive_group()
    g.add_argument("-q", "--quiet", action="store_true", help="only print errors")
    g.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("experiment", help=", ".join(sorted(EXPERIMENTS)))
    _common(run)

    sw = sub.add_parser("sweep", help="run one experiment for several seeds")
    sw.add_argument("experiment")
    sw.add_argument("--seeds", default="0,1,2", help="comma-separated seeds")
    sw.add_argument("--workers", type=int, default=1)
    _common(sw, seed=False)

    mat = sub.add_parser("materials", help="material property tables")
    mat.add_argument("action", choices=["dump"])
    mat.add_argument("--config")
    mat.add_argument("--tmin", type=float, default=293.0)
    mat.add_argument("--tmax", type=float, default=1200.0)

    geo = sub.add_parser("geometry", help="rasterized device masks")
    geo.add_argument("action", choices=["dump"])
    geo.add_argument("--config")
    geo.add_argument("--which", choices=["material", "contact"], default="material")

    ver = sub.add_parser("verify", help="analytic solver oracles")
    ver.add_argument("--quick", action="store_true", help="skip the engine energy-audit run")
    return p


def _common(p, seed=True):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--preset", choices=sorted(cfgmod.PRESETS))
    if seed:
        p.add_argument("--seed", type=int)
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./runs)")


def _load(args, seed=None):
    over = {}
    if getattr(args, "preset", None):
        over["preset"] = args.preset
    if seed is not None:
        over["experiment"] = {"seed": seed}
    return cfgmod.load(getattr(args, "config", None), over)


def _outdir(args, name):
    base = args.out or os.environ.get(OUT_ENV) or "runs"
    return Path(base) / name if not args.out else Path(args.out)


def _print_report(rep):
    for c in rep.checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {rep.experiment}: {c['name']} = {c['value']} (band {c['band']})")
    print(f"{rep.experiment}: {'PASS' if rep.passed else 'FAIL'}")


def _sweep_job(args):
    name, raw, seed, outdir = args
    raw = cfgmod.merge(raw, {"experiment": {"seed": seed}})
    rep = run_experiment(name, cfgmod.resolve(raw), outdir)
    return seed, rep.passed, rep.scalars


def main(argv=None):
    try:
        args = _parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    level = logging.ERROR if args.quiet else (logging.DEBUG if args.verbose else logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except (cfgmod.ConfigError, GeometryError, FileNotFoundError, UsageError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def _dispatch(args):
    if args.command == "materials":
        cfg = cfgmod.load(args.config)
        sys.stdout.write(dump_tables(cfg.materials, args.tmin, args.tmax))
        return EXIT_OK
    if args.command == "geometry":
        cfg = cfgmod.load(args.config)
        sys.stdout.write(cfg.grid().dump_csv(args.which))
        return EXIT_OK
    if args.command == "verify":
        from .verify import run_all
        checks = run_all(include_engine=not args.quick)
        for c in checks:
            print(c.line())
        return EXIT_OK if all(c.passed for c in checks) else EXIT_FAIL

    if args.experiment not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {args.experiment!r}; choose from {', '.join(sorted(EXPERIMENTS))}")
    if args.command == "run":
        cfg = _load(args, args.seed)
        out = _outdir(args, args.experiment)
        rep = run_experiment(args.experiment, cfg, out)
        if not args.quiet:
            _print_report(rep)
            print(f"report: {out / 'report.json'}")
        return EXIT_OK if rep.passed else EXIT_FAIL

    # sweep
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--seeds must be comma-separated integers, got {args.seeds!r}") from None
    cfg = _load(args)
    out = _outdir(args, f"{args.experiment}-sweep")
    jobs = [(args.experiment, cfg.raw, s, out / f"seed{s}") for s in seeds]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    summary = [{"seed": s, "passed": ok, "scalars": sc} for s, ok, sc in results]
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=str))
    if not args.quiet:
        for row in summary:
            print(f"seed {row['seed']}: {'PASS' if row['passed'] else 'FAIL'}")
    return EXIT_OK if all(r["passed"] for r in summary) else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
