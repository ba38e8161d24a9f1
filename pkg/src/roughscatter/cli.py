"""Command-line entry point.

Exit codes: 0 success, 1 a validation suite failed, 2 invalid
configuration, 3 resolution check failed, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import ensemble, io
from .interface import realization_seed, synthesize
from .medium import DomainError
from .snell import SnellQuery, generalized_angle, small_roughness_expansion
from .solver import FootprintError, ResolutionError, screen_grid

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_RESOLUTION, EXIT_IO = 0, 1, 2, 3, 4


def _load(args) -> ensemble.ExperimentConfig:
    if args.config:
        cfg = ensemble.ExperimentConfig.load(args.config)
    else:
        cfg = ensemble.ExperimentConfig.from_dict(ensemble.preset(args.preset or "default"))
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _cmd_run(args) -> int:
    cfg = _load(args)
    man = ensemble.run(cfg, args.out, jobs=args.jobs)
    print(json.dumps({"outputs": sorted(man.outputs), "timing": man.timing}, indent=2))
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = _load(args)
    report = ensemble.validate(cfg, include_solver=not args.skip_solver)
    out = Path(args.out)
    for name, suite in report.items():
        if isinstance(suite, dict):
            io.write_json(out / f"{name}.json", suite)
            print(f"{name:12s} {'PASS' if suite['passed'] else 'FAIL'}")
    io.write_json(out / "summary.json", {k: v["passed"] for k, v in report.items() if isinstance(v, dict)})
    return EXIT_OK if report["passed"] else EXIT_FAILED


def _cmd_snell(args) -> int:
    cfg = _load(args)
    ratio = args.ratio if args.ratio is not None else cfg.regime.roughness_ratio
    q = SnellQuery(args.side, tuple(args.p), ratio, cfg.medium)
    try:
        theta = generalized_angle(q)
    except DomainError as exc:
        print(json.dumps({"propagating": False, "reason": str(exc)}))
        return EXIT_OK
    out = {"propagating": True, "theta": theta, "theta_deg": float(np.degrees(theta))}
    if any(cfg.medium.k0):
        out["first_order"] = small_roughness_expansion(q).theta_approx
    print(json.dumps(out, indent=2))
    return EXIT_OK


def _cmd_scattering(args) -> int:
    cfg = _load(args)
    opts = {k: v for k, v in (("v", args.v), ("omega", args.omega), ("n", args.n), ("dp", args.dp)) if v is not None}
    table, scalars = ensemble.scattering_tables(cfg, opts)
    out = Path(args.out)
    io.write_csv(out / "scattering_distribution.csv", table)
    io.write_json(out / "scattering_distribution.json", scalars)
    print(json.dumps(scalars, indent=2))
    return EXIT_OK


def _cmd_synthesize(args) -> int:
    cfg = _load(args)
    grid = screen_grid(cfg.profile.grid, cfg.regime)
    out = Path(args.out)
    for i in range(args.count):
        real = synthesize(cfg.model, grid, realization_seed(cfg.seed, args.start + i))
        io.write_realization(out / f"interface_{args.start + i:05d}.grid", real)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="roughscatter", description="Pulse scattering by a randomly rough interface.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        g = p.add_mutually_exclusive_group()
        g.add_argument("--config", help="experiment JSON file")
        g.add_argument("--preset", choices=sorted(ensemble.PRESETS), help="built-in configuration")
        p.add_argument("--seed", type=int, help="override the master seed")
        if out:
            p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("run", help="run the configured pipelines")
    common(p)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("validate", help="property suites of every module")
    common(p)
    p.add_argument("--skip-solver", action="store_true", help="omit the simulator suite")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("snell", help="generalized scattering angle for one slowness")
    common(p, out=False)
    p.add_argument("--side", choices=["reflection", "transmission"], default="reflection")
    p.add_argument("--p", type=float, nargs=2, default=[0.0, 0.0], metavar=("P1", "P2"))
    p.add_argument("--ratio", type=float, help="wavelength over correlation length")
    p.set_defaults(func=_cmd_snell)

    p = sub.add_parser("scattering-dist", help="tabulate the scattering distribution")
    common(p)
    p.add_argument("--v", type=float, help="vertical slowness factor (default from side)")
    p.add_argument("--omega", type=float, help="angular frequency (default carrier)")
    p.add_argument("--n", type=int, help="grid points per axis")
    p.add_argument("--dp", type=float, help="slowness spacing")
    p.set_defaults(func=_cmd_scattering)

    p = sub.add_parser("synthesize", help="write interface realizations as grid files")
    common(p)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--start", type=int, default=0, help="first realization index")
    p.set_defaults(func=_cmd_synthesize)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ensemble.ConfigError, DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ResolutionError, FootprintError) as exc:
        print(f"resolution failure: {exc}", file=sys.stderr)
        return EXIT_RESOLUTION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
