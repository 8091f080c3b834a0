"""Command line entry point: ``hybridkp {generate,run,score,ablate}``.

Angles on the command line and in config files are degrees.  Failures print
one JSON line ``{"error": <type>, "message": <text>}`` to stderr and exit
non-zero (2 for usage errors, 1 otherwise).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from . import __version__
from ._accel import backend
from .harness import (
    MODES,
    READOUTS,
    ExperimentConfig,
    emit_ablation,
    emit_report,
    format_table,
    run_ablation,
    run_experiment,
    score_dataset,
    write_dataset,
)

OUTPUT_ENV = "HYBRIDKP_OUTPUT_DIR"
DEFAULT_OUTPUT = "hybridkp-out"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _default_out():
    return os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT)


def _add_config_flags(p):
    g = p.add_argument_group("experiment")
    g.add_argument("--config", type=Path, help="JSON config file; flags override it")
    g.add_argument("--categories", help="comma separated category names")
    g.add_argument("--instances", type=int, dest="instances_per_category", help="instances per category")
    g.add_argument("--resolution", type=int, nargs=2, metavar=("H", "W"), help="map height and width")
    g.add_argument("--sigma", type=float, help="Gaussian peak width in pixels")
    g.add_argument("--star-noise", type=float)
    g.add_argument("--canview-noise", type=float)
    g.add_argument("--depth-noise", type=float)
    g.add_argument("--azimuth-range", type=float, nargs=2, metavar=("LO", "HI"), help="degrees")
    g.add_argument("--elevation-range", type=float, nargs=2, metavar=("LO", "HI"), help="degrees")
    g.add_argument("--in-plane-range", type=float, nargs=2, metavar=("LO", "HI"), help="degrees")
    g.add_argument("--seed", type=int)
    g.add_argument("--mode", choices=MODES)
    g.add_argument("--readout", choices=READOUTS)
    g.add_argument("--alpha", type=float, help="PCK threshold fraction")
    g.add_argument("--workers", type=int, default=1)


def config_from_args(args) -> ExperimentConfig:
    base = {}
    if args.config is not None:
        base = json.loads(Path(args.config).read_text(encoding="utf-8"))
    cfg = ExperimentConfig.from_dict(base)
    changes = {}
    for name in (
        "instances_per_category",
        "sigma",
        "star_noise",
        "canview_noise",
        "depth_noise",
        "seed",
        "mode",
        "readout",
        "alpha",
    ):
        value = getattr(args, name, None)
        if value is not None:
            changes[name] = value
    if args.categories:
        changes["categories"] = tuple(c.strip() for c in args.categories.split(",") if c.strip())
    if args.resolution:
        changes["height"], changes["width"] = args.resolution
    for name in ("azimuth_range", "elevation_range", "in_plane_range"):
        value = getattr(args, name)
        if value is not None:
            changes[name] = tuple(math.radians(x) for x in value)
    return cfg.replace(**changes) if changes else cfg


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hybridkp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({backend()})")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic dataset (templates, annotations, maps)")
    _add_config_flags(p)
    p.add_argument("--out", type=Path, default=None, help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")

    p = sub.add_parser("run", help="run one synthetic experiment and write a report")
    _add_config_flags(p)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--format", choices=("csv", "table", "both"), default="both")

    p = sub.add_parser("score", help="decode and score a dataset written by 'generate'")
    p.add_argument("data", type=Path)
    p.add_argument("--pnp", action="store_true", help="align without DepthMap (weak-perspective PnP)")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--subpixel", action="store_true", help="quadratic peak refinement")
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--format", choices=("csv", "table", "both"), default="both")

    p = sub.add_parser("ablate", help="run every mode on matched seeds and tabulate")
    _add_config_flags(p)
    p.add_argument("--modes", default=",".join(MODES))
    p.add_argument("--out", type=Path, default=None)
    return parser


def _formats(name):
    return ("csv", "table") if name == "both" else (name,)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        out = Path(args.out) if args.out is not None else Path(_default_out())
        if args.command == "generate":
            cfg = config_from_args(args)
            write_dataset(cfg, out)
            print(f"wrote {cfg.instances_per_category * len(cfg.categories)} instances to {out}")
        elif args.command == "run":
            report = run_experiment(config_from_args(args), workers=args.workers)
            emit_report(report, out, _formats(args.format))
            sys.stdout.write(format_table(report.summary))
        elif args.command == "score":
            report = score_dataset(args.data, use_depth=not args.pnp, alpha=args.alpha, subpixel=args.subpixel)
            emit_report(report, out, _formats(args.format))
            sys.stdout.write(format_table(report.summary))
        elif args.command == "ablate":
            modes = [m.strip() for m in args.modes.split(",") if m.strip()]
            bad = [m for m in modes if m not in MODES]
            if bad:
                raise UsageError(f"unknown modes {bad}")
            reports = run_ablation(config_from_args(args), modes, workers=args.workers)
            for mode, rep in reports.items():
                emit_report(rep, out / mode)
            emit_ablation(reports, out)
            sys.stdout.write((out / "ablation.txt").read_text(encoding="utf-8"))
        return 0
    except UsageError as exc:
        print(json.dumps({"error": "usage", "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as a machine-readable line
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
