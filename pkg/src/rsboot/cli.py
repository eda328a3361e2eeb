"""Batch command-line front end.

Subcommands: ``analyze`` (full pipeline: report, replicate CSV, plots),
``fit`` (surfaces only), ``optimize`` (no bootstrap).  Options can also
come from a TOML or JSON config file; explicit flags win.  Each pipeline
stage maps to a distinct nonzero exit code so batch callers can tell
where a run died.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import RsbootError
from .report import (LEVEL_ANALYZE, LEVEL_FIT, LEVEL_OPTIMIZE, RunConfig,
                     StageFailure, execute, write_replicates_csv)

EXIT_CODES = {
    "config": 2,
    "parse": 3,
    "summarize": 4,
    "fit": 5,
    "optimize": 6,
    "bootstrap": 7,
    "regions": 8,
    "io": 9,
    "plots": 10,
}


def _parse_box(text: str) -> tuple[tuple[float, float], ...]:
    """``lo:hi`` pairs, comma separated; a single pair applies to every
    factor."""
    bounds = []
    for part in text.split(","):
        pieces = part.split(":")
        if len(pieces) != 2:
            raise ValueError(f"box axis {part!r} is not of the form lo:hi")
        bounds.append((float(pieces[0]), float(pieces[1])))
    return tuple(bounds)


def _parse_coding(text: str) -> tuple[tuple[float, float], ...]:
    """``center:half_range`` pairs, comma separated, one per factor."""
    pairs = []
    for part in text.split(","):
        pieces = part.split(":")
        if len(pieces) != 2:
            raise ValueError(
                f"coding entry {part!r} is not of the form center:half_range")
        pairs.append((float(pieces[0]), float(pieces[1])))
    return tuple(pairs)


def _load_config_file(path: str) -> dict:
    raw = Path(path).read_bytes()
    if path.endswith(".json"):
        return json.loads(raw)
    try:
        import tomllib  # Python >= 3.11
    except ImportError:
        import tomli as tomllib
    return tomllib.loads(raw.decode("utf-8"))


def _add_common_options(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="TOML or JSON file with defaults "
                                      "for any option (flags win)")
    sub.add_argument("--data", help="design CSV: header x1,...,xk,y, one "
                                    "row per replicate observation")
    sub.add_argument("--target", type=float, help="target value T0")
    sub.add_argument("--box", type=_parse_box,
                     help="factor box as lo:hi[,lo:hi...]; one pair "
                          "applies to all factors (default -1:1)")
    sub.add_argument("--mode", choices=["squared_loss", "dual_response", "both"],
                     help="optimization mode; dual_response/both add the "
                          "dual-response solve to the squared-loss one")
    sub.add_argument("--out", help="output directory (default .)")
    sub.add_argument("--coding",
                     type=_parse_coding,
                     help="natural-unit coding as center:half_range per "
                          "factor; omit when the data is already coded")
    sub.add_argument("--dual-tol", type=float, dest="dual_tol",
                     help="dual-response target tolerance (default 1e-3)")


def _add_bootstrap_options(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--alpha", type=float, help="joint error rate (default 0.10)")
    sub.add_argument("--B", type=int, help="outer bootstrap replicates (default 999)")
    sub.add_argument("--I", type=int, help="inner replicates per outer sample "
                                           "(default 100)")
    sub.add_argument("--seed", type=int, help="root RNG seed (default 0)")
    sub.add_argument("--no-inner", action="store_true",
                     help="skip the inner double bootstrap (no ellipse)")
    sub.add_argument("--emit", help="comma list from report,replicates,plots "
                                    "(default all)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rsboot",
        description="Dual response-surface optimization with bootstrap "
                    "joint confidence regions.")
    subs = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
            ("analyze", "full pipeline: fit, optimize, bootstrap, regions"),
            ("optimize", "fit the surfaces and locate the optimum"),
            ("fit", "fit the mean and log-variance surfaces only")):
        sub = subs.add_parser(name, help=helptext)
        _add_common_options(sub)
        if name == "analyze":
            _add_bootstrap_options(sub)
    return parser


def _build_run_config(args: argparse.Namespace) -> RunConfig:
    settings: dict = {}
    if args.config:
        settings.update(_load_config_file(args.config))
    if "box" in settings and settings["box"] is not None:
        settings["box"] = tuple(tuple(float(v) for v in b)
                                for b in settings["box"])
    if "coding" in settings and settings["coding"] is not None:
        settings["coding"] = tuple(tuple(float(v) for v in c)
                                   for c in settings["coding"])
    if "modes" in settings:
        settings["modes"] = tuple(settings["modes"])
    if "emit" in settings:
        settings["emit"] = tuple(settings["emit"])

    def override(key, value):
        if value is not None:
            settings[key] = value

    override("data_path", args.data)
    override("target", args.target)
    override("box", args.box)
    override("out_dir", args.out)
    override("coding", args.coding)
    override("dual_equality_tol", args.dual_tol)
    if args.mode is not None:
        settings["modes"] = (("squared_loss",) if args.mode == "squared_loss"
                             else ("squared_loss", "dual_response"))
    if getattr(args, "alpha", None) is not None:
        settings["alpha"] = args.alpha
    if getattr(args, "B", None) is not None:
        settings["B"] = args.B
    if getattr(args, "I", None) is not None:
        settings["I"] = args.I
    if getattr(args, "seed", None) is not None:
        settings["seed"] = args.seed
    if getattr(args, "no_inner", False):
        settings["run_inner"] = False
    if getattr(args, "emit", None):
        settings["emit"] = tuple(p.strip() for p in args.emit.split(","))

    if "data_path" not in settings:
        raise StageFailure("config", RsbootError(
            "no input data given; pass --data or set data_path in the "
            "config file"))
    if "target" not in settings:
        raise StageFailure("config", RsbootError(
            "no target given; pass --target or set target in the config "
            "file"))
    try:
        return RunConfig(**settings)
    except TypeError as exc:
        raise StageFailure("config", RsbootError(str(exc))) from exc
    except RsbootError as exc:
        raise StageFailure("config", exc) from exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = {"analyze": LEVEL_ANALYZE, "optimize": LEVEL_OPTIMIZE,
             "fit": LEVEL_FIT}[args.command]
    try:
        config = _build_run_config(args)
        report, ensemble = execute(config, level)
        out_dir = Path(config.out_dir)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            if level != LEVEL_ANALYZE or "report" in config.emit:
                (out_dir / "report.json").write_text(report.to_json())
                print(f"report: {out_dir / 'report.json'}")
            if level == LEVEL_ANALYZE and "replicates" in config.emit:
                write_replicates_csv(ensemble, out_dir / "replicates.csv")
                print(f"replicates: {out_dir / 'replicates.csv'}")
        except OSError as exc:
            raise StageFailure("io", exc) from exc
        if level == LEVEL_ANALYZE and "plots" in config.emit:
            try:
                from .plots import emit_plots
                for path in emit_plots(report, ensemble, out_dir):
                    print(f"plot: {path}")
            except StageFailure:
                raise
            except Exception as exc:
                raise StageFailure("plots", exc) from exc
    except StageFailure as failure:
        print(f"error [{failure.stage}]: {failure.error}", file=sys.stderr)
        return EXIT_CODES.get(failure.stage, 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
