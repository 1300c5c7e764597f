"""Command line entry point: run, convergence, timestep, stitch, compare."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .bench import (
    CONVERGENCE_HEADER,
    STITCH_HEADER,
    TIMESTEP_HEADER,
    compare_runs,
    convergence_sweep,
    run_scenario,
    stitch_experiment,
    timestep_sweep,
)
from .config import load_config, with_overrides
from .const import METHODS
from .errors import FluxpointError

_LOGGER = logging.getLogger(__name__)


def _float_list(text: str) -> list[float]:
    try:
        values = [float(item) for item in text.split(",") if item.strip()]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from err
    if not values:
        raise argparse.ArgumentTypeError("expected at least one value")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fluxpoint", description="Flux-conserving meshfree solver benchmarks"
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    commands = parser.add_subparsers(dest="command", required=True)

    def scenario_command(name: str, help_text: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument("config", type=Path, help="scenario config (INI)")
        sub.add_argument("--out", help="output directory")
        sub.add_argument("--full-scale", action="store_true", help="square cylinder: Re=10000, t_end=50, h=0.4")
        return sub

    run = scenario_command("run", "run one scenario")
    run.add_argument("--method", choices=METHODS)
    run.add_argument("--h", type=float, help="smoothing length")
    run.add_argument("--t-end", type=float, help="end time (s)")

    convergence = scenario_command("convergence", "h-refinement sweep, both methods")
    convergence.add_argument("--h", type=_float_list, required=True, help="e.g. 0.25,0.125,0.0625")
    convergence.add_argument("--workers", type=int, help="worker processes")

    timestep = scenario_command("timestep", "fixed time-step sweep, both methods")
    timestep.add_argument("--dt", type=_float_list, required=True, help="e.g. 0.1,0.05,0.025")
    timestep.add_argument("--h", type=float, help="smoothing length")
    timestep.add_argument("--workers", type=int, help="worker processes")

    stitch = scenario_command("stitch", "sphere cell stitching error over beta")
    stitch.add_argument("--beta", type=_float_list, default=[0.5, 0.55, 0.6, 0.65, 0.7])

    compare = commands.add_parser("compare", help="side-by-side summary metrics of two runs")
    compare.add_argument("dir_a", type=Path)
    compare.add_argument("dir_b", type=Path)
    return parser


def _print_table(header: Sequence[str], rows: Sequence[Sequence]) -> None:
    print(",".join(header))
    for row in rows:
        print(",".join("" if value is None else str(value) for value in row))


def _load(args: argparse.Namespace, **run_overrides):
    config = load_config(args.config)
    run = {"out_dir": args.out, **run_overrides}
    return with_overrides(config, run=run, full_scale=args.full_scale)


def _dispatch(args: argparse.Namespace) -> None:
    if args.command == "run":
        config = _load(args, method=args.method, h=args.h, t_end=args.t_end)
        artifacts = run_scenario(config)
        for key, value in artifacts.metrics.items():
            print(f"{key}={value}")
    elif args.command == "convergence":
        config = _load(args)
        _print_table(CONVERGENCE_HEADER, convergence_sweep(config, args.h, args.workers))
    elif args.command == "timestep":
        config = _load(args, h=args.h)
        _print_table(TIMESTEP_HEADER, timestep_sweep(config, args.dt, args.workers))
    elif args.command == "stitch":
        config = _load(args)
        _print_table(STITCH_HEADER, stitch_experiment(config, args.beta))
    elif args.command == "compare":
        _print_table(("metric", "a", "b", "ratio"), compare_runs(args.dir_a, args.dir_b))


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        _dispatch(args)
    except FluxpointError as err:
        line = {"error": type(err).__name__, "message": str(err), **err.context()}
        print(json.dumps(line), file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001
        _LOGGER.exception("Unexpected failure")
        print(json.dumps({"error": type(err).__name__, "message": str(err)}), file=sys.stderr)
        return 1
    return 0
