"""Command-line entry point: ``objloc simulate|run|sweep|export``.

Exit status is 0 on success, 2 on configuration errors and 1 on I/O errors.
"""

from __future__ import annotations

import argparse
import logging
import sys

from objloc import scenario as scenario_mod
from objloc import sensorlog
from objloc.evaluation import SWEEP_PARAMETERS, evaluate, export, sweep
from objloc.pipeline import APPROACHES, PipelineParams, get_approach, run_pipeline
from objloc.posegraph import io as graph_io
from objloc.sim import ConfigurationError

DEFAULT_SWEEPS = {
    "vartheta": [0.1, 0.2, 0.3, 0.4, 0.5],
    "omega": [1, 10, 100, 1000, 10000, 100000],
}


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", help="scenario file or shipped name (static_robot, moving_robot)")
    p.add_argument("--log", help="sensor log written by 'simulate'; settings still come from --scenario")
    p.add_argument("--seed", type=_u64, help="override the scenario's rng seed")
    p.add_argument("--vartheta", type=float, help="heading gate threshold (rad)")
    p.add_argument("--omega", type=float, help="information of accepted heading edges")


def _add_output(p: argparse.ArgumentParser, required: bool = False) -> None:
    p.add_argument("--out", required=required, help="output file")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="objloc", description="Robot-to-object localisation experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a scenario and write its sensor log")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=_u64)
    p.add_argument("--out", required=True)

    p = sub.add_parser("run", help="run approaches on a log and print error summaries")
    _add_source(p)
    p.add_argument("--approach", default="full", help=f"one of {', '.join(APPROACHES)} or 'all'")
    _add_output(p)

    p = sub.add_parser("sweep", help="sweep vartheta or omega for one approach")
    _add_source(p)
    p.add_argument("--parameter", choices=SWEEP_PARAMETERS, required=True)
    p.add_argument("--values", type=_values, help="comma-separated values (defaults to the standard grid)")
    p.add_argument("--approach", default="full")
    p.add_argument("--workers", type=int, default=1)
    _add_output(p)

    p = sub.add_parser("export", help="write the per-tick error series (and optionally the pose graph)")
    _add_source(p)
    p.add_argument("--approach", default="full")
    p.add_argument("--graph", help="also write the optimised pose graph here")
    _add_output(p, required=True)
    return parser


def _load(args) -> tuple:
    """(log, pipeline params) from --scenario/--log plus overrides."""
    if args.scenario is None and args.log is None:
        raise ConfigurationError("give --scenario, --log or both")
    sc = scenario_mod.load(args.scenario) if args.scenario is not None else None
    params = sc.pipeline if sc is not None else PipelineParams()
    if args.log is not None:
        if args.seed is not None:
            raise ConfigurationError("--seed only applies when simulating from --scenario")
        log = sensorlog.load(args.log)
    else:
        log = sc.simulate(args.seed)
    overrides = {k: getattr(args, k) for k in ("vartheta", "omega") if getattr(args, k) is not None}
    if overrides:
        try:
            params = params.replace(**overrides)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc
    return log, params


def cmd_simulate(args) -> int:
    sc = scenario_mod.load(args.scenario)
    log = sc.simulate(args.seed)
    sensorlog.save(log, args.out)
    print(f"wrote {log.ticks} ticks to {args.out}")
    return 0


def cmd_run(args) -> int:
    log, params = _load(args)
    names = list(APPROACHES) if args.approach == "all" else [get_approach(args.approach).name]
    if args.out and len(names) > 1:
        raise ConfigurationError("--out needs a single --approach")
    for name in names:
        report = evaluate(log, name, params)
        print(report)
        if args.out:
            export(report, args.out, args.format)
    return 0


def cmd_sweep(args) -> int:
    log, params = _load(args)
    values = args.values or DEFAULT_SWEEPS[args.parameter]
    table = sweep(log, args.parameter, values, args.approach, params, workers=args.workers)
    for _, report in table.rows:
        print(report)
    if args.out:
        export(table, args.out, args.format)
    return 0


def cmd_export(args) -> int:
    log, params = _load(args)
    approach = get_approach(args.approach)
    result = run_pipeline(log, approach, params)
    report = evaluate(log, approach, params, result=result)
    export(report, args.out, args.format)
    if args.graph:
        graph_io.save(result.graph, args.graph)
    print(report)
    return 0


COMMANDS = {"simulate": cmd_simulate, "run": cmd_run, "sweep": cmd_sweep, "export": cmd_export}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"objloc: configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"objloc: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
