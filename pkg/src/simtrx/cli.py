"""Command line entry point: ``simtrx run|validate|limits <scenario.yaml>``.

Exit codes: 0 success, 1 validation failed, 2 configuration error,
3 numerical failure at some sweep point, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .harness import emit_outputs, evaluate_limits, run_montecarlo_validation, run_scenario, write_limits
from .scenario import ConfigError, load_scenario

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simtrx", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run every sweep point and write CSV/JSON outputs")
    run.add_argument("scenario", type=Path)
    run.add_argument("--out", type=Path, help="output directory (default: the scenario's output.dir)")
    run.add_argument("--threads", type=int, help="worker threads (default: $SIMTRX_THREADS or 1)")
    run.add_argument("--seed", type=int, help="override the scenario seed")

    val = sub.add_parser("validate", help="Monte Carlo check of the closed-form channel statistics")
    val.add_argument("scenario", type=Path)
    val.add_argument("--samples", type=int, help="number of phase-error draws")
    val.add_argument("--threads", type=int)

    lim = sub.add_parser("limits", help="high-power and element-aligned rate limits")
    lim.add_argument("scenario", type=Path)
    lim.add_argument("--out", type=Path, help="write limits.csv into this directory")
    return p


def _run(args) -> int:
    scenario = load_scenario(args.scenario)
    record = run_scenario(scenario, threads=args.threads, seed=args.seed)
    out = args.out if args.out is not None else Path(scenario.output_dir)
    emit_outputs(record, out)
    for p in record.points:
        print(f"point {p.index} {p.assignment} {p.status} R_avg={p.R_avg:.6g}")
    print(f"wrote {out}")
    if record.failed:
        for p in record.failed:
            print(f"point {p.index} failed: {p.error}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _validate(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.samples is not None and args.samples < 1000:
        raise ConfigError("--samples must be at least 1000", "samples")
    report = run_montecarlo_validation(scenario, args.samples, threads=args.threads)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK if report.passed else EXIT_VALIDATION


def _limits(args) -> int:
    scenario = load_scenario(args.scenario)
    results = evaluate_limits(scenario)
    for r in results:
        print(f"point {r.index} {r.assignment} {r.status} R_avg={r.R_avg:.6g} "
              f"high_snr={r.high_snr:.6g} zero_distance={r.zero_distance:.6g}")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        params = [p for ax in scenario.sweep for p in ax.parameters]
        write_limits(results, params, args.out / "limits.csv")
    return EXIT_NUMERICAL if any(r.status != "ok" for r in results) else EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handler = {"run": _run, "validate": _validate, "limits": _limits}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
