"""Command-line interface.

Verbs: run, sweep, oracle, validate. Exit codes: 0 success, 1 validation
error, 2 engine non-convergence, 3 oracle cap exceeded.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .baselines import brute_force_optimum
from .errors import (
    InstanceTooLargeError,
    ScenarioError,
    TerminationCapError,
)
from .experiment import run_experiment, sweep
from .matching import MatchingClass, global_satisfaction
from .report import (
    render_run_figure,
    render_sweep_figure,
    write_metrics_csv,
    write_summary_json,
    write_sweep_csv,
)
from .scenario import load_scenario, realize_market

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NONCONVERGENCE = 2
EXIT_ORACLE_CAP = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relaymatch",
        description="Matching-game relay selection experiments for UAV networks",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("scenario", type=Path, help="scenario YAML file")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override scenario seed")
        p.add_argument(
            "--engine",
            type=int,
            choices=(1, 2, 3),
            default=None,
            help="override matching class",
        )

    run_p = sub.add_parser("run", help="run one experiment, write CSV/summary/figure")
    common(run_p)

    sweep_p = sub.add_parser("sweep", help="Class 2 vs Class 1 sweep over network sizes")
    common(sweep_p)
    sweep_p.add_argument("--sizes", type=str, default="5,10,15,20",
                         help="comma-separated source counts")
    sweep_p.add_argument("--reps", type=int, default=30, help="replications per size")

    oracle_p = sub.add_parser("oracle", help="exhaustive optimum for a scenario")
    common(oracle_p)

    val_p = sub.add_parser("validate", help="check a scenario file against the schema")
    val_p.add_argument("scenario", type=Path)
    return parser


def _load(args):
    scenario = load_scenario(args.scenario)
    if getattr(args, "seed", None) is not None:
        scenario = scenario.with_seed(args.seed)
    if getattr(args, "engine", None) is not None:
        scenario = scenario.with_class(MatchingClass(args.engine))
    return scenario


def _out_dir(args, scenario) -> Path:
    out = args.out if args.out is not None else Path("runs") / scenario.name
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    scenario = _load(args)
    result = run_experiment(scenario)
    out = _out_dir(args, scenario)
    write_metrics_csv(result.records, out / "metrics.csv")
    write_summary_json(result.summary(), out / "summary.json")
    render_run_figure(result.records, out / "satisfaction_trace.png", title=scenario.name)
    final = result.records[-1]
    print(
        f"{scenario.name}: {len(result.records)} iterations, "
        f"final satisfaction {final.global_satisfaction:.4f}, "
        f"{final.matched_count} matched -> {out}"
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    scenario = _load(args)
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    rows = sweep(scenario, sizes, args.reps)
    out = _out_dir(args, scenario)
    write_sweep_csv(rows, out / "sweep.csv")
    render_sweep_figure(rows, out / "sweep_satisfaction.png", title=scenario.name)
    for r in rows:
        print(
            f"size={r.size:3d} engine={r.engine} "
            f"mean={r.mean_satisfaction:.4f} std={r.std_satisfaction:.4f}"
        )
    return EXIT_OK


def cmd_oracle(args) -> int:
    scenario = _load(args)
    market = realize_market(scenario)
    oracle = brute_force_optimum(market, scenario.matching_class)
    out = _out_dir(args, scenario)
    write_summary_json(
        {
            "scenario": scenario.name,
            "seed": scenario.seed,
            "matching_class": int(scenario.matching_class),
            "optimum": oracle.optimum,
            "enumerated": oracle.enumerated,
            "assignment": {
                str(s): (list(a) if a is not None else None)
                for s, a in sorted(oracle.matching.assignment.items())
            },
        },
        out / "oracle.json",
    )
    print(
        f"{scenario.name}: optimum satisfaction {oracle.optimum:.6f} "
        f"over {oracle.enumerated} assignments -> {out}"
    )
    return EXIT_OK


def cmd_validate(args) -> int:
    load_scenario(args.scenario)
    print(f"{args.scenario}: OK")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": cmd_run,
        "sweep": cmd_sweep,
        "oracle": cmd_oracle,
        "validate": cmd_validate,
    }
    try:
        return handlers[args.verb](args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except TerminationCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except InstanceTooLargeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ORACLE_CAP


if __name__ == "__main__":
    sys.exit(main())
