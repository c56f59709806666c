"""Command-line interface.

Three subcommands:

* ``orbitgauge run <experiment>``   run one experiment and write artifacts
* ``orbitgauge list``               show registered experiments
* ``orbitgauge verify``             run acceptance criteria

``run`` exits nonzero when the run fails or any comparison misses its
target; ``verify`` exits nonzero when any selected criterion fails.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError
from .experiments import (
    ExperimentConfig,
    list_experiments,
    run_experiment,
    verify,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orbitgauge",
        description="Sampling experiments for gauge-corrected stationary densities "
        "and symmetry-induced implicit bias.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment")
    run_p.add_argument("experiment", help="experiment name (see 'orbitgauge list')")
    run_p.add_argument("--config", help="JSON config file; CLI flags override it")
    run_p.add_argument("--seed", type=int, help="dataset and sampler seed")
    run_p.add_argument("--out", help="output directory (default runs/<experiment>)")
    run_p.add_argument("--steps", type=int, help="override total sampler steps")
    run_p.add_argument("--emit-samples", action="store_true",
                       help="also write per-snapshot samples.csv")

    sub.add_parser("list", help="list registered experiments")

    ver_p = sub.add_parser("verify", help="run acceptance criteria")
    group = ver_p.add_mutually_exclusive_group()
    group.add_argument("--all", action="store_true", help="run the full suite (default)")
    group.add_argument("--experiment", help="run only the criteria tied to one experiment")
    ver_p.add_argument("--tol-scale", type=float, default=1.0,
                       help="multiply every tolerance (default 1.0)")
    return parser


def _cmd_run(args) -> int:
    if args.config:
        config = ExperimentConfig.from_json(args.config)
        if config.experiment != args.experiment:
            raise ConfigError(
                f"config file is for {config.experiment!r}, not {args.experiment!r}"
            )
    else:
        config = ExperimentConfig(experiment=args.experiment)
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.output_dir = args.out
    if args.steps is not None:
        config.dynamics = {**config.dynamics, "total_steps": args.steps}
    if args.emit_samples:
        config.emit_samples = True

    report = run_experiment(config)
    out = config.output_dir or f"runs/{config.experiment}"
    if report.status != "ok":
        print(f"{config.experiment}: FAILED ({report.error}); report in {out}/report.json")
        return 1
    for comp in report.comparisons:
        mark = "pass" if comp["passed"] else "FAIL"
        print(f"[{mark}] {comp['metric']} = {report.metrics[comp['metric']]:.6g} "
              f"{comp['kind']} {comp['target']:.6g}")
    print(f"report: {out}/report.json ({report.wall_clock_seconds:.1f}s)")
    return 0 if report.passed else 1


def _cmd_list(args) -> int:
    for entry in list_experiments():
        variants = ", ".join(entry.variants)
        print(f"{entry.name:<18} model={entry.model_kind:<18} variants: {variants}")
        print(f"{'':<18} {entry.description}")
    return 0


def _cmd_verify(args) -> int:
    selector = args.experiment if args.experiment else "all"
    _, all_passed = verify(selector=selector, tol_scale=args.tol_scale)
    return 0 if all_passed else 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "list":
            return _cmd_list(args)
        return _cmd_verify(args)
    except (ConfigError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
