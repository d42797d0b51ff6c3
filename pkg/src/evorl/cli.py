"""Command line entry point: ``evorl run`` and ``evorl report``.

Exit codes: 0 success, 1 configuration error, 2 runtime fault,
3 unsolved when ``--require-solved`` was given.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .errors import ConfigError, EvoRLError, InvalidArgumentError, SchemaError
from .harness import PRESETS, load_config, report, run_suite

EXIT_OK, EXIT_CONFIG, EXIT_FAULT, EXIT_UNSOLVED = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which would collide with runtime faults
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="evorl", description="Evolve behavior-tree instincts on top of RL learners.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a multi-trial suite")
    run.add_argument("--config", help="JSON config file; flags override its values")
    run.add_argument("--preset", choices=sorted(PRESETS))
    run.add_argument("--env")
    run.add_argument("--mode", choices=["evo-rl", "ea-only", "rl-only"])
    run.add_argument("--algo", help="q or dqn")
    run.add_argument("--fraction", type=float, help="share of rewardless states")
    run.add_argument("--seed", type=int, help="master seed (overrides EVORL_SEED)")
    run.add_argument("--trials", type=int)
    run.add_argument("--budget", type=int)
    run.add_argument("--generations", type=int)
    run.add_argument("--out")
    run.add_argument("--parallel-trials", type=int, dest="parallel_trials")
    run.add_argument("--workers", type=int, help="processes per trial for agent development")
    run.add_argument("--allow-any-fraction", action="store_true", default=None, dest="allow_any_fraction")
    run.add_argument("--population-stddev", action="store_true", default=None, dest="population_stddev")
    run.add_argument("--checkpoint", action="store_true", default=None, help="write per-generation checkpoints")
    run.add_argument("--require-solved", action="store_true", help="exit 3 unless the median trial solved")

    rep = sub.add_parser("report", help="aggregate suite directories into a table")
    rep.add_argument("dirs", nargs="+")
    rep.add_argument("--out", help="also write report.txt and report.csv here")
    return p


def _seed_override(args) -> int | None:
    if args.seed is not None:
        return args.seed
    env_seed = os.environ.get("EVORL_SEED")
    if env_seed is None or env_seed == "":
        return None
    try:
        return int(env_seed)
    except ValueError:
        raise ConfigError(f"EVORL_SEED must be an integer, got {env_seed!r}") from None


def _cmd_run(args) -> int:
    cfg = load_config(
        args.config,
        preset=args.preset,
        env=args.env,
        mode=args.mode,
        algo=args.algo,
        fraction=args.fraction,
        seed=_seed_override(args),
        trials=args.trials,
        budget=args.budget,
        generations=args.generations,
        out=args.out,
        parallel_trials=args.parallel_trials,
        workers=args.workers,
        allow_any_fraction=args.allow_any_fraction,
        population_stddev=args.population_stddev,
        checkpoint=args.checkpoint,
    )
    summary = run_suite(cfg)
    print(f"{summary.label} {summary.env} {summary.fraction:.0%}: {summary.table_row()}")
    print(f"solved {summary.solved_count}/{summary.trials} trials; artifacts in {cfg.out}")
    if args.require_solved and summary.median_solved_at is None:
        return EXIT_UNSOLVED
    return EXIT_OK


def _cmd_report(args) -> int:
    rep = report(args.dirs, args.out)
    sys.stdout.write(rep.text())
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_report(args)
    except (ConfigError, InvalidArgumentError, SchemaError) as exc:
        print(f"evorl: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, EvoRLError) as exc:
        print(f"evorl: {exc}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
