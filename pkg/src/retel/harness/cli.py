"""Command line entry point: one subcommand per experiment."""

from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENTS, ConfigError, ExperimentConfig, load_config
from .experiments import RUNNERS
from .small_area import IngestionError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INGEST = 3




def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="retel", description="Run a simulation study and write its results as CSV.")
    sub = p.add_subparsers(dest="experiment", required=True, metavar="experiment")
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run the {name} study")
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--seed", type=int, help="64-bit seed")
        sp.add_argument("--threads", type=int, help="worker threads")
        sp.add_argument("--reps", type=int, help="replications")
        sp.add_argument("--out", help="output CSV path (default: config out_path, else stdout)")
        if name == "small_area":
            sp.add_argument("--data", help="input CSV with columns y,x1,x2")
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config, args.experiment) if args.config else ExperimentConfig.default(args.experiment)
    over = dict(seed=args.seed, threads=args.threads, reps=args.reps, out_path=args.out)
    if getattr(args, "data", None):
        over["data_path"] = args.data
    try:
        return cfg.with_overrides(**over)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        table = RUNNERS[cfg.experiment](cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except IngestionError as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INGEST
    text = table.to_csv()
    if cfg.out_path:
        try:
            with open(cfg.out_path, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as e:
            print(f"cannot write {cfg.out_path}: {e}", file=sys.stderr)
            return EXIT_CONFIG
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
