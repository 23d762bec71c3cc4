"""Command-line entry point: ``codedcache run|validate <config>``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import experiments
from .errors import ConfigError


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="codedcache", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run every experiment in a config file")
    run.add_argument("config")
    run.add_argument("--out", default="results", help="output directory (default: results)")
    run.add_argument("--seed", type=_u64, default=None, help="override the config seed")
    run.add_argument("--threads", type=_positive, default=1, help="simulator worker processes")

    val = sub.add_parser("validate", help="check a config file without running it")
    val.add_argument("config")
    val.add_argument("--seed", type=_u64, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            name, seed, specs, _ = experiments.load_config(args.config, args.seed)
            print(f"{args.config}: ok ({len(specs)} experiments, run '{name}', seed {seed})")
            for spec in specs:
                print(f"  {spec.name}: {spec.kind} over {spec.sweep_param} ({len(spec.sweep_values)} points)")
            return 0
        manifest = experiments.run_config(args.config, args.out, seed=args.seed, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for exp in manifest["experiments"]:
        print(f"{exp['csv']}: {exp['rows']} rows in {exp['wall_time_s']:.2f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
