"""Command line entry point.

Exit codes: 0 success, 2 config error, 3 data error, 4 fit error, 5 I/O or
plotting error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError, IstrateError
from .pipeline import RunConfig, StageError, run_pipeline

COMMANDS = {
    "synth": "generate the synthetic panel only",
    "simulate": "compute IST indemnities",
    "fit": "estimate the power index and fit every model on all rows",
    "evaluate": "run the year-to-year out-of-sample experiment",
    "economics": "premiums, affordability, fairness and fund balances",
    "run": "every stage, then the plots",
    "plots": "draw the figures from an existing report directory",
}


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="istrate", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMANDS.items():
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", help="JSON run config (default: bundled demo)")
        cmd.add_argument("--seed", type=int, help="override the config seed")
        cmd.add_argument("--jobs", type=int, default=1,
                         help="worker processes for the experiment cells")
        cmd.add_argument("--out", help="output directory (overrides the config)")
        cmd.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        config = RunConfig.load(args.config) if args.config else RunConfig.demo()
        config = config.with_overrides(seed=args.seed, output=args.out)
        pipe = run_pipeline(config, (args.command,), args.jobs)
    except StageError as exc:
        print(f"istrate: {exc}", file=sys.stderr)
        return exc.exit_code
    except IstrateError as exc:
        print(f"istrate: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"istrate: {exc}", file=sys.stderr)
        return 5
    print(f"wrote {len(set(pipe.written))} files to {pipe.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
