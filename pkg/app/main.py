import argparse
import sys
from typing import Optional

from .core.exceptions import HyperwaveError
from .core.logging import configure_logging


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hyperwave",
        description="Hypergraph wavelet + diffusion recommender: train, evaluate, ablate, sweep",
    )
    parser.add_argument("--log-level", help="Override HYPERWAVE_LOG_LEVEL")
    parser.add_argument("--log-json", action="store_true", help="Emit JSON log records")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Register commands
    from .api import ablate, evaluate, gradcheck, sweep, synth, train

    for command in (train, evaluate, ablate, sweep, gradcheck, synth):
        command.register(subparsers)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    """Run one command; returns the process exit code."""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, True if args.log_json else None)
    try:
        return args.handler(args)
    except HyperwaveError as e:
        print(f"❌ {type(e).__name__}: {e.detail}", file=sys.stderr)
        return e.exit_code


def run() -> None:
    sys.exit(main())
