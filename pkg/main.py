#!/usr/bin/env python3
import argparse
import logging
import sys

from pydantic import ValidationError

from dsiscan import config
from dsiscan.commands import STATUS_FAILED, analyze, selftest, synth
from dsiscan.errors import DSIError, InputValidationError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsiscan",
        description="Detect discrete scale invariance in size distributions and analyze size layers",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    analyze.register(subparsers)
    synth.register(subparsers)
    selftest.register(subparsers)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=(args.log_level or config.DSI_LOG_LEVEL).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except DSIError as e:
        print(f"{STATUS_FAILED} {e}", file=sys.stderr)
        return e.exit_code
    except ValidationError as e:
        print(f"{STATUS_FAILED} invalid parameters: {e}", file=sys.stderr)
        return InputValidationError.exit_code


if __name__ == "__main__":
    sys.exit(main())
