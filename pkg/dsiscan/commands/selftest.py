import argparse

from dsiscan import acceptance, config
from dsiscan.commands import STATUS_FAILED, STATUS_OK, apply_log_level
from dsiscan.errors import SelftestFailure


def register(subparsers) -> None:
    p = subparsers.add_parser("selftest", help="Run the acceptance suite and print pass/fail per criterion")
    p.add_argument("--seed", type=int, default=config.DSI_SEED)
    p.add_argument("--only", type=int, nargs="+", help="criterion numbers to run")
    p.add_argument("--log-level", default="WARNING")
    p.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    apply_log_level(args.log_level)
    results = acceptance.run_criteria(args.seed, args.only)
    for r in results:
        marker = STATUS_OK if r.passed else STATUS_FAILED
        print(
            f"{marker} [{r.number:2d}] {r.title}: {r.detail} "
            f"({r.seconds:.2f}s, budget {r.budget_seconds:.0f}s)"
        )

    failed = [r.number for r in results if not r.passed]
    if failed:
        raise SelftestFailure(f"{len(failed)} of {len(results)} criteria failed: {failed}")
    print(f"{STATUS_OK} all {len(results)} criteria passed")
    return 0
