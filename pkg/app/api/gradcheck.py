import argparse

from ..core.exceptions import NumericError
from ..services.diagnostics_service import TOLERANCE, diagnostics_service
from ..utils.reports import write_csv
from .common import status


def register(subparsers) -> None:
    p = subparsers.add_parser("gradcheck", help="Compare analytic gradients with finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="Optional CSV report path")
    p.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    rows = diagnostics_service.run_gradcheck(seed=args.seed)
    for row in rows:
        mark = "ok  " if row.passed else "FAIL"
        print(f"  {mark} {row.component:<28} max rel error {row.max_rel_error:.3e}")
    if args.out:
        write_csv([r.model_dump() for r in rows], args.out, ["component", "max_rel_error", "passed"])

    failed = [r.component for r in rows if not r.passed]
    if failed:
        status(False, f"{len(failed)} component(s) above {TOLERANCE:g}: {', '.join(failed)}")
        return NumericError.exit_code
    status(True, f"All {len(rows)} components within {TOLERANCE:g}")
    return 0
