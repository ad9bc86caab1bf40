"""Command line: ``iagcert {run,certify,compare,suite,gradcheck}``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import harness


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="iagcert", description="IAG solvers and rate certificates")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, help_ in (("run", "run one experiment"), ("compare", "run several methods on one problem")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, metavar="PATH")
        sp.add_argument("--out", metavar="DIR", help="output directory (overrides [output] dir)")
        sp.add_argument("--seed", type=int, metavar="N", help="override the config seed")

    sp = sub.add_parser("certify", help="print the rate certificate as JSON")
    sp.add_argument("--mu", type=float, required=True)
    sp.add_argument("--L", type=float, required=True)
    sp.add_argument("--K", type=int, required=True)
    sp.add_argument("--gamma", type=float, help="stepsize (default gamma_star)")

    sub.add_parser("suite", help="run every acceptance criterion")

    sp = sub.add_parser("gradcheck", help="finite-difference check of the component gradients")
    sp.add_argument("--config", required=True, metavar="PATH")
    sp.add_argument("--seed", type=int, metavar="N")

    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return harness.cmd_run(args.config, args.out, args.seed)
    if args.command == "compare":
        return harness.cmd_compare(args.config, args.out, args.seed)
    if args.command == "certify":
        return harness.cmd_certify(args.mu, args.L, args.K, args.gamma)
    if args.command == "gradcheck":
        return harness.cmd_gradcheck(args.config, args.seed)
    from .suite import run_suite, SUITE_BUDGET_S

    results, total = run_suite()
    failed = [r for r in results if not r.ok]
    if failed or total > SUITE_BUDGET_S:
        print("failed: " + ", ".join(f"{r.number}. {r.name}" for r in failed) if failed
              else "failed: wall time budget", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
