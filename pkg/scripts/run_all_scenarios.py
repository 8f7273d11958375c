#!/usr/bin/env python3
"""Run every bundled scenario and summarize the verdicts.

Exit code is the worst one across scenarios (0 pass, 1 check failed,
3 execution error), matching `noetherlab run`.
"""

import argparse
import sys

from noetherlab.cli import _print_report, load_scenario, run_scenario
from noetherlab.cli import bundled_scenarios


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--dump", default=None,
                    help="directory for artifacts (one subdir per scenario)")
    args = ap.parse_args()

    worst = 0
    for path in bundled_scenarios():
        scenario = load_scenario(path)
        dump_dir = None
        if args.dump is not None:
            dump_dir = f"{args.dump}/{path.stem}"
        report = run_scenario(scenario, seed=args.seed, dump_dir=dump_dir)
        print(f"=== {path.stem} ===")
        _print_report(report)
        print()
        if report["overall"] == "error":
            worst = max(worst, 3)
        elif report["overall"] == "fail":
            worst = max(worst, 1)
    return worst


if __name__ == "__main__":
    sys.exit(main())
