#!/usr/bin/env python3
"""Parameter recovery: re-fit every model family on synthetic data it
generated itself, through the full 5x2 cross-validation, and report the
out-of-sample RMSE of each case.

    python3 scripts/run_recovery.py                 # all cases
    python3 scripts/run_recovery.py --family qh     # one family
"""

from __future__ import annotations

import argparse
import sys
import time

from quantal_hierarchy.recovery import CASES, run_case

THRESHOLD = 0.02


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--family", help="only cases re-fitting this family")
    ap.add_argument("--budget", type=int, help="evaluations per fit (default 1000)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    cases = [c for c in CASES if args.family in (None, c.family)]
    if not cases:
        ap.error(f"no recovery cases for family {args.family!r}")
    start = time.perf_counter()
    worst = 0.0
    for case in cases:
        r = run_case(case, args.budget, args.seed)
        worst = max(worst, r.rmse)
        params = ", ".join(f"{k}={v:.4g}" for k, v in r.cv.mean_params.items())
        print(f"{r.rmse:9.2e}  {r.seconds:6.1f}s  {case.label}  [{params}]", flush=True)
    total = time.perf_counter() - start
    print(f"worst RMSE {worst:.2e} (threshold {THRESHOLD}); {len(cases)} cases in {total:.0f}s")
    return 0 if worst < THRESHOLD else 1


if __name__ == "__main__":
    sys.exit(main())
