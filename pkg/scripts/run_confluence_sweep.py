#!/usr/bin/env python3
"""Run the seeded confluence sweep from the command line.

Every scenario runs three replicas over the simulated network with
healing partitions and 300-1000 mixed ops, then checks that all digests
equal the independent oracle fold.  Non-zero exit on any divergence.
"""

import argparse
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from polyrdl.scenario import run_confluence_sweep  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--count", type=int, default=1000)
    parser.add_argument("--start", type=int, default=0)
    parser.add_argument("--processes", type=int, default=os.cpu_count() or 2)
    args = parser.parse_args()
    t0 = time.monotonic()
    converged, total, updates = run_confluence_sweep(
        count=args.count, processes=args.processes, start=args.start
    )
    elapsed = time.monotonic() - t0
    print(
        f"{converged}/{total} scenarios converged "
        f"({updates} updates folded) in {elapsed:.1f}s"
    )
    return 0 if converged == total else 1


if __name__ == "__main__":
    raise SystemExit(main())
