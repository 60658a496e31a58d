"""Run every acceptance criterion with default tolerances and print PASS/FAIL lines.

Usage: python3 scripts/run_acceptance.py [--threads K] [--criteria 1,2,...]
"""
import argparse
import sys

from runtumble.config import Tolerances, VerifySettings
from runtumble.verify import run_all


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=4)
    p.add_argument("--criteria", type=lambda s: [int(x) for x in s.split(",")], default=None)
    args = p.parse_args()
    results = run_all(Tolerances(), VerifySettings(), threads=args.threads, only=args.criteria)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
