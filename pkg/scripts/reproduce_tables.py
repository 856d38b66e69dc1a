#!/usr/bin/env python3
"""Drive the three benchmark families at paper scale (or --small for n<=40).

Thin wrapper over the `bench` CLI so the full table reproduction is one
command per family:

    python3 scripts/reproduce_tables.py --out runs/ [--small] [--workers N]
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from balm.cli import main as bench_main  # noqa: E402

FAMILIES = ("recovery", "nmf_simplex", "nmf_sphere")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs")
    ap.add_argument("--small", action="store_true", help="restrict to rows with n <= 40")
    ap.add_argument("--workers", type=int, default=0)
    ap.add_argument("--instances", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    for family in FAMILIES:
        out_dir = os.path.join(args.out, family)
        argv = ["run", "--family", family, "--out", out_dir,
                "--instances", str(args.instances), "--seed", str(args.seed),
                "--workers", str(args.workers), "--oracle", "det"]
        if args.small:
            argv.append("--small")
        print(f"== {family} -> {out_dir}")
        rc = bench_main(argv)
        if rc != 0:
            return rc
        rc = bench_main(["audit", out_dir])
        if rc != 0:
            return rc
    return 0


if __name__ == "__main__":
    sys.exit(main())
