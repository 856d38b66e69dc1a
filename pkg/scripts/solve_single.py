#!/usr/bin/env python3
"""Solve one seeded benchmark instance and print the certificate residuals.

Example:
    python3 scripts/solve_single.py --family nmf_simplex --cell 20x2x10 --seed 3
"""

import argparse
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from balm.driver import DriverConfig, solve  # noqa: E402
from balm.experiments import FAMILIES, bind, generate  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--family", choices=FAMILIES, default="recovery")
    ap.add_argument("--cell", default="20x1x40", help="NxLxM")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--eps", type=float, default=1e-4)
    ap.add_argument("--eps2", type=float, default=1e-2)
    ap.add_argument("--oracle", choices=("det", "rand"), default="det")
    args = ap.parse_args()

    n, l, m = (int(p) for p in args.cell.lower().split("x"))
    inst = generate(args.family, n, l, m, args.seed)
    setup = bind(inst)
    cfg = DriverConfig(
        epsilon=args.eps, x0=setup.x0, z_eps=setup.z_eps, lambda0=setup.lambda0,
        oracle_mode="deterministic" if args.oracle == "det" else "randomized",
        seed=args.seed, eps2=args.eps2, check_second_order=args.oracle == "det",
    )
    t0 = time.perf_counter()
    report = solve(setup.model, cfg)
    elapsed = time.perf_counter() - t0

    x_feas = setup.project_feasible(report.x)
    cert = report.certificate
    print(f"{args.family} {args.cell} seed {args.seed}: "
          f"{report.outer_iterations} outer / {report.inner_iterations} inner iterations, "
          f"{report.matvecs} matvecs, {elapsed:.2f}s")
    print(f"  relative error  {setup.rel_error(x_feas):.3e}")
    print(f"  objective       {setup.objective(x_feas):.6e}")
    print(f"  ||c(x)||        {cert.feasibility:.3e}")
    print(f"  dual norm       {cert.dual_norm:.3e}")
    print(f"  cone violation  {cert.worst_cone_violation:.3e}")
    if report.certificate_sosp is not None:
        print(f"  min projected eigenvalue {report.certificate_sosp.second_order:.3e} "
              f"(pass: {report.certificate_sosp.passed})")
    for rec in report.trace:
        print(f"  k={rec.k} mu={rec.mu:.2e} rho={rec.rho:.1f} ||c||={rec.c_norm:.2e} "
              f"||ct||={rec.ctilde_norm:.2e} AL={rec.al_value:.6e} inner={rec.inner_iterations}"
              + (" [reset]" if rec.reset_to_anchor else ""))
    return 0


if __name__ == "__main__":
    sys.exit(main())
