"""Benchmark harness: `bench run` executes a seeded grid, `bench audit` re-verifies it.

Outputs under --out:
  results.csv       per (cell, solver) aggregates; deterministic bytes
  per_instance.csv  one row per run with certificate fields; deterministic
  timings.csv       wall-clock times (informational, excluded from results.csv
                    so repeated runs are byte-identical)
  summary.md        table-shaped comparison
  traces/<cell>/<solver>_s<seed>.csv   iteration, objective, feasibility
  iterates/<cell>/<solver>_s<seed>.npz terminal iterate + multiplier
  run_config.json   the resolved run specification

Flags override BENCH_* environment variables, which override --config
key=value entries, which override defaults.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass
from multiprocessing import get_context

import numpy as np

from . import experiments
from .driver import DriverConfig, solve
from .errors import BalmError, MissingArtifacts
from .model import check_fosp, check_sosp
from .sparsa import SparsaConfig, sparsa_solve

TABLE_GRIDS = {
    experiments.RECOVERY: [
        (20, 1, 40), (20, 2, 80), (40, 2, 160), (40, 4, 320), (60, 3, 360),
        (60, 6, 720), (80, 4, 640), (80, 8, 1280), (100, 5, 1000), (100, 10, 2000),
    ],
    experiments.NMF_SIMPLEX: [
        (20, 2, 10), (20, 2, 20), (20, 2, 30), (30, 3, 15), (30, 3, 30), (30, 3, 45),
        (40, 4, 20), (40, 4, 40), (40, 4, 60), (50, 5, 25), (50, 5, 50), (50, 5, 75),
    ],
    experiments.NMF_SPHERE: [
        (20, 2, 5), (20, 2, 10), (20, 2, 15), (20, 2, 20), (20, 2, 25), (20, 2, 30),
        (40, 4, 10), (40, 4, 20), (40, 4, 30), (40, 4, 40), (40, 4, 50), (40, 4, 60),
    ],
}

SOLVERS = ("barrier_al", "sparsa")

PER_INSTANCE_FIELDS = [
    "family", "n", "l", "m", "seed", "solver", "status", "rel_error", "objective",
    "inner_iterations", "fosp_pass", "sosp_pass", "feasibility", "dual_norm",
    "cone_violation", "min_eig", "error",
]

RESULT_FIELDS = [
    "family", "n", "l", "m", "solver", "instances", "mean_rel_error",
    "mean_objective", "mean_inner_iterations", "cert_pass_rate",
]


@dataclass(frozen=True)
class RunSpec:
    family: str
    grid: tuple
    instances: int = 10
    seed: int = 0
    solvers: tuple = SOLVERS
    eps: float = 1e-4
    eps2: float = 1e-2
    oracle: str = "det"
    out: str = "bench_out"
    workers: int = 0
    small: bool = False

    def __post_init__(self):
        if self.family not in experiments.FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if not self.grid:
            raise ValueError("empty grid")
        if not self.solvers:
            raise ValueError("no solvers selected")
        for s in self.solvers:
            if s not in SOLVERS:
                raise ValueError(f"unknown solver {s!r} (choose from {SOLVERS})")
        if self.oracle not in ("det", "rand"):
            raise ValueError("oracle must be 'det' or 'rand'")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _cell_key(family, n, l, m):
    return f"{family}_{n}x{l}x{m}"


def _run_one(task):
    """Worker: run one (instance, solver) and return a record dict."""
    (family, n, l, m, seed, solver, eps, eps2, oracle, out_dir) = task
    rec = {"family": family, "n": n, "l": l, "m": m, "seed": seed, "solver": solver,
           "status": "ok", "rel_error": "", "objective": "", "inner_iterations": "",
           "fosp_pass": "", "sosp_pass": "", "feasibility": "", "dual_norm": "",
           "cone_violation": "", "min_eig": "", "error": "", "wall_time": ""}
    t0 = time.perf_counter()
    try:
        inst = experiments.generate(family, n, l, m, seed)
        setup = experiments.bind(inst)
        if solver == "barrier_al":
            cfg = DriverConfig(
                epsilon=eps, x0=setup.x0, z_eps=setup.z_eps, lambda0=setup.lambda0,
                oracle_mode="deterministic" if oracle == "det" else "randomized",
                seed=seed, eps2=eps2,
                check_second_order=(oracle == "det"),
            )
            report = solve(setup.model, cfg)
            x_feas = setup.project_feasible(report.x)
            cert, sosp = report.certificate, report.certificate_sosp
            rec.update(
                rel_error=setup.rel_error(x_feas),
                objective=setup.objective(x_feas),
                inner_iterations=report.inner_iterations,
                fosp_pass=int(cert.first_order_ok),
                sosp_pass="" if sosp is None else int(sosp.passed),
                feasibility=cert.feasibility,
                dual_norm=cert.dual_norm,
                cone_violation=cert.worst_cone_violation,
                min_eig="" if sosp is None else sosp.second_order,
            )
            trace_rows = []
            cum = 0
            for r in report.trace:
                cum += r.inner_iterations
                trace_rows.append((cum, r.objective, r.c_norm))
            _save_artifacts(out_dir, family, n, l, m, seed, solver, trace_rows,
                            x=report.x, lam=report.lam)
        else:
            sp = setup.sparsa
            res = sparsa_solve(sp.value, sp.grad, sp.project, sp.x0,
                               SparsaConfig(tol=eps), feasibility=sp.feasibility)
            x_feas = sp.project(res.x)
            rec.update(
                rel_error=sp.rel_error(x_feas),
                objective=float(sp.value(x_feas)),
                inner_iterations=res.iterations,
                fosp_pass=int(res.converged),
                feasibility=sp.feasibility(x_feas),
            )
            _save_artifacts(out_dir, family, n, l, m, seed, solver, res.trace,
                            x=res.x, lam=np.zeros(0))
    except (BalmError, ValueError) as exc:
        rec["status"] = "error"
        # keep the CSV single-celled: no separators or newlines in messages
        msg = f"{type(exc).__name__}: {exc}"
        rec["error"] = msg.replace(",", ";").replace("\n", " ")
    rec["wall_time"] = time.perf_counter() - t0
    return rec


def _save_artifacts(out_dir, family, n, l, m, seed, solver, trace_rows, x, lam):
    if out_dir is None:
        return
    cell = _cell_key(family, n, l, m)
    tdir = os.path.join(out_dir, "traces", cell)
    idir = os.path.join(out_dir, "iterates", cell)
    os.makedirs(tdir, exist_ok=True)
    os.makedirs(idir, exist_ok=True)
    with open(os.path.join(tdir, f"{solver}_s{seed}.csv"), "w") as fh:
        fh.write("iteration,objective,feasibility\n")
        for it, obj, feas in trace_rows:
            fh.write(f"{it},{_fmt(float(obj))},{_fmt(float(feas))}\n")
    np.savez(os.path.join(idir, f"{solver}_s{seed}.npz"),
             x=x, lam=lam, meta=json.dumps(
                 {"family": family, "n": n, "l": l, "m": m, "seed": seed,
                  "solver": solver}, sort_keys=True))


def run(spec: RunSpec):
    """Execute the grid and write all artifacts; returns aggregate rows."""
    out_dir = spec.out
    os.makedirs(out_dir, exist_ok=True)
    grid = [c for c in spec.grid if not spec.small or c[0] <= 40]
    if not grid:
        raise ValueError("grid is empty after --small filtering")

    tasks = []
    for (n, l, m) in grid:
        for i in range(spec.instances):
            for solver in spec.solvers:
                tasks.append((spec.family, n, l, m, spec.seed + i, solver,
                              spec.eps, spec.eps2, spec.oracle, out_dir))

    workers = spec.workers if spec.workers > 0 else (os.cpu_count() or 1)
    if workers > 1 and len(tasks) > 1:
        with get_context("spawn").Pool(processes=workers) as pool:
            records = pool.map(_run_one, tasks)
    else:
        records = [_run_one(t) for t in tasks]

    records.sort(key=lambda r: (r["family"], r["n"], r["l"], r["m"], r["solver"], r["seed"]))

    with open(os.path.join(out_dir, "per_instance.csv"), "w") as fh:
        fh.write(",".join(PER_INSTANCE_FIELDS) + "\n")
        for r in records:
            fh.write(",".join(_fmt(r[k]) for k in PER_INSTANCE_FIELDS) + "\n")

    rows = []
    timing_rows = []
    for (n, l, m) in grid:
        for solver in spec.solvers:
            sel = [r for r in records
                   if (r["n"], r["l"], r["m"], r["solver"]) == (n, l, m, solver)]
            ok = [r for r in sel if r["status"] == "ok"]
            passed = [r for r in ok if r["fosp_pass"] == 1
                      and (r["sosp_pass"] in ("", 1))]
            row = {
                "family": spec.family, "n": n, "l": l, "m": m, "solver": solver,
                "instances": len(sel),
                "mean_rel_error": float(np.mean([r["rel_error"] for r in ok])) if ok else math.nan,
                "mean_objective": float(np.mean([r["objective"] for r in ok])) if ok else math.nan,
                "mean_inner_iterations": float(np.mean([r["inner_iterations"] for r in ok])) if ok else math.nan,
                "cert_pass_rate": len(passed) / len(sel) if sel else 0.0,
            }
            rows.append(row)
            timing_rows.append({
                "family": spec.family, "n": n, "l": l, "m": m, "solver": solver,
                "mean_wall_time": float(np.mean([r["wall_time"] for r in sel])) if sel else math.nan,
            })

    with open(os.path.join(out_dir, "results.csv"), "w") as fh:
        fh.write(",".join(RESULT_FIELDS) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[k]) for k in RESULT_FIELDS) + "\n")

    with open(os.path.join(out_dir, "timings.csv"), "w") as fh:
        fh.write("family,n,l,m,solver,mean_wall_time\n")
        for row in timing_rows:
            fh.write(",".join(_fmt(row[k]) for k in
                              ("family", "n", "l", "m", "solver", "mean_wall_time")) + "\n")

    _write_summary(out_dir, spec, rows)
    with open(os.path.join(out_dir, "run_config.json"), "w") as fh:
        json.dump(asdict(spec), fh, sort_keys=True, indent=2)
        fh.write("\n")
    return rows


def _write_summary(out_dir, spec, rows):
    by_cell = {}
    for row in rows:
        by_cell.setdefault((row["n"], row["l"], row["m"]), {})[row["solver"]] = row

    def cell_val(cell, solver, key):
        row = by_cell.get(cell, {}).get(solver)
        return f"{row[key]:.3g}" if row and not math.isnan(row[key]) else "-"

    lines = [
        f"# Benchmark summary: {spec.family}",
        "",
        f"epsilon {spec.eps:g}, eps2 {spec.eps2:g}, oracle {spec.oracle}, "
        f"{spec.instances} instances per cell, base seed {spec.seed}",
        "",
        "| n | l | m | rel.err barrier_al | rel.err sparsa | obj barrier_al | obj sparsa |",
        "|---|---|---|---|---|---|---|",
    ]
    for cell in sorted(by_cell):
        n, l, m = cell
        lines.append(
            f"| {n} | {l} | {m} "
            f"| {cell_val(cell, 'barrier_al', 'mean_rel_error')} "
            f"| {cell_val(cell, 'sparsa', 'mean_rel_error')} "
            f"| {cell_val(cell, 'barrier_al', 'mean_objective')} "
            f"| {cell_val(cell, 'sparsa', 'mean_objective')} |"
        )
    with open(os.path.join(out_dir, "summary.md"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_float_field(s):
    return float(s) if s not in ("", None) else None


def audit(results_dir: str, eps: float | None = None, eps2: float | None = None) -> int:
    """Re-derive certificates from stored iterates; nonzero on any mismatch."""
    cfg_path = os.path.join(results_dir, "run_config.json")
    per_path = os.path.join(results_dir, "per_instance.csv")
    if not (os.path.exists(cfg_path) and os.path.exists(per_path)):
        raise MissingArtifacts(f"{results_dir} lacks run_config.json/per_instance.csv")
    with open(cfg_path) as fh:
        run_cfg = json.load(fh)
    run_eps = run_cfg["eps"]
    eps = eps if eps is not None else run_eps
    eps2 = eps2 if eps2 is not None else run_cfg["eps2"]

    with open(per_path) as fh:
        header = fh.readline().strip().split(",")
        rows = [dict(zip(header, line.rstrip("\n").split(","))) for line in fh]

    failures = []
    checked = 0
    for row in rows:
        if row["status"] != "ok":
            continue
        family, solver = row["family"], row["solver"]
        n, l, m, seed = int(row["n"]), int(row["l"]), int(row["m"]), int(row["seed"])
        path = os.path.join(results_dir, "iterates", _cell_key(family, n, l, m),
                            f"{solver}_s{seed}.npz")
        if not os.path.exists(path):
            raise MissingArtifacts(f"missing iterate artifact {path}")
        data = np.load(path)
        x = data["x"]
        inst = experiments.generate(family, n, l, m, seed)
        setup = experiments.bind(inst, validate=False)
        checked += 1
        tag = f"{_cell_key(family, n, l, m)}/{solver} seed {seed}"

        if solver == "barrier_al":
            lam = data["lam"]
            stored_sosp = row["sosp_pass"]
            if stored_sosp == "":
                cert = check_fosp(setup.model, x, lam, eps)
                sosp = None
            else:
                sosp = check_sosp(setup.model, x, lam, eps, eps2)
                cert = sosp
            for key, got in (("feasibility", cert.feasibility),
                             ("dual_norm", cert.dual_norm),
                             ("cone_violation", cert.worst_cone_violation)):
                want = _parse_float_field(row[key])
                if want is None or abs(got - want) > 1e-9 * max(1.0, abs(want)):
                    failures.append(f"{tag}: {key} {got!r} != stored {want!r}")
            if sosp is not None:
                want = _parse_float_field(row["min_eig"])
                if want is None or abs(sosp.second_order - want) > 1e-9 * max(1.0, abs(want)):
                    failures.append(f"{tag}: min_eig {sosp.second_order!r} != stored {want!r}")
            recomputed_pass = cert.first_order_ok and (sosp is None or sosp.second_order_ok)
            stored_pass = row["fosp_pass"] == "1" and stored_sosp in ("", "1")
            if eps == run_eps and eps2 == run_cfg["eps2"]:
                if recomputed_pass != stored_pass:
                    failures.append(f"{tag}: certificate verdict flipped on re-check")
            elif eps >= run_eps and eps2 >= run_cfg["eps2"] and stored_pass and not recomputed_pass:
                failures.append(f"{tag}: pass at tighter tolerances but fail at looser ones")
        else:
            # the stored feasibility was measured after projection; re-derive it
            recomputed = setup.sparsa.feasibility(setup.sparsa.project(x))
            stored_feas = _parse_float_field(row["feasibility"])
            if stored_feas is None or abs(recomputed - stored_feas) > 1e-9:
                failures.append(f"{tag}: stored feasibility {stored_feas!r} "
                                f"inconsistent with iterate ({recomputed!r})")

    print(f"audited {checked} runs at eps={eps:g}, eps2={eps2:g}: "
          f"{'OK' if not failures else f'{len(failures)} mismatches'}")
    for msg in failures:
        print("  " + msg)
    return 1 if failures else 0


def _parse_grid(text: str):
    cells = []
    for chunk in text.split(","):
        parts = chunk.lower().split("x")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError(f"bad grid cell {chunk!r}; expected NxLxM")
        cells.append(tuple(int(p) for p in parts))
    return tuple(cells)


def _load_config_file(path):
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    return values


def _parse_bool(s):
    return str(s).lower() in ("1", "true", "yes", "on")


def _resolve(args) -> RunSpec:
    """Precedence: flags > BENCH_* env > --config file > defaults."""
    file_vals = _load_config_file(args.config) if args.config else {}

    def pick(name, parse, default, flag_val=None):
        if flag_val not in (None, False):
            return flag_val
        env_val = os.environ.get(f"BENCH_{name.upper()}")
        if env_val is not None:
            return parse(env_val)
        if name in file_vals:
            return parse(file_vals[name])
        return default

    family = pick("family", str, experiments.RECOVERY, args.family)
    grid = pick("grid", _parse_grid, None, args.grid)
    if grid is None:
        grid = tuple(TABLE_GRIDS[family])
    solvers = pick("solvers", str, ",".join(SOLVERS), args.solvers)
    if isinstance(solvers, str):
        solvers = tuple(s for s in solvers.split(",") if s)
    return RunSpec(
        family=family,
        grid=tuple(map(tuple, grid)),
        instances=pick("instances", int, 10, args.instances),
        seed=pick("seed", int, 0, args.seed),
        solvers=solvers,
        eps=pick("eps", float, 1e-4, args.eps),
        eps2=pick("eps2", float, 1e-2, args.eps2),
        oracle=pick("oracle", str, "det", args.oracle),
        out=pick("out", str, "bench_out", args.out),
        workers=pick("workers", int, 0, args.workers),
        small=bool(pick("small", _parse_bool, False, args.small)),
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bench", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a benchmark grid")
    p_run.add_argument("--family", choices=experiments.FAMILIES, default=None)
    p_run.add_argument("--grid", type=_parse_grid, default=None,
                       help="comma-separated NxLxM cells; defaults to the family table")
    p_run.add_argument("--instances", type=int, default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--solvers", type=str, default=None)
    p_run.add_argument("--eps", type=float, default=None)
    p_run.add_argument("--eps2", type=float, default=None)
    p_run.add_argument("--oracle", choices=("det", "rand"), default=None)
    p_run.add_argument("--out", type=str, default=None)
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--small", action="store_true", default=False,
                       help="restrict the grid to rows with n <= 40")
    p_run.add_argument("--config", type=str, default=None,
                       help="flat key=value file; flags and BENCH_* env override it")

    p_audit = sub.add_parser("audit", help="re-verify certificates of a finished run")
    p_audit.add_argument("results_dir")
    p_audit.add_argument("--eps", type=float, default=None)
    p_audit.add_argument("--eps2", type=float, default=None)

    args = parser.parse_args(argv)
    if args.command == "run":
        try:
            spec = _resolve(args)
        except ValueError as exc:
            parser.error(str(exc))
        rows = run(spec)
        print(f"wrote {spec.out}/results.csv ({len(rows)} rows)")
        return 0
    try:
        return audit(args.results_dir, eps=args.eps, eps2=args.eps2)
    except MissingArtifacts as exc:
        print(f"audit error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
