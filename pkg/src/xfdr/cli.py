"""Command line front end.

    xfdr run <scenario-file> [--seed N] [--out DIR] [--trace] [--literal-chi]
    xfdr sweep <matrix-file> [--seed N] [--out DIR] [--jobs N] [--literal-chi]

Exit codes: 0 success, 1 usage error, 2 invalid scenario, 3 partial results
(a run aborted at the simulation time limit or an unresolvable failure tag).
"""
from __future__ import annotations

import argparse
import gzip
import os
import sys
from dataclasses import replace

from .config import Scenario, ScenarioError, parse_scenario
from .engine import Simulator
from .experiment import (ExperimentMatrix, parse_matrix, run_matrix,
                         write_csv, write_plot_data, run_iteration, _csv_row,
                         CSV_HEADER)
from .metrics import aggregate


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="xfdr", add_help=True)
    sub = ap.add_subparsers(dest="cmd", required=True)

    runp = sub.add_parser("run", help="run one scenario for all its iterations")
    runp.add_argument("scenario")
    runp.add_argument("--seed", type=int, default=None)
    runp.add_argument("--out", default=".")
    runp.add_argument("--trace", action="store_true",
                      help="write one trace file per iteration (gzip)")
    runp.add_argument("--literal-chi", action="store_true")

    swp = sub.add_parser("sweep", help="run a full experiment matrix")
    swp.add_argument("matrix")
    swp.add_argument("--seed", type=int, default=None)
    swp.add_argument("--out", default=".")
    swp.add_argument("--jobs", type=int, default=1)
    swp.add_argument("--trace", action="store_true")
    swp.add_argument("--literal-chi", action="store_true")
    return ap


def _cmd_run(args) -> int:
    scn = parse_scenario(args.scenario)
    if args.seed is not None:
        scn = replace(scn, seed=args.seed)
    if args.literal_chi:
        scn = replace(scn, literal_chi=True)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    reports = []
    partial = False
    for it in range(scn.iterations):
        report, sim = run_iteration(scn, it)
        reports.append(report)
        partial = partial or sim.aborted or sim.scenario_error is not None
        key = (scn.protocol, scn.nodes, scn.si_profile, scn.failure_position or "-")
        rows.append(_csv_row(key, str(it), report))
        if args.trace:
            path = os.path.join(args.out, f"trace_{scn.digest()}_{it}.log.gz")
            with gzip.open(path, "wt") as fh:
                for line in sim.trace_lines():
                    fh.write(line + "\n")
    csv_path = os.path.join(args.out, "results.csv")
    with open(csv_path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(row + "\n")
    agg = aggregate(reports)
    for fld, (m, ci) in sorted(agg.items()):
        if fld != "n":
            print(f"{fld}: mean={m:.6g} ci95={ci:.6g}")
    return 3 if partial else 0


def _cmd_sweep(args) -> int:
    matrix = parse_matrix(args.matrix)
    base = matrix.base
    if args.literal_chi:
        base = replace(base, literal_chi=True)
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    matrix = ExperimentMatrix(
        node_counts=matrix.node_counts, protocols=matrix.protocols,
        si_profiles=matrix.si_profiles,
        failure_positions=matrix.failure_positions,
        iterations=matrix.iterations,
        seed=kw.get("seed", matrix.seed), base=base)
    os.makedirs(args.out, exist_ok=True)

    def progress(key, agg):
        proto, nodes, prof, fp = key
        m = agg["throughput_bps"][0]
        print(f"[{proto} n={nodes} si={prof} fail={fp}] "
              f"throughput={m:.3g} bps", file=sys.stderr)

    result = run_matrix(matrix, jobs=max(args.jobs, 1), progress=progress)
    write_csv(result, os.path.join(args.out, "sweep.csv"))
    write_plot_data(result, matrix, args.out)
    return 3 if result.partial else 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    try:
        if args.cmd == "run":
            return _cmd_run(args)
        return _cmd_sweep(args)
    except ScenarioError as e:
        print(f"scenario error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
