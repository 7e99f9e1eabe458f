"""Oracle-vs-wiggly convergence table for a bundled or custom scenario.

    python3 scripts/convergence_study.py chain2_dense --dts 0.05,0.025,0.0125,0.00625
"""
import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from sparse_spacetime.cli import bundled_scenarios, load_scenario
from sparse_spacetime.oracle import transcribe_minimize, transcribe_minimize_warped
from sparse_spacetime.spacetime import solve_sparse
from sparse_spacetime.trajectory import fmt
from sparse_spacetime.warp import solve_warped


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("scenario", help="bundled scenario name or path to a JSON file")
    p.add_argument("--dts", default="0.05,0.025,0.0125,0.00625", help="comma-separated oracle steps")
    p.add_argument("--csv", type=Path, help="optional output table")
    args = p.parse_args(argv)

    path = bundled_scenarios().get(args.scenario, args.scenario)
    sc = load_scenario(path)
    if sc.hard is not None:
        sys.exit("convergence study needs a sparse scenario")
    dts = [float(x) for x in args.dts.split(",")]
    if sc.warp is None:
        sol = solve_sparse(sc.system, sc.basis, sc.constraints)
        oracle = lambda dt: transcribe_minimize(sc.system, sc.constraints, dt)
    else:
        sol = solve_warped(sc.system, sc.basis, sc.problem)
        oracle = lambda dt: transcribe_minimize_warped(sc.system, sc.problem, dt)

    rows, prev = [], None
    print(f"{'dt':>10} {'linf_error':>12} {'order':>7}")
    for dt in dts:
        tr = oracle(dt)
        err = float(np.abs(tr.u - sol.u(tr.times)).max())
        order = np.log(prev[1] / err) / np.log(prev[0] / dt) if prev else float("nan")
        rows.append((dt, err, order))
        print(f"{dt:>10g} {err:>12.4e} {order:>7.3f}")
        prev = (dt, err)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["dt", "linf_error", "order"])
            w.writerows([fmt(dt), fmt(e), fmt(o) if o == o else ""] for dt, e, o in rows)


if __name__ == "__main__":
    main()
