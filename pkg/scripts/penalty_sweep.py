"""Distance between penalized and hard keyframe solutions as the weight grows.

    python3 scripts/penalty_sweep.py chain2_hard --exponents 0,2,4,6,8
"""
import argparse
import sys

import numpy as np

from sparse_spacetime.cli import bundled_scenarios, load_scenario
from sparse_spacetime.spacetime import hard_as_constraints, solve_hard, solve_sparse


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("scenario", nargs="?", default="chain2_hard", help="hard-keyframe scenario name or path")
    p.add_argument("--exponents", default="0,2,4,6,8", help="weights are 10**e")
    p.add_argument("--samples", type=int, default=400)
    args = p.parse_args(argv)

    sc = load_scenario(bundled_scenarios().get(args.scenario, args.scenario))
    if sc.hard is None:
        sys.exit("penalty sweep needs a scenario with hard keyframes")
    t = np.linspace(sc.nodes[0], sc.nodes[-1], args.samples)
    ref = solve_hard(sc.system, sc.basis, sc.hard).u(t)
    scale = np.abs(ref).max()
    print(f"{'weight':>8} {'max_dev/|u|':>12} {'E':>12}")
    for e in (float(x) for x in args.exponents.split(",")):
        sol = solve_sparse(sc.system, sc.basis, hard_as_constraints(sc.hard, 10.0**e))
        dev = np.abs(sol.u(t) - ref).max() / scale
        print(f"{'1e%g' % e:>8} {dev:>12.4e} {sol.info['E']:>12.6g}")


if __name__ == "__main__":
    main()
