"""Narrowing bumps around alpha = 1/2 approach the single-order problem.

    python3 scripts/single_order_limit.py [--widths 0.2 0.1 0.05 0.02] [--M 256]

For each width the resolvent g is compared with t^(-1/2)/Gamma(1/2) on
[0.1, 1], and the one-mode Galerkin solution (eigenvalue 1) with
E_{1/2}(-t^(1/2)).
"""

import argparse
import math

import numpy as np

from distcaputo import TimeGrid, bump, build_table, mittag_leffler, solve_volterra
from distcaputo.kernels import default_grading
from distcaputo.weight import analyze


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--widths", nargs="+", type=float, default=[0.2, 0.1, 0.05, 0.02])
    ap.add_argument("--M", type=int, default=256)
    args = ap.parse_args()

    print(" width    g rel.err [0.1,1]   ML abs.err [0.05,1]   gamma")
    for w in args.widths:
        mu = bump(0.5, w)
        ex = analyze(mu)
        grid = TimeGrid(1.0, args.M, default_grading(ex.gamma))
        g = build_table(mu, grid, "g", exps=ex)
        t = g.t
        sel = t >= 0.1
        ref = t[sel] ** -0.5 / math.gamma(0.5)
        g_err = float(np.max(np.abs(g.values[sel] - ref) / ref))
        sol = solve_volterra(g, np.eye(1), None, np.ones(1), grid)
        tt = grid.nodes
        sel2 = tt >= 0.05
        ml = mittag_leffler(0.5, 1.0, -np.sqrt(tt[sel2]))
        ml_err = float(np.max(np.abs(sol.coeffs[sel2, 0] - ml)))
        print(f" {w:5.3f}   {g_err:10.3e}          {ml_err:10.3e}         {ex.gamma:.4f}")


if __name__ == "__main__":
    main()
