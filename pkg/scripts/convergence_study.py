"""Mesh convergence of the Galerkin solver against a manufactured solution.

    python3 scripts/convergence_study.py [--weights uniform indicator] [--M 64 128 256 512]

Prints the sup-norm coefficient error per M and the ratio between
consecutive refinements, and optionally writes a CSV.
"""

import argparse
import time

import numpy as np

from distcaputo.cli import convergence_study
from distcaputo.scenario import parse_scenario_text

WEIGHTS = {
    "uniform": "{kind: uniform}",
    "indicator": "{kind: indicator, lo: 0.6, hi: 0.8}",
    "low": "{kind: indicator, lo: 0.1666666666666667, hi: 0.25}",
    "bump": "{kind: bump, center: 0.5, width: 0.05}",
}

TEMPLATE = """
name: conv-{name}
weight: {weight}
coefficients: {{a: 1.0}}
manufactured: {{time: "{theta}", mode: 1}}
modes: 2
grid: {{T: 1.0, M: 64}}
"""


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--weights", nargs="+", default=["uniform", "indicator"], choices=sorted(WEIGHTS))
    ap.add_argument("--M", nargs="+", type=int, default=[64, 128, 256, 512])
    ap.add_argument("--theta", default="1 + t", help="time profile of the exact solution")
    ap.add_argument("--csv", default=None)
    args = ap.parse_args()

    rows = []
    for name in args.weights:
        sc = parse_scenario_text(TEMPLATE.format(name=name, weight=WEIGHTS[name], theta=args.theta))
        t0 = time.perf_counter()
        tab = convergence_study(sc, args.M)
        dt = time.perf_counter() - t0
        print(f"{name}: rate {tab['rate']:.3f}, min ratio {tab['min_ratio']:.3f} ({dt:.1f} s)")
        for M, e in zip(tab["M"], tab["error"]):
            print(f"  M = {M:4d}  error = {e:.3e}")
            rows.append((name, M, e))
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("weight,M,error\n")
            fh.writelines(f"{w},{M},{e:.17g}\n" for w, M, e in rows)


if __name__ == "__main__":
    np.set_printoptions(precision=4)
    main()
