"""Command-line entry point: ``distcaputo <command> --scenario FILE --out DIR``.

Commands
--------
analyze-weight  exponents and regime of the weight
kernel-table    k, g (and k_m, g_m) tables plus the resolvent-identity check
solve           Galerkin solution only
check           full run: tables, solution, requested checks, manifest
converge        error table over a sequence of M with a fitted rate

Exit status is 0 iff every requested check passes.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import time
from pathlib import Path

EXIT_FAIL = 1
EXIT_ERROR = 2


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return Path(path)


def _jsonable(v):
    import numpy as np

    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return str(v)


class Run:
    """Artifacts and timings of one scenario execution."""

    def __init__(self, scenario, out):
        self.sc = scenario
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.artifacts = []
        self.times = {}
        self.checks = {}
        self.summary = {}
        self._exps = None
        self._grid = None
        self._tables = {}
        self._table_summary = None

    # -- bookkeeping
    def add(self, path, kind, sidecar=False):
        path = Path(path)
        self.artifacts.append({"path": path.relative_to(self.out).as_posix(), "kind": kind})
        side = path.with_suffix(".json")
        if sidecar:
            self._stamp(side)
            self.artifacts.append({"path": side.relative_to(self.out).as_posix(), "kind": kind + "-meta"})
        return path

    def _stamp(self, json_path):
        data = json.loads(Path(json_path).read_text())
        data["scenario_digest"] = self.sc.digest
        _write_json(json_path, data)

    def timed(self, key, fn, *args, **kw):
        t0 = time.perf_counter()
        res = fn(*args, **kw)
        self.times[key] = round(time.perf_counter() - t0, 3)
        return res

    # -- stages
    @property
    def exps(self):
        if self._exps is None:
            from .weight import analyze

            self._exps = self.timed("analyze_weight", analyze, self.sc.weight)
        return self._exps

    @property
    def grid(self):
        if self._grid is None:
            from .fraccalc import TimeGrid
            from .kernels import default_grading

            g = self.sc.grid
            self._grid = TimeGrid(g.T, g.M, default_grading(self.exps.gamma) if g.q is None else g.q)
        return self._grid

    def analyze_weight(self):
        ex = self.exps
        info = {
            "weight": self.sc.weight.to_config(),
            "mu_digest": self.sc.weight.digest(),
            "exponents": ex.as_dict(),
            "regime": ex.regime,
            "scenario_digest": self.sc.digest,
        }
        self.add(_write_json(self.out / "weight.json", info), "weight")
        self.summary["gamma"] = ex.gamma
        self.summary["exponents"] = ex.as_dict()
        return info

    def table(self, kernel):
        if kernel not in self._tables:
            from .kernels import build_table

            m = self.exps.m if kernel in ("k_m", "g_m") else None
            self._tables[kernel] = self.timed(f"table_{kernel}", build_table, self.sc.weight, self.grid, kernel,
                                              m=m, exps=self.exps)
        return self._tables[kernel]

    def kernel_tables(self):
        if self._table_summary is not None:
            return self._table_summary
        import numpy as np

        from .kernels import g_upper_bound, verify_resolvent_identity

        tdir = self.out / "tables"
        tdir.mkdir(exist_ok=True)
        kinds = ["k", "g"] + (["k_m", "g_m"] if self.exps.m is not None else [])
        for kind in kinds:
            self.add(self.table(kind).to_csv(tdir / f"{kind}.csv"), f"table-{kind}", sidecar=True)
        tol = self.sc.tolerances["resolvent"]
        res = {"tables": kinds}
        dev = self.timed("resolvent", verify_resolvent_identity, self.table("k"), self.table("g"))
        res["resolvent_deviation"] = dev
        passed = dev < tol
        if self.exps.m is not None:
            dev_m = verify_resolvent_identity(self.table("k_m"), self.table("g_m"))
            res["resolvent_deviation_m"] = dev_m
            passed = passed and dev_m < tol
        gt = self.table("g")
        bound = g_upper_bound(gt.t, self.exps.c_mu, self.exps.gamma)
        res["kernel_bound_violations"] = int(np.count_nonzero(gt.values > bound))
        res["pass"] = bool(passed)
        res["tolerances"] = {"resolvent": tol}
        res["scenario_digest"] = self.sc.digest
        self.add(_write_json(tdir / "resolvent.json", res), "resolvent")
        self.summary["kernel_tables"] = [f"tables/{k}.csv" for k in kinds]
        self._table_summary = res
        return res

    def solve(self, grid=None, write=True):
        sol = self.timed("solve", solve_scenario, self.sc, grid or self.grid, self.exps,
                         None if grid is not None else self.table("g"))
        if write:
            self.add(sol.to_csv(self.out / "solution.csv"), "solution", sidecar=True)
            self.summary["solution"] = "solution.csv"
        return sol

    def run_checks(self, sol):
        from . import diagnostics as D
        from . import galerkin as G

        sc = self.sc
        tol = sc.tolerances
        cdir = self.out / "checks"
        cdir.mkdir(exist_ok=True)
        results = {}
        for name in sc.checks:
            t0 = time.perf_counter()
            rep = None
            if name in ("resolvent", "kernel_bound"):
                tables = self.kernel_tables()
                if name == "resolvent":
                    verdict = {"check": name, "pass": tables["pass"],
                               "margin": tol["resolvent"] - tables["resolvent_deviation"],
                               "tolerances": {"resolvent": tol["resolvent"]}}
                else:
                    v = tables["kernel_bound_violations"]
                    verdict = {"check": name, "pass": v == 0, "margin": -v, "tolerances": {"violations": 0}}
            elif name == "energy_identity":
                rep = D.energy_identity_residual(sol.trajectory(), sc.weight, tol=tol["energy_identity"])
            elif name == "energy_estimate":
                rep = D.energy_estimate_check(sol, raw_coeffs=sc.coefficients)
            elif name == "coercivity":
                rep = D.coercivity_check(sol.trajectory(), sc.weight, exps=self.exps, tol=tol["coercivity"])
            elif name.startswith("continuity"):
                regime = {"continuity": None, "continuity_m": "m", "continuity_upper": "upper"}[name]
                rep = D.continuity_report(sol, self.exps, threshold=tol["continuity_threshold"],
                                          identity_tol=tol["identity"], regime=regime)
            elif name == "regularity":
                rep = D.regularity_monitor(sol, tol["regularity_constant"])
            elif name == "weak_residual":
                rep = weak_residual_report(sol, tol["weak_residual"])
            elif name == "volterra_residual":
                A, F = _nodal_system(sol)
                r = G.volterra_residual(sol, self.table("g"), A, F)
                lim = tol.get("volterra_residual", 1e-3)
                verdict = {"check": name, "pass": r < lim, "margin": lim - r, "tolerances": {"absolute": lim},
                           "residual": r}
            if rep is not None:
                verdict = rep.verdict()
                if rep.columns:
                    self.add(rep.to_csv(cdir / f"{name}.csv"), f"check-{name}")
            verdict["scenario_digest"] = sc.digest
            self.add(_write_json(cdir / f"{name}.json", verdict), f"check-{name}")
            self.times[f"check_{name}"] = round(time.perf_counter() - t0, 3)
            results[name] = verdict
        self.checks = results
        self.summary["checks"] = {k: bool(v["pass"]) for k, v in results.items()}
        return results

    def manifest(self, command, status):
        import numpy as np
        import scipy
        import yaml

        from . import __version__

        for a in self.artifacts:
            a["sha256"] = _sha256(self.out / a["path"])
            a["scenario_digest"] = self.sc.digest
        man = {
            "command": command,
            "scenario": self.sc.path,
            "scenario_name": self.sc.name,
            "scenario_digest": self.sc.digest,
            "exit_status": status,
            "versions": {"distcaputo": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "pyyaml": yaml.__version__, "python": platform.python_version()},
            "wall_times": self.times,
            "artifacts": self.artifacts,
        }
        man.update(self.summary)
        _write_json(self.out / "manifest.json", man)
        return man


def _nodal_system(sol):
    import numpy as np

    t = sol.grid.nodes
    A = np.array([sol.system.A(x) for x in t])
    if "forcing" in sol.info:
        F = sol.info["forcing"]
    else:
        F = np.array([sol.system.F(x) for x in t])
    return A, F


def weak_residual_report(sol, limit=None):
    import numpy as np

    from . import galerkin as G
    from .diagnostics import Report

    rows = {"t": sol.grid.nodes}
    worst = 0.0
    for m in range(1, sol.n + 1):
        r = G.weak_residual(sol, m)
        rows[f"residual_{m}"] = r
        worst = max(worst, float(np.max(np.abs(r[1:]))))
    passed = True if limit is None else worst < limit
    return Report("weak_residual", passed, float("nan") if limit is None else limit - worst,
                  {"absolute": limit}, rows, {"max_abs": worst})


def solve_scenario(sc, grid, exps, gtab=None):
    """Galerkin solution for a scenario; manufactured scenarios get their exact forcing."""
    import numpy as np

    from . import galerkin as G
    from .expr import compile_expression
    from .fraccalc import SampledTrajectory
    from .kernels import build_table

    if gtab is None:
        gtab = build_table(sc.weight, grid, "g", exps=exps)
    if sc.manufactured is None:
        return G.galerkin_solve(sc.weight, sc.domain, sc.coefficients, sc.initial, n_modes=sc.modes,
                                n_moll=sc.mollification, picard_tol=sc.solver["picard_tol"],
                                method=sc.solver["method"], gtab=gtab)
    theta = compile_expression(sc.manufactured["time"], ("t",))
    k = sc.manufactured["mode"] - 1
    basis = G.eigenpairs(sc.domain, sc.modes)
    system = G.GalerkinSystem(basis, sc.coefficients)
    exact = np.zeros((grid.M + 1, sc.modes))
    exact[:, k] = theta(t=grid.nodes)
    A = np.array([system.A(x) for x in grid.nodes])
    F = G.manufactured_forcing(sc.weight, SampledTrajectory(grid, exact), A)
    raw = G.solve_volterra(gtab, A, F, exact[0], grid, sc.solver["picard_tol"], sc.solver["method"])
    info = dict(raw.info)
    info["forcing"] = F
    info["manufactured_error"] = float(np.max(np.abs(raw.coeffs - exact)))
    return G.GalerkinSolution(grid, raw.coeffs, exact[0], basis=basis, mu=sc.weight, exponents=exps, n_moll=None,
                              system=system, tolerances=raw.tolerances, info=info)


def convergence_study(sc, Ms=None, out=None):
    """Sup-norm coefficient errors over a sequence of M and the fitted rate."""
    import numpy as np

    from .fraccalc import TimeGrid
    from .kernels import default_grading
    from .weight import analyze

    Ms = list(Ms or sc.converge["M"])
    exps = analyze(sc.weight)
    q = default_grading(exps.gamma) if sc.grid.q is None else sc.grid.q
    sols = [solve_scenario(sc, TimeGrid(sc.grid.T, M, q), exps) for M in Ms]
    if sc.manufactured is not None:
        errs = [s.info["manufactured_error"] for s in sols]
    else:
        ref = sols[-1]
        errs = []
        for s in sols[:-1]:
            from .galerkin import coefficients_at

            errs.append(float(np.max(np.abs(coefficients_at(ref, s.t) - s.coeffs))))
        Ms = Ms[:-1]
    errs = np.array(errs)
    ratios = errs[:-1] / errs[1:]
    rate = float(-np.polyfit(np.log(Ms), np.log(errs), 1)[0]) if len(Ms) > 1 else float("nan")
    table = {"M": Ms, "error": errs.tolist(), "ratios": ratios.tolist(), "rate": rate,
             "min_ratio": float(ratios.min()) if ratios.size else float("nan"),
             "reference": "exact" if sc.manufactured is not None else "finest grid"}
    table["pass"] = bool(ratios.size and ratios.min() >= sc.converge["min_ratio"])
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        np.savetxt(out / "convergence.csv", np.column_stack([Ms, errs]), delimiter=",", header="M,error",
                   comments="", fmt="%.17g")
        _write_json(out / "convergence.json", dict(table, scenario_digest=sc.digest))
    return table


# -- argument handling ---------------------------------------------------------------------

def _parser():
    p = argparse.ArgumentParser(prog="distcaputo", description="Distributed-order Caputo scenario runner")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("analyze-weight", "exponents and regime of the weight"),
        ("kernel-table", "tabulate k, g (and k_m, g_m) and check k*g = 1"),
        ("solve", "run the Galerkin solver"),
        ("check", "solve and run the requested checks"),
        ("converge", "mesh-convergence study"),
    ]:
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--scenario", required=True, help="scenario YAML file")
        sp.add_argument("--out", default=None, help="output directory (default: scenario 'output' or ./out/<name>)")
        sp.add_argument("--tol", type=float, default=None, help="Picard tolerance of the solver")
        sp.add_argument("--threads", type=int, default=None, help="BLAS/OpenMP threads")
        if name == "converge":
            sp.add_argument("--M", type=int, nargs="+", default=None, help="grid sizes (default from scenario)")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    from dataclasses import replace

    from .errors import DistCaputoError
    from .scenario import parse_scenario

    try:
        sc = parse_scenario(args.scenario)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except DistCaputoError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.tol is not None:
        sc = replace(sc, solver=dict(sc.solver, picard_tol=args.tol))
    out = Path(args.out or sc.output or Path("out") / sc.name)

    try:
        return run(sc, out, args.command, Ms=getattr(args, "M", None), echo=True)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except DistCaputoError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


def run(scenario, out, command="check", Ms=None, echo=False):
    """Execute ``command`` for a parsed scenario, write artifacts and the manifest; return the exit status."""
    say = print if echo else (lambda *a, **k: None)
    r = Run(scenario, out)
    status = 0
    if command == "analyze-weight":
        info = r.analyze_weight()
        say(json.dumps(info["exponents"], default=_jsonable))
    elif command == "kernel-table":
        r.analyze_weight()
        res = r.kernel_tables()
        status = 0 if res["pass"] else EXIT_FAIL
        say(f"resolvent deviation {res['resolvent_deviation']:.3e}")
    elif command == "solve":
        r.analyze_weight()
        sol = r.solve()
        say(f"solved: {sol.n} modes, M = {sol.grid.M}, method {sol.info['method']}")
    elif command == "check":
        r.analyze_weight()
        r.kernel_tables()
        sol = r.solve()
        res = r.run_checks(sol)
        for k, v in res.items():
            say(f"{k:20s} {'PASS' if v['pass'] else 'FAIL'}")
        status = 0 if all(v["pass"] for v in res.values()) else EXIT_FAIL
    elif command == "converge":
        out = Path(out)
        tab = r.timed("converge", convergence_study, scenario, Ms, out)
        r.add(out / "convergence.csv", "convergence")
        r.add(out / "convergence.json", "convergence")
        for M, e in zip(tab["M"], tab["error"]):
            say(f"M = {M:5d}  error = {e:.3e}")
        say(f"fitted rate {tab['rate']:.3f}, min ratio {tab['min_ratio']:.3f}")
        r.summary["convergence"] = {k: tab[k] for k in ("rate", "min_ratio", "pass")}
        status = 0 if tab["pass"] else EXIT_FAIL
    else:
        raise ValueError(f"unknown command {command!r}")
    r.manifest(command, status)
    return status


if __name__ == "__main__":
    sys.exit(main())
