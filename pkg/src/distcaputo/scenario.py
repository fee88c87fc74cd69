"""Scenario files: one YAML document describing a complete run.

See ``README.md`` for the full key reference. Expression strings use the
grammar of :mod:`distcaputo.expr` with variables ``x`` (and ``y`` on
rectangles) and ``t``, plus the domain lengths ``L`` or ``L1``, ``L2``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .errors import DistCaputoError, MassBelowTolerance, ParseError, ValidationError
from .expr import compile_expression
from .galerkin import Domain, EllipticCoefficients
from .weight import WeightFunction, order_index_m

KNOWN_CHECKS = (
    "resolvent",
    "kernel_bound",
    "energy_identity",
    "energy_estimate",
    "coercivity",
    "continuity",
    "continuity_upper",
    "continuity_m",
    "regularity",
    "weak_residual",
    "volterra_residual",
)
DEFAULT_CHECKS = ("resolvent", "energy_identity", "coercivity", "continuity")
TOP_KEYS = {
    "name", "seed", "weight", "domain", "coefficients", "initial", "source", "grid", "modes",
    "mollification", "solver", "checks", "tolerances", "output", "manufactured", "converge",
}
DEFAULT_TOLERANCES = {
    "resolvent": 1e-3,
    "energy_identity": 5e-2,
    "coercivity": 1e-10,
    "continuity_threshold": 0.05,
    "identity": 1e-3,
    "regularity_constant": None,
    "weak_residual": None,
}


@dataclass(frozen=True)
class GridSpec:
    T: float = 1.0
    M: int = 256
    q: Optional[float] = None  # None: graded by the weight's gamma


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    weight: WeightFunction
    domain: Domain
    coefficients: EllipticCoefficients
    coefficient_config: dict
    initial: str
    source: str
    grid: GridSpec
    modes: int
    mollification: object  # int, "auto" or None
    solver: dict
    checks: tuple
    tolerances: dict
    output: Optional[str]
    seed: int
    manufactured: Optional[dict]
    converge: dict
    digest: str
    path: Optional[str] = None
    raw: dict = field(default_factory=dict, repr=False)


# -- YAML with positions --------------------------------------------------------------

def _load(text):
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark else None
        col = mark.column + 1 if mark else None
        raise ParseError(f"malformed scenario: {getattr(exc, 'problem', exc)}", line, col) from None
    if node is None:
        return {}, {}
    marks = {}

    def walk(n, path):
        marks[path] = (n.start_mark.line + 1, n.start_mark.column + 1, getattr(n, "style", None))
        if isinstance(n, yaml.MappingNode):
            for k, v in n.value:
                walk(v, path + (k.value,))
        elif isinstance(n, yaml.SequenceNode):
            for i, v in enumerate(n.value):
                walk(v, path + (i,))

    walk(node, ())
    data = yaml.safe_load(text)
    if not isinstance(data, dict):
        line, col, _ = marks[()]
        raise ParseError("scenario must be a mapping at top level", line, col)
    return data, marks


def _expr_error(exc, marks, path):
    line, col, style = marks.get(path, (None, None, None))
    if line is None:
        return exc
    shift = 1 if style in ("'", '"') else 0
    inner_col = (exc.column or 1) - 1
    msg = str(exc).split(" (line")[0]
    return ParseError(f"{'.'.join(map(str, path))}: {msg}", line + (exc.line or 1) - 1, col + shift + inner_col)


# -- field helpers ----------------------------------------------------------------------

def _get(d, key, default, kind, field_name):
    v = d.get(key, default)
    if v is None or kind is None:
        return v
    try:
        if kind is int:
            if isinstance(v, bool) or float(v) != int(float(v)):
                raise ValueError
            return int(float(v))
        return kind(v)
    except (TypeError, ValueError):
        raise ValidationError(field_name, f"expected {kind.__name__}, got {v!r}") from None


def _parse_weight(cfg):
    if not isinstance(cfg, dict):
        raise ValidationError("weight", "missing or not a mapping")
    try:
        return WeightFunction.from_config(cfg)
    except MassBelowTolerance as exc:
        raise ValidationError("weight mass", str(exc)) from None
    except ValidationError:
        raise
    except (KeyError, TypeError) as exc:
        raise ValidationError("weight", f"incomplete weight specification: {exc}") from None
    except DistCaputoError as exc:
        raise ValidationError("weight", str(exc)) from None


def _check_expr(src, domain, marks, path):
    if isinstance(src, bool) or not isinstance(src, (int, float, str)):
        raise ValidationError(".".join(map(str, path)), f"expected an expression, got {src!r}")
    try:
        compile_expression(str(src), domain.variables, domain.constants)
    except ParseError as exc:
        raise _expr_error(exc, marks, path) from None
    return str(src)


def parse_scenario_text(text, path=None):
    data, marks = _load(text)
    unknown = set(data) - TOP_KEYS
    if unknown:
        key = sorted(unknown)[0]
        line, col, _ = marks.get((key,), (None, None, None))
        raise ParseError(f"unknown top-level key {key!r}", line, col)
    digest = hashlib.sha256(text.encode()).hexdigest()

    mu = _parse_weight(data.get("weight"))

    dom_cfg = data.get("domain", {"kind": "interval", "L": math.pi})
    domain = Domain.from_config(dom_cfg)
    if domain.dim == 1:
        phi1 = "sqrt(2/L)*sin(pi*x/L)"
    else:
        phi1 = "2/sqrt(L1*L2)*sin(pi*x/L1)*sin(pi*y/L2)"

    co = dict(data.get("coefficients") or {})
    a = co.get("a", 1.0)
    if isinstance(a, list):
        if len(a) != domain.dim or any(not isinstance(r, list) or len(r) != domain.dim for r in a):
            raise ValidationError("coefficients.a", f"need a {domain.dim}x{domain.dim} matrix")
        a = [[_check_expr(a[i][j], domain, marks, ("coefficients", "a", i, j)) for j in range(domain.dim)]
             for i in range(domain.dim)]
    else:
        a = _check_expr(a, domain, marks, ("coefficients", "a"))
    b = co.get("b", 0.0)
    if isinstance(b, list):
        if len(b) != domain.dim:
            raise ValidationError("coefficients.b", f"need {domain.dim} components")
        b = [_check_expr(v, domain, marks, ("coefficients", "b", j)) for j, v in enumerate(b)]
    else:
        b = _check_expr(b, domain, marks, ("coefficients", "b"))
    c = _check_expr(co.get("c", 0.0), domain, marks, ("coefficients", "c"))
    lam = _get(co, "lambda", 1.0, float, "coefficients.lambda")
    Lam = _get(co, "Lambda", max(lam, 1.0), float, "coefficients.Lambda")

    g = dict(data.get("grid") or {})
    T = _get(g, "T", 1.0, float, "grid.T")
    M = _get(g, "M", 256, int, "grid.M")
    q = g.get("q", "auto")
    q = None if q in (None, "auto") else _get(g, "q", None, float, "grid.q")
    if not T > 0:
        raise ValidationError("grid.T", "must be positive")
    if M < 64:
        raise ValidationError("grid.M", "must be at least 64")
    if q is not None and q < 1:
        raise ValidationError("grid.q", "must be at least 1")

    source = _check_expr(data.get("source", 0.0), domain, marks, ("source",))
    coeffs = EllipticCoefficients.build(domain, a=a, b=b, c=c, f=source, lam=lam, Lam=Lam, T=T,
                                        seed=_get(data, "seed", 0, int, "seed"))

    modes = _get(data, "modes", 4, int, "modes")
    if modes < 1:
        raise ValidationError("modes", "need at least one mode")
    moll = data.get("mollification", "auto")
    if moll not in ("auto", None, "none"):
        moll = _get(data, "mollification", None, int, "mollification")
        if moll < 1:
            raise ValidationError("mollification", "index must be positive")
        if 1.0 / moll >= T:
            raise ValidationError("mollification", f"1/{moll} is not below T = {T}")
    elif moll == "none":
        moll = None

    man = data.get("manufactured")
    if man is not None:
        if not isinstance(man, dict) or "time" not in man:
            raise ValidationError("manufactured", "needs a 'time' expression in t")
        try:
            compile_expression(str(man["time"]), ("t",))
        except ParseError as exc:
            raise _expr_error(exc, marks, ("manufactured", "time")) from None
        mode = _get(man, "mode", 1, int, "manufactured.mode")
        if not 1 <= mode <= modes:
            raise ValidationError("manufactured.mode", f"must lie in 1..{modes}")
        man = {"time": str(man["time"]), "mode": mode}
        initial = None
    else:
        initial = _check_expr(data.get("initial", phi1), domain, marks, ("initial",))

    sol_cfg = dict(data.get("solver") or {})
    solver = {
        "picard_tol": _get(sol_cfg, "picard_tol", 1e-10, float, "solver.picard_tol"),
        "method": sol_cfg.get("method", "auto"),
    }
    if solver["method"] not in ("auto", "picard", "implicit"):
        raise ValidationError("solver.method", f"unknown method {solver['method']!r}")

    checks = data.get("checks", list(DEFAULT_CHECKS))
    if not isinstance(checks, list):
        raise ValidationError("checks", "must be a list")
    for i, ch in enumerate(checks):
        if ch not in KNOWN_CHECKS:
            line, col, _ = marks.get(("checks", i), (None, None, None))
            raise ValidationError("checks", f"unknown check {ch!r} (line {line}, column {col})")
    m = order_index_m(mu)
    if "continuity_m" in checks and m is None:
        raise ValidationError("checks", "m-regime continuity requested but the weight carries mass on [1/2, 1]")
    if "continuity_upper" in checks and m is not None:
        raise ValidationError("checks", f"H^-1 continuity requested but the weight has order index m = {m}")

    tol = dict(DEFAULT_TOLERANCES)
    tol.update(data.get("tolerances") or {})
    conv = dict(data.get("converge") or {})
    conv.setdefault("M", [64, 128, 256, 512])
    conv.setdefault("min_ratio", 1.5)

    return Scenario(
        name=str(data.get("name", Path(path).stem if path else "scenario")),
        weight=mu,
        domain=domain,
        coefficients=coeffs,
        coefficient_config={"a": a, "b": b, "c": c, "lambda": lam, "Lambda": Lam},
        initial=initial,
        source=source,
        grid=GridSpec(T, M, q),
        modes=modes,
        mollification=moll,
        solver=solver,
        checks=tuple(checks),
        tolerances=tol,
        output=data.get("output"),
        seed=_get(data, "seed", 0, int, "seed"),
        manufactured=man,
        converge=conv,
        digest=digest,
        path=None if path is None else str(path),
        raw=data,
    )


def parse_scenario(path):
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"scenario file not found: {path}")
    return parse_scenario_text(p.read_text(), p)
