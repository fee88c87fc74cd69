"""The order density mu on (0, 1) and the exponents derived from it.

A :class:`WeightFunction` is immutable. Three kinds are supported:

* ``analytic``: any vectorised callable (or an expression in ``alpha``),
  integrated adaptively;
* ``piecewise``: constant on the cells of a breakpoint list;
* ``tabulated``: linear interpolation of a table, zero outside it.

The exponent helpers (:func:`gamma_exponent`, :func:`gamma_zero`,
:func:`order_index_m`, :func:`gamma_m`) all reduce to bisection on a mass
balance; masses of piecewise and tabulated weights are exact.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from .errors import (
    MassBelowTolerance,
    OrderIndexOverflow,
    OrderMismatch,
    QuadratureNonConvergence,
    RootNotBracketed,
    ValidationError,
)
from .expr import compile_expression

MASS_TOL = 1e-12
ROOT_TOL = 1e-13
M_MAX = 64

_GL_CACHE: dict = {}


def gauss_legendre(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


@dataclass(frozen=True, eq=False)
class WeightFunction:
    kind: str
    evaluator: Callable = field(repr=False)
    support_hint: Optional[tuple] = None
    config: dict = field(default_factory=dict, repr=False)
    breaks: Optional[np.ndarray] = field(default=None, repr=False)
    values: Optional[np.ndarray] = field(default=None, repr=False)

    # -- constructors -----------------------------------------------------
    @classmethod
    def analytic(cls, func, support=None, validate=True):
        """Weight given by a callable of alpha or an expression string."""
        if isinstance(func, str):
            expr = compile_expression(func, variables=("alpha",))
            config = {"kind": "analytic", "expression": func}
            evaluator = lambda a, _e=expr: _e(alpha=a)  # noqa: E731
        else:
            config = {"kind": "analytic", "expression": None}
            evaluator = func
        if support is not None:
            lo, hi = float(support[0]), float(support[1])
            if not 0.0 <= lo < hi <= 1.0:
                raise ValidationError("weight.support", f"bad support {support}")
            support = (lo, hi)
            config["support"] = [lo, hi]
        mu = cls("analytic", evaluator, support, config)
        if validate:
            mu._validate()
        return mu

    @classmethod
    def piecewise(cls, breakpoints, values, validate=True):
        b = np.asarray(breakpoints, dtype=float)
        v = np.asarray(values, dtype=float)
        if b.ndim != 1 or v.shape != (b.size - 1,):
            raise ValidationError("weight.values", "need len(values) == len(breakpoints) - 1")
        if np.any(np.diff(b) <= 0) or b[0] < 0.0 or b[-1] > 1.0:
            raise ValidationError("weight.breakpoints", "must increase strictly inside [0, 1]")

        def evaluator(a, _b=b, _v=v):
            a = np.asarray(a, dtype=float)
            idx = np.searchsorted(_b, a, side="right") - 1
            inside = (idx >= 0) & (idx < _v.size)
            out = np.zeros(a.shape)
            out[inside] = _v[idx[inside]]
            return out

        nz = np.nonzero(v)[0]
        support = (float(b[nz[0]]), float(b[nz[-1] + 1])) if nz.size else None
        config = {"kind": "piecewise", "breakpoints": b.tolist(), "values": v.tolist()}
        mu = cls("piecewise", evaluator, support, config, b, v)
        if validate:
            mu._validate()
        return mu

    @classmethod
    def tabulated(cls, alpha, values, validate=True):
        a = np.asarray(alpha, dtype=float)
        v = np.asarray(values, dtype=float)
        if a.ndim != 1 or v.shape != a.shape or a.size < 2:
            raise ValidationError("weight.table", "need matching 1-D abscissae and values")
        if np.any(np.diff(a) <= 0) or a[0] < 0.0 or a[-1] > 1.0:
            raise ValidationError("weight.table", "abscissae must increase strictly inside [0, 1]")

        def evaluator(x, _a=a, _v=v):
            return np.interp(x, _a, _v, left=0.0, right=0.0)

        config = {"kind": "tabulated", "alpha": a.tolist(), "values": v.tolist()}
        mu = cls("tabulated", evaluator, (float(a[0]), float(a[-1])), config, a, v)
        if validate:
            mu._validate()
        return mu

    @classmethod
    def from_config(cls, cfg):
        if not isinstance(cfg, dict) or "kind" not in cfg:
            raise ValidationError("weight", "missing 'kind'")
        kind = cfg["kind"]
        if kind == "analytic":
            if "expression" not in cfg or cfg["expression"] is None:
                raise ValidationError("weight.expression", "analytic weight needs an expression")
            return cls.analytic(str(cfg["expression"]), support=cfg.get("support"))
        if kind == "piecewise":
            return cls.piecewise(cfg["breakpoints"], cfg["values"])
        if kind == "tabulated":
            return cls.tabulated(cfg["alpha"], cfg["values"])
        if kind == "uniform":
            return uniform(cfg.get("value", 1.0))
        if kind == "indicator":
            return indicator(cfg["lo"], cfg["hi"], cfg.get("height", 1.0))
        if kind == "bump":
            return bump(cfg["center"], cfg["width"], cfg.get("mass", 1.0))
        raise ValidationError("weight.kind", f"unknown kind {kind!r}")

    def to_config(self):
        return json.loads(json.dumps(self.config))

    # -- evaluation -------------------------------------------------------
    def __call__(self, alpha):
        a = np.asarray(alpha, dtype=float)
        out = np.asarray(self.evaluator(a), dtype=float)
        out = np.broadcast_to(out, a.shape).copy()
        out[(a < 0.0) | (a > 1.0)] = 0.0
        if self.support_hint is not None:
            lo, hi = self.support_hint
            out[(a < lo) | (a > hi)] = 0.0
        return out

    def panels(self, lo=0.0, hi=1.0):
        """Intervals inside [lo, hi] on which mu is smooth and may be nonzero."""
        if self.kind in ("piecewise", "tabulated"):
            edges = self.breaks
            cells = [
                (edges[i], edges[i + 1])
                for i in range(edges.size - 1)
                if self.kind == "tabulated" or self.values[i] != 0.0
            ]
        else:
            s = self.support_hint or (0.0, 1.0)
            cells = [s]
        out = []
        for a, b in cells:
            a, b = max(a, lo), min(b, hi)
            if b > a:
                out.append((float(a), float(b)))
        return out

    def support(self):
        """Smallest interval [lo, hi] known to contain the support of mu."""
        if self.kind == "piecewise":
            nz = np.nonzero(self.values)[0]
            return float(self.breaks[nz[0]]), float(self.breaks[nz[-1] + 1])
        if self.kind == "tabulated":
            nz = np.nonzero(self.values)[0]
            i0, i1 = max(nz[0] - 1, 0), min(nz[-1] + 1, self.breaks.size - 1)
            return float(self.breaks[i0]), float(self.breaks[i1])
        lo, hi = self.support_hint or (0.0, 1.0)
        probe = np.linspace(lo, hi, 4097)
        nz = np.nonzero(self(probe))[0]
        step = probe[1] - probe[0]
        return max(lo, float(probe[nz[0]] - step)), min(hi, float(probe[nz[-1]] + step))

    def mass(self, lo=0.0, hi=1.0):
        """Integral of mu over [lo, hi] (exact for piecewise and tabulated)."""
        lo, hi = max(float(lo), 0.0), min(float(hi), 1.0)
        if hi <= lo:
            return 0.0
        if self.kind == "piecewise":
            left = np.clip(self.breaks[:-1], lo, hi)
            right = np.clip(self.breaks[1:], lo, hi)
            return float(np.sum(self.values * (right - left)))
        if self.kind == "tabulated":
            pts = np.concatenate(([lo, hi], self.breaks[(self.breaks > lo) & (self.breaks < hi)]))
            pts.sort()
            vals = self(pts)
            return float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(pts)))
        total = 0.0
        for a, b in self.panels(lo, hi):
            with warnings.catch_warnings():
                warnings.simplefilter("error", integrate.IntegrationWarning)
                try:
                    val, _ = integrate.quad(
                        lambda x: float(self(np.array(x))), a, b, epsabs=0.0, epsrel=1e-12, limit=400
                    )
                except integrate.IntegrationWarning as exc:
                    raise QuadratureNonConvergence(f"mass of mu on [{a}, {b}]: {exc}") from None
            total += val
        return total

    def quadrature(self, lo=0.0, hi=1.0, nodes=16, max_width=0.25):
        """Composite Gauss-Legendre rule for integrals h(alpha) mu(alpha) dalpha.

        Returns ``(alpha, w)`` with ``w`` already multiplied by mu.
        """
        x, w = gauss_legendre(nodes)
        xs, ws = [], []
        for a, b in self.panels(lo, hi):
            k = max(1, int(math.ceil((b - a) / max_width - 1e-12)))
            edges = np.linspace(a, b, k + 1)
            for c, d in zip(edges[:-1], edges[1:]):
                xs.append(0.5 * (d - c) * x + 0.5 * (d + c))
                ws.append(0.5 * (d - c) * w)
        if not xs:
            return np.empty(0), np.empty(0)
        xs = np.concatenate(xs)
        ws = np.concatenate(ws) * self(xs)
        keep = ws != 0.0
        return xs[keep], ws[keep]

    def scaled(self, s):
        s = float(s)
        if s <= 0:
            raise ValidationError("weight.scale", "scale must be positive")
        if self.kind == "piecewise":
            return WeightFunction.piecewise(self.breaks, s * self.values)
        if self.kind == "tabulated":
            return WeightFunction.tabulated(self.breaks, s * self.values)
        src = self.config.get("expression")
        if src is not None:
            return WeightFunction.analytic(f"({s!r})*({src})", support=self.support_hint)
        return WeightFunction.analytic(lambda a, _f=self.evaluator: s * _f(a), support=self.support_hint)

    def digest(self):
        if self.config.get("kind") == "analytic" and self.config.get("expression") is None:
            probe = np.linspace(0.0, 1.0, 257)
            payload = {"kind": "analytic-callable", "samples": [repr(float(v)) for v in self(probe)]}
        else:
            payload = self.config
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def _validate(self):
        probe = np.linspace(0.0, 1.0, 1001)
        extra = [] if self.breaks is None else [self.breaks]
        probe = np.concatenate([probe] + extra)
        vals = self(probe)
        if not np.all(np.isfinite(vals[(probe > 0) & (probe < 1)])):
            raise ValidationError("weight", "mu is not finite on (0, 1)")
        if np.any(vals < 0.0):
            raise ValidationError("weight", "mu must be nonnegative")
        c = self.mass()
        if not c > MASS_TOL:
            raise MassBelowTolerance(f"weight mass {c:.3e} is not positive")


# -- convenience constructors ---------------------------------------------

def uniform(value=1.0):
    return WeightFunction.piecewise([0.0, 1.0], [value])


def indicator(lo, hi, height=1.0):
    lo, hi = float(lo), float(hi)
    edges = [0.0, lo, hi, 1.0]
    vals = [0.0, height, 0.0]
    if lo == 0.0:
        edges, vals = edges[1:], vals[1:]
    if hi == 1.0:
        edges, vals = edges[:-1], vals[:-1]
    return WeightFunction.piecewise(edges, vals)


def bump(center, width, mass=1.0):
    """Box of the given total mass, centred at ``center``."""
    lo, hi = center - 0.5 * width, center + 0.5 * width
    if lo < 0.0 or hi > 1.0:
        raise ValidationError("weight.bump", "bump must fit inside [0, 1]")
    return indicator(lo, hi, mass / width)


# -- exponents ------------------------------------------------------------

@dataclass(frozen=True)
class WeightExponents:
    c_mu: float
    gamma: float
    gamma_zero: Optional[float] = None
    b_mu: Optional[float] = None
    m: Optional[int] = None
    gamma_m: Optional[float] = None

    @property
    def regime(self):
        return "upper" if self.m is None else "m"

    def as_dict(self):
        return {
            "c_mu": self.c_mu,
            "gamma": self.gamma,
            "gamma_zero": self.gamma_zero,
            "b_mu": self.b_mu,
            "m": self.m,
            "gamma_m": self.gamma_m,
        }


def total_mass(mu):
    c = mu.mass(0.0, 1.0)
    if not c > MASS_TOL:
        raise MassBelowTolerance(f"total mass {c:.3e} <= {MASS_TOL}")
    return c


def _bisect(fun, lo, hi, what):
    flo, fhi = fun(lo), fun(hi)
    if not (flo > 0.0 and fhi < 0.0):
        raise RootNotBracketed(f"{what}: no sign change on [{lo}, {hi}] ({flo:.3e}, {fhi:.3e})")
    return optimize.bisect(fun, lo, hi, xtol=ROOT_TOL, maxiter=200)


def gamma_exponent(mu):
    """Root of x -> mass(x, 1-x) - (1-x) c_mu / 2 in (0, 1/2)."""
    c = total_mass(mu)
    return _bisect(lambda x: mu.mass(x, 1.0 - x) - 0.5 * (1.0 - x) * c, 0.0, 0.5, "gamma")


def gamma_zero(mu):
    """Half-mass witness for the upper half of mu, or None if that half is empty."""
    c = total_mass(mu)
    upper = mu.mass(0.5, 1.0)
    if upper <= MASS_TOL * c:
        return None
    return _bisect(lambda x: mu.mass(0.5 + x, 1.0 - x) - 0.5 * upper, 0.0, 0.25, "gamma_zero")


def order_index_m(mu, m_max=M_MAX):
    c = total_mass(mu)
    tol = MASS_TOL * c
    if mu.mass(0.5, 1.0) > tol:
        return None
    for m in range(1, m_max + 1):
        if mu.mass(1.0 / (2 * m), 1.0) <= tol and mu.mass(1.0 / (2 * (m + 1)), 1.0 / (2 * m)) > tol:
            return m
    raise OrderIndexOverflow(f"order index exceeds m_max={m_max}")


def gamma_m(mu, m):
    actual = order_index_m(mu)
    if actual != m:
        raise OrderMismatch(f"order index of mu is {actual}, not {m}")
    lo, hi = 1.0 / (2 * (m + 1)), 1.0 / (2 * m)
    half = 0.5 * mu.mass(lo, hi)
    return _bisect(lambda x: mu.mass(lo + x, hi - x) - half, 0.0, 0.5 * (hi - lo), "gamma_m")


def analyze(mu):
    c = total_mass(mu)
    g = gamma_exponent(mu)
    m = order_index_m(mu)
    if m is None:
        g0 = gamma_zero(mu)
        return WeightExponents(c, g, gamma_zero=g0, b_mu=mu.mass(0.5 + g0, 1.0 - g0))
    return WeightExponents(c, g, m=m, gamma_m=gamma_m(mu, m))
