r"""Spectral Galerkin approximation of D^(mu) u = L u + f with Dirichlet data.

The unknown is expanded in Dirichlet-Laplacian eigenfunctions,
u^n = sum_k c_k(t) phi_k(x), and the coefficient vector solves the Volterra
system

.. math::

    c(t) = c_0 - (g * A c)(t) + (g * F)(t),

with A[m, k] = int a grad(phi_k).grad(phi_m) - (b.grad(phi_k) + c phi_k) phi_m
and F[m] = <f, phi_m>. Rows are indexed by the test function, so
D^(mu) c = -A c + F.

Time coefficients are mollified before assembly: a is reflected evenly at
0 and T, b and c are extended by zero, f is reflected oddly to (-T, 0) and
extended by zero past T.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import (
    EpsilonTooLarge,
    EstimateViolation,
    PicardStall,
    QuadratureFailure,
    UnsupportedDomain,
    ValidationError,
)
from .expr import Expression, compile_expression
from .fraccalc import SampledTrajectory, TimeGrid, _check_grid, distributed_caputo, singular_convolve
from .gronwall import _exponents, _plan, analytic_constant
from .kernels import PowerMeasure, build_table, default_grading
from .weight import WeightFunction, analyze, gauss_legendre

MOLLIFIER_NODES = 16


# -- domains and eigenfunctions ------------------------------------------------

@dataclass(frozen=True)
class Domain:
    kind: str
    lengths: tuple

    def __post_init__(self):
        want = {"interval": 1, "rectangle": 2}
        if self.kind not in want:
            raise UnsupportedDomain(f"unsupported domain kind {self.kind!r}")
        L = tuple(float(v) for v in self.lengths)
        if len(L) != want[self.kind] or not all(v > 0 for v in L):
            raise UnsupportedDomain(f"{self.kind} needs {want[self.kind]} positive lengths, got {self.lengths}")
        object.__setattr__(self, "lengths", L)

    @classmethod
    def interval(cls, L=math.pi):
        return cls("interval", (L,))

    @classmethod
    def rectangle(cls, L1=math.pi, L2=math.pi):
        return cls("rectangle", (L1, L2))

    @classmethod
    def from_config(cls, cfg):
        if not isinstance(cfg, dict) or "kind" not in cfg:
            raise UnsupportedDomain("domain config needs a 'kind'")
        kind = cfg["kind"]
        if kind == "interval":
            return cls.interval(float(cfg.get("L", math.pi)))
        if kind == "rectangle":
            return cls.rectangle(float(cfg.get("L1", math.pi)), float(cfg.get("L2", math.pi)))
        raise UnsupportedDomain(f"unsupported domain kind {kind!r}")

    def to_config(self):
        if self.kind == "interval":
            return {"kind": "interval", "L": self.lengths[0]}
        return {"kind": "rectangle", "L1": self.lengths[0], "L2": self.lengths[1]}

    @property
    def dim(self):
        return len(self.lengths)

    @property
    def variables(self):
        return ("x", "t") if self.dim == 1 else ("x", "y", "t")

    @property
    def constants(self):
        if self.dim == 1:
            return {"L": self.lengths[0]}
        return {"L1": self.lengths[0], "L2": self.lengths[1]}


def _sine(k, L, x):
    return math.sqrt(2.0 / L) * np.sin(k * math.pi * x / L)


def _dsine(k, L, x):
    return math.sqrt(2.0 / L) * (k * math.pi / L) * np.cos(k * math.pi * x / L)


class SpectralBasis:
    """The first n Dirichlet eigenpairs of -Laplace, with a tensor Gauss rule on the domain."""

    def __init__(self, domain, n):
        if int(n) != n or n < 1:
            raise ValidationError("n", "need at least one mode")
        self.domain = domain
        self.n = int(n)
        L = domain.lengths
        if domain.dim == 1:
            modes = [(k,) for k in range(1, self.n + 1)]
        else:
            cand = [(k1, k2) for k1 in range(1, self.n + 1) for k2 in range(1, self.n + 1)]
            modes = sorted(cand, key=lambda m: (_lam(m, L), m))[: self.n]
        self.modes = tuple(modes)
        self.eigenvalues = np.array([_lam(m, L) for m in modes])
        axes = []
        for d in range(domain.dim):
            kmax = max(m[d] for m in modes)
            x, w = gauss_legendre(max(64, 8 * kmax))
            axes.append((0.5 * L[d] * (x + 1.0), 0.5 * L[d] * w))
        if domain.dim == 1:
            self.points = axes[0][0][None, :]
            self.weights = axes[0][1]
        else:
            X, Y = np.meshgrid(axes[0][0], axes[1][0], indexing="ij")
            WX, WY = np.meshgrid(axes[0][1], axes[1][1], indexing="ij")
            self.points = np.vstack([X.ravel(), Y.ravel()])
            self.weights = (WX * WY).ravel()
        self.Phi = self.values(self.points)
        self.dPhi = self.gradients(self.points)

    def _coords(self, X):
        X = np.asarray(X, dtype=float)
        if self.domain.dim == 1 and (X.ndim < 2):
            X = np.atleast_1d(X)[None, :]
        if X.shape[0] != self.domain.dim:
            raise ValidationError("x", f"expected {self.domain.dim} coordinate rows")
        return X

    def values(self, X):
        """phi_k(X) as an (n, npts) array."""
        X = self._coords(X)
        L = self.domain.lengths
        out = np.ones((self.n, X.shape[1]))
        for i, m in enumerate(self.modes):
            for d, k in enumerate(m):
                out[i] *= _sine(k, L[d], X[d])
        return out

    def gradients(self, X):
        """grad phi_k(X) as an (n, dim, npts) array."""
        X = self._coords(X)
        L = self.domain.lengths
        dim = self.domain.dim
        out = np.ones((self.n, dim, X.shape[1]))
        for i, m in enumerate(self.modes):
            for comp in range(dim):
                for d, k in enumerate(m):
                    f = _dsine if d == comp else _sine
                    out[i, comp] *= f(k, L[d], X[d])
        return out

    def gram(self):
        return (self.Phi * self.weights) @ self.Phi.T

    def integrate(self, values):
        return float(np.dot(self.weights, values))


def _lam(mode, L):
    return float(sum((k * math.pi / l) ** 2 for k, l in zip(mode, L)))


def eigenpairs(domain, n):
    if not isinstance(domain, Domain):
        raise UnsupportedDomain(f"not a supported domain: {domain!r}")
    return SpectralBasis(domain, n)


# -- coefficient fields ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Field:
    """A function of (X, t) with X of shape (dim, npts); t is a scalar."""

    fn: Callable
    time_dependent: bool = True
    source: Optional[str] = None

    def __call__(self, X, t):
        X = np.asarray(X, dtype=float)
        out = np.asarray(self.fn(X, t), dtype=float)
        return np.broadcast_to(out, X.shape[1:]).copy()


def as_field(value, domain, name="field"):
    if isinstance(value, Field):
        return value
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        v = float(value)
        return Field(lambda X, t, _v=v: np.full(X.shape[1:], _v), False, repr(v))
    if isinstance(value, (str, Expression)):
        ex = value if isinstance(value, Expression) else compile_expression(value, domain.variables, domain.constants)
        names = domain.variables[:-1]

        def fn(X, t, _ex=ex, _names=names):
            env = {nm: X[i] for i, nm in enumerate(_names)}
            return _ex(t=t, **env)

        return Field(fn, ex.uses("t"), ex.source)
    if callable(value):
        return Field(value, True, None)
    raise ValidationError(name, f"cannot interpret {value!r} as a coefficient")


def _sym(f1, f2):
    if f1 is f2:
        return f1
    return Field(lambda X, t: 0.5 * (f1(X, t) + f2(X, t)), f1.time_dependent or f2.time_dependent)


@dataclass(frozen=True, eq=False)
class EllipticCoefficients:
    domain: Domain
    a: tuple
    b: tuple
    c: Field
    f: Field
    lam: float = 1.0
    Lam: float = 1.0
    mollification: Optional[tuple] = None  # (n, T) once mollified

    @classmethod
    def build(cls, domain, a=1.0, b=0.0, c=0.0, f=0.0, lam=1.0, Lam=1.0, check=True, T=1.0, tol=1e-8, seed=0):
        d = domain.dim
        if isinstance(a, (list, tuple)):
            rows = [[as_field(a[i][j], domain, f"a[{i}][{j}]") for j in range(d)] for i in range(d)]
        else:
            diag = as_field(a, domain, "a")
            zero = as_field(0.0, domain)
            rows = [[diag if i == j else zero for j in range(d)] for i in range(d)]
        A = tuple(tuple(_sym(rows[i][j], rows[j][i]) for j in range(d)) for i in range(d))
        if isinstance(b, (list, tuple)):
            if len(b) != d:
                raise ValidationError("b", f"need {d} components")
            B = tuple(as_field(v, domain, f"b[{j}]") for j, v in enumerate(b))
        else:
            B = tuple(as_field(b, domain, "b") for _ in range(d))
        out = cls(domain, A, B, as_field(c, domain, "c"), as_field(f, domain, "f"), float(lam), float(Lam))
        if check:
            out.check_ellipticity(T, tol, seed)
        return out

    def a_matrix(self, X, t):
        d = self.domain.dim
        return np.stack([np.stack([self.a[i][j](X, t) for j in range(d)]) for i in range(d)])

    def check_ellipticity(self, T=1.0, tol=1e-8, seed=0, probes=256):
        """Rayleigh quotients of a at random (x, t) must lie in [lam, Lam] up to tol."""
        if not 0 < self.lam <= self.Lam:
            raise ValidationError("ellipticity", "need 0 < lambda <= Lambda")
        rng = np.random.default_rng(seed)
        L = np.array(self.domain.lengths)
        X = rng.uniform(0.0, 1.0, (self.domain.dim, probes)) * L[:, None]
        ts = rng.uniform(0.0, T, probes)
        lo, hi = np.inf, -np.inf
        for i in range(probes):
            Ai = self.a_matrix(X[:, i : i + 1], ts[i])[:, :, 0]
            ev = np.linalg.eigvalsh(Ai)
            lo, hi = min(lo, ev[0]), max(hi, ev[-1])
        if lo < self.lam * (1 - tol) or hi > self.Lam * (1 + tol):
            raise ValidationError(
                "ellipticity", f"sampled eigenvalues [{lo:.6g}, {hi:.6g}] leave [{self.lam}, {self.Lam}]"
            )
        return lo, hi

    @property
    def time_dependent(self):
        fields = [x for row in self.a for x in row] + list(self.b) + [self.c]
        return any(x.time_dependent for x in fields) or self.mollification is not None


# -- mollification in time -----------------------------------------------------------

def _bump(x):
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


@functools.lru_cache(maxsize=8192)
def _mollifier_rule(t, eps, T):
    """Nodes s and weights w with sum w h(s) ~ int eta_eps(t - s) h(s) ds, sum w = 1."""
    cuts = [t - eps] + [c for c in (0.0, T) if t - eps < c < t + eps] + [t + eps]
    x, w = gauss_legendre(MOLLIFIER_NODES)
    s_all, w_all = [], []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        s = 0.5 * (hi - lo) * (x + 1.0) + lo
        s_all.append(s)
        w_all.append(0.5 * (hi - lo) * w * _bump((t - s) / eps))
    s, w = np.concatenate(s_all), np.concatenate(w_all)
    return s, w / w.sum()


def _extend(s, T, kind):
    """Map times outside [0, T] to (source time, sign)."""
    src = s.copy()
    sign = np.ones_like(s)
    lo, hi = s < 0.0, s > T
    if kind == "even":
        src[lo] = -s[lo]
        src[hi] = 2.0 * T - s[hi]
    elif kind == "zero":
        sign[lo | hi] = 0.0
    elif kind == "odd":
        src[lo] = -s[lo]
        sign[lo] = -1.0
        sign[hi] = 0.0
    src = np.clip(src, 0.0, T)
    return src, sign


def _mollify_field(fld, eps, T, kind):
    if kind == "even" and not fld.time_dependent:
        return fld

    def fn(X, t, _f=fld):
        s, w = _mollifier_rule(float(t), eps, T)
        src, sign = _extend(s, T, kind)
        ws = w * sign
        if not _f.time_dependent:
            return ws.sum() * _f(X, 0.0)
        acc = np.zeros(X.shape[1:])
        for si, wi in zip(src, ws):
            if wi != 0.0:
                acc += wi * _f(X, float(si))
        return acc

    return Field(fn, True, None if fld.source is None else f"mollified({fld.source})")


def mollify(coeffs, n, T):
    """Time-mollified coefficients with eps = 1/n."""
    if int(n) != n or n < 1:
        raise ValidationError("mollification", "index must be a positive integer")
    eps = 1.0 / n
    if eps >= T:
        raise EpsilonTooLarge(f"1/n = {eps} is not below T = {T}")
    d = coeffs.domain.dim
    A = tuple(tuple(_mollify_field(coeffs.a[i][j], eps, T, "even") for j in range(d)) for i in range(d))
    B = tuple(_mollify_field(b, eps, T, "zero") for b in coeffs.b)
    C = _mollify_field(coeffs.c, eps, T, "zero")
    F = _mollify_field(coeffs.f, eps, T, "odd")
    return EllipticCoefficients(coeffs.domain, A, B, C, F, coeffs.lam, coeffs.Lam, (int(n), float(T)))


# -- assembly ------------------------------------------------------------------------

def assemble_system(basis, coeffs, t):
    """(A(t), F(t)) for the given basis; A[m, k] pairs test phi_m with trial phi_k."""
    if basis.domain != coeffs.domain:
        raise ValidationError("domain", "basis and coefficients live on different domains")
    X, w = basis.points, basis.weights
    Phi, dPhi = basis.Phi, basis.dPhi
    d = basis.domain.dim
    A = np.zeros((basis.n, basis.n))
    for i in range(d):
        for j in range(d):
            aij = coeffs.a[i][j](X, t)
            A += (dPhi[:, i] * (w * aij)) @ dPhi[:, j].T
    for j in range(d):
        bj = coeffs.b[j](X, t)
        A -= (Phi * (w * bj)) @ dPhi[:, j].T
    A -= (Phi * (w * coeffs.c(X, t))) @ Phi.T
    F = Phi @ (w * coeffs.f(X, t))
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(F))):
        raise QuadratureFailure(f"non-finite assembly at t = {t}")
    return A, F


class GalerkinSystem:
    """Caches A(t), F(t) for one basis and one coefficient set."""

    def __init__(self, basis, coeffs):
        self.basis = basis
        self.coeffs = coeffs
        self._cache = {}
        self._static = None
        if not coeffs.time_dependent and not coeffs.f.time_dependent:
            self._static = assemble_system(basis, coeffs, 0.0)

    def _get(self, t):
        if self._static is not None:
            return self._static
        t = float(t)
        if t not in self._cache:
            self._cache[t] = assemble_system(self.basis, self.coeffs, t)
        return self._cache[t]

    def A(self, t):
        return self._get(t)[0]

    def F(self, t):
        return self._get(t)[1]


def project_initial(u0, basis):
    """<u0, phi_k> for k <= n, with a Bessel-inequality check."""
    fld = as_field(u0, basis.domain, "u0")
    vals = fld(basis.points, 0.0)
    coef = basis.Phi @ (basis.weights * vals)
    norm2 = basis.integrate(vals**2)
    if coef @ coef > norm2 * (1 + 1e-10) + 1e-14:
        raise EstimateViolation("projected coefficients exceed the L2 norm of u0")
    return coef


# -- solution container ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GalerkinSolution:
    grid: TimeGrid
    coeffs: np.ndarray  # (M+1, n)
    c0: np.ndarray
    basis: Optional[SpectralBasis] = None
    mu: Optional[WeightFunction] = None
    exponents: Optional[object] = None
    n_moll: Optional[int] = None
    system: Optional[GalerkinSystem] = field(default=None, repr=False)
    tolerances: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if not np.all(np.isfinite(c)):
            raise ValidationError("solution", "non-finite coefficients")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "c0", np.asarray(self.c0, dtype=float).reshape(-1))

    @property
    def n(self):
        return self.coeffs.shape[1]

    @property
    def t(self):
        return self.grid.nodes

    def trajectory(self):
        return SampledTrajectory(self.grid, self.coeffs)

    def l2_norm_sq(self):
        return np.sum(self.coeffs**2, axis=1)

    def metadata(self):
        return {
            "domain": None if self.basis is None else self.basis.domain.to_config(),
            "n": self.n,
            "M": self.grid.M,
            "T": self.grid.T,
            "q": self.grid.q,
            "n_moll": self.n_moll,
            "mu_digest": None if self.mu is None else self.mu.digest(),
            "exponents": None if self.exponents is None else self.exponents.as_dict(),
            "c0": self.c0.tolist(),
            "tolerances": self.tolerances,
            "solver": {k: v for k, v in self.info.items() if isinstance(v, (str, int, float, bool))},
        }

    def to_csv(self, path):
        path = Path(path)
        names = ["t"] + [f"c_{k + 1}" for k in range(self.n)]
        np.savetxt(path, np.column_stack([self.t, self.coeffs]), delimiter=",", header=",".join(names),
                   comments="", fmt="%.17g")
        path.with_suffix(".json").write_text(json.dumps(self.metadata(), indent=2, sort_keys=True))
        return path

    @classmethod
    def from_csv(cls, path):
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        grid = TimeGrid(meta["T"], meta["M"], meta["q"])
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        basis = None if meta["domain"] is None else eigenpairs(Domain.from_config(meta["domain"]), meta["n"])
        return cls(grid, data[:, 1:], np.array(meta["c0"]), basis=basis, n_moll=meta["n_moll"],
                   tolerances=meta["tolerances"])


# -- the Volterra solver -------------------------------------------------------------

def _sampler(obj, n, grid, name):
    """Turn a constant array, a nodal table or a callable into t_j -> value."""
    if obj is None:
        z = np.zeros(n) if name == "F" else np.zeros((n, n))
        return (lambda j: z), False
    if callable(obj):
        return (lambda j: np.asarray(obj(grid.nodes[j]), dtype=float)), True
    arr = np.asarray(obj, dtype=float)
    if name == "F" and arr.shape == (n,) or name == "A" and arr.shape == (n, n):
        return (lambda j: arr), False
    if arr.shape[0] == grid.M + 1:
        return (lambda j: arr[j]), True
    raise ValidationError(name, f"cannot interpret shape {arr.shape}")


def operator_norm_c1(A, T, samples):
    """sup ||A(t)|| + sup ||A'(t)|| on `samples` uniform nodes (finite differences)."""
    if not callable(A):
        arr = np.asarray(A, dtype=float)
        return float(np.linalg.norm(arr, 2)) if arr.ndim == 2 else float(max(np.linalg.norm(x, 2) for x in arr))
    ts = np.linspace(0.0, T, samples)
    mats = [np.asarray(A(t), dtype=float) for t in ts]
    sup = max(np.linalg.norm(m, 2) for m in mats)
    dt = ts[1] - ts[0]
    der = max(np.linalg.norm((m2 - m1) / dt, 2) for m1, m2 in zip(mats[:-1], mats[1:]))
    return float(sup + der)


def _segments(t, delta):
    segs, s, M = [], 0, t.size - 1
    while s < M:
        e = int(np.searchsorted(t, t[s] + delta, side="right")) - 1
        e = min(max(e, s + 1), M)
        segs.append((s, e))
        s = e
    return segs


def solve_volterra(gtab, A, F, c0, grid, picard_tol=1e-10, method="auto", max_iter=200, a_norm=None):
    """Solve c = c0 - g*(A c) + g*F on ``grid`` segment by segment.

    A and F may be callables of t, constant arrays or nodal tables. Segment
    length follows 2 (c/gamma) ||A||_{C^1} Delta^gamma < 1/2. ``method`` is
    "picard" (fixed-point iteration per segment), "implicit" (per-step
    linear solve of the same discrete equations) or "auto" (Picard unless the
    estimated discrete contraction factor reaches 1/2).
    """
    _check_grid(gtab.grid, grid)
    if grid.M < 64:
        raise ValidationError("grid.M", "the time march needs M >= 64")
    c0 = np.atleast_1d(np.asarray(c0, dtype=float))
    n = c0.size
    Aj, a_var = _sampler(A, n, grid, "A")
    Fj, _ = _sampler(F, n, grid, "F")
    _, gamma = _exponents(gtab)
    cmt = analytic_constant(gtab)
    t = grid.nodes
    if a_norm is None:
        if callable(A):
            a_norm = operator_norm_c1(A, grid.T, 4 * grid.M)
        elif np.ndim(A) == 3:
            a_norm = max(np.linalg.norm(x, 2) for x in np.asarray(A))
        else:
            a_norm = operator_norm_c1(A if A is not None else np.zeros((n, n)), grid.T, 2)
    delta = grid.T if a_norm == 0 else (gamma / (4.0 * cmt * a_norm)) ** (1.0 / gamma)
    segs = _segments(t, delta)
    plan = _plan(gtab)
    g1 = plan.apply(np.ones(grid.M + 1))
    a_sup = max(np.linalg.norm(Aj(j), 2) for j in range(0, grid.M + 1, max(1, grid.M // 64))) if a_var else \
        np.linalg.norm(Aj(0), 2)
    lengths = np.array([t[e] - t[s] for s, e in segs])
    rho = float(a_sup * np.interp(lengths.max(), t, g1))
    if method == "auto":
        method = "picard" if rho < 0.5 else "implicit"
    if method not in ("picard", "implicit"):
        raise ValidationError("method", f"unknown method {method!r}")

    c = np.zeros((grid.M + 1, n))
    v = np.zeros((grid.M + 1, n))
    c[0] = c0
    v[0] = Fj(0) - Aj(0) @ c0
    H = plan.initial_state(n)
    wd0, wd1 = plan.wd0, plan.wd1
    factors, iters = [], []
    eye = np.eye(n)

    for s, e in segs:
        idx = range(s + 1, e + 1)
        if method == "implicit":
            for j in idx:
                Fv, Am = Fj(j), Aj(j)
                rhs = c0 + plan.history(H, j) + wd0[j - 1] * v[j - 1] + wd1[j - 1] * Fv
                c[j] = np.linalg.solve(eye + wd1[j - 1] * Am, rhs)
                v[j] = Fv - Am @ c[j]
                H = plan.advance(H, j, v[j - 1], v[j])
            continue
        cur = np.tile(c[s], (e - s, 1))
        prev = None
        for it in range(max_iter):
            Hc, vprev = H, v[s]
            new = np.empty_like(cur)
            for jj, j in enumerate(idx):
                vj = Fj(j) - Aj(j) @ cur[jj]
                new[jj] = c0 + plan.history(Hc, j) + wd0[j - 1] * vprev + wd1[j - 1] * vj
                Hc = plan.advance(Hc, j, vprev, vj)
                vprev = vj
            diff = float(np.max(np.abs(new - cur)))
            cur = new
            if prev is not None and prev > 0:
                factors.append(diff / prev)
                if it >= 3 and factors[-1] >= 1.0:
                    raise PicardStall(f"Picard iteration diverges on [{t[s]:.3g}, {t[e]:.3g}]", factors[-1])
            if diff <= picard_tol * max(1.0, float(np.max(np.abs(cur)))):
                break
            prev = diff
        else:
            raise PicardStall(f"no convergence after {max_iter} iterations", factors[-1] if factors else float("nan"))
        iters.append(it + 1)
        for jj, j in enumerate(idx):
            c[j] = cur[jj]
            v[j] = Fj(j) - Aj(j) @ c[j]
            H = plan.advance(H, j, v[j - 1], v[j])

    info = {
        "method": method,
        "segments": len(segs),
        "delta": float(delta),
        "a_norm_c1": float(a_norm),
        "rho_estimate": rho,
        "max_factor": float(max(factors)) if factors else 0.0,
        "max_iterations": int(max(iters)) if iters else 0,
    }
    return GalerkinSolution(grid, c, c0, tolerances={"picard_tol": picard_tol}, info=info)


# -- post-processing -------------------------------------------------------------------

def coefficients_at(sol, t):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return np.column_stack([np.interp(t, sol.t, sol.coeffs[:, k]) for k in range(sol.n)])


def reconstruct(sol, x, t):
    """u^n(x, t) = sum_k c_k(t) phi_k(x), linear in t between nodes."""
    if sol.basis is None:
        raise ValidationError("basis", "solution carries no basis")
    ct = coefficients_at(sol, t)[0]
    vals = ct @ sol.basis.values(x)
    return float(vals[0]) if vals.size == 1 else vals


def volterra_residual(sol, gtab, A, F, method="table"):
    """max_j |c_j - c0 + (g*(A c))_j - (g*F)_j| with an independent convolution rule."""
    grid = sol.grid
    n = sol.n
    Aj, _ = _sampler(A, n, grid, "A")
    Fj, _ = _sampler(F, n, grid, "F")
    v = np.array([Fj(j) - Aj(j) @ sol.coeffs[j] for j in range(grid.M + 1)])
    conv = singular_convolve(gtab, SampledTrajectory(grid, v), method=method).values.reshape(grid.M + 1, n)
    return float(np.max(np.abs(sol.coeffs - sol.c0 - conv)))


def weak_residual(sol, m, t=None):
    """Signed weak-form residual for the test function phi_m (1-based).

    The time term differentiates k * (c_m - c_m(0)) by finite differences.
    Returns the nodal profile when ``t`` is None.
    """
    if sol.system is None or sol.mu is None:
        raise ValidationError("solution", "weak residual needs the assembled system and the weight")
    if m < 1:
        raise ValidationError("m", "test index starts at 1")
    grid = sol.grid
    n = sol.n
    if m <= n:
        K = PowerMeasure.kernel_k(sol.mu).integral_matrix(grid) @ (sol.coeffs[:, m - 1] - sol.c0[m - 1])
        dK = np.gradient(K, grid.nodes, edge_order=2)
        sysm = sol.system
        row = m - 1
    else:
        dK = np.zeros(grid.M + 1)
        sysm = GalerkinSystem(eigenpairs(sol.basis.domain, m), sol.system.coeffs)
        row = m - 1
    forcing = sol.info.get("forcing") if m <= n else None  # manufactured runs carry their own F
    res = np.empty(grid.M + 1)
    for j, tj in enumerate(grid.nodes):
        Af = sysm.A(tj)
        fj = sysm.F(tj)[row] if forcing is None else forcing[j][row]
        res[j] = dK[j] + Af[row, :n] @ sol.coeffs[j] - fj
    if t is None:
        return res
    return float(np.interp(t, grid.nodes, res))


def manufactured_forcing(mu, exact, A):
    """F with D^(mu) c = -A c + F for the nodal trajectory ``exact`` (shape (M+1, n))."""
    grid = exact.grid
    vals = exact.values.reshape(grid.M + 1, -1)
    D = distributed_caputo(exact.with_values(vals), mu).values.reshape(vals.shape)
    n = vals.shape[1]
    Aj, _ = _sampler(A, n, grid, "A")
    return np.array([D[j] + Aj(j) @ vals[j] for j in range(grid.M + 1)])


def default_mollification(n_modes, T):
    """Mollification index: the mode count, raised until 1/n < T."""
    n = int(n_modes)
    while 1.0 / n >= T:
        n += 1
    return n


def galerkin_solve(mu, domain, coeffs, u0, T=1.0, M=256, q=None, n_modes=4, n_moll="auto",
                   picard_tol=1e-10, method="auto", gtab=None, forcing=None):
    """Full pipeline: basis, mollified system, initial projection, Volterra march.

    ``n_moll=None`` skips mollification (useful for exact-solution tests);
    ``forcing`` may override F with a nodal table of shape (M+1, n).
    """
    exps = analyze(mu)
    if gtab is None:
        grid = TimeGrid(T, M, default_grading(exps.gamma) if q is None else q)
        gtab = build_table(mu, grid, "g", exps=exps)
    grid = gtab.grid
    basis = eigenpairs(domain, n_modes)
    if n_moll == "auto":
        n_moll = default_mollification(n_modes, grid.T)
    work = coeffs if n_moll is None else mollify(coeffs, n_moll, grid.T)
    system = GalerkinSystem(basis, work)
    c0 = project_initial(u0, basis)
    A = system.A if work.time_dependent else system.A(0.0)
    if forcing is not None:
        F = forcing
    elif work.f.time_dependent:
        F = np.array([system.F(tj) for tj in grid.nodes])
    else:
        F = system.F(0.0)
    sol = solve_volterra(gtab, A, F, c0, grid, picard_tol, method)
    return GalerkinSolution(
        grid, sol.coeffs, c0, basis=basis, mu=mu, exponents=exps, n_moll=n_moll, system=system,
        tolerances=sol.tolerances, info=sol.info,
    )
