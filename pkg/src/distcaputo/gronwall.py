"""Majorant series for Volterra inequalities with the resolvent kernel g.

If w <= a + f (g * w) with a, w >= 0 and f non-decreasing, then

    w(t) <= sum_k f(t)^k (g^[k] * a)(t),

where g^[k] is the k-fold convolution power. The series is summed term by
term on the grid; each node stops as soon as a computable tail bound drops
below the requested tolerance.

All routines accept several independent instances at once: a trajectory
with values of shape (M+1, n) is treated as n separate scalar problems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import EstimateViolation, HypothesisViolation, ProvenanceMismatch, ValidationError
from .fraccalc import SampledTrajectory, _check_grid, frac_integral
from .kernels import SpectralKernel, c_mu_T
from .weight import WeightFunction, analyze

MAX_TERMS = 4000
DENSE_MAX = 2048  # grids up to this size convolve through the dense matrix
CERT_RATIO = 0.9  # any r < 1 certifies: the term ratios decrease in k


def _exponents(gtab):
    if gtab.kernel != "g":
        raise ProvenanceMismatch(f"Gronwall majorants need the resolvent g, got {gtab.kernel!r}")
    ex = gtab.provenance.get("exponents")
    if ex is None:
        cfg = gtab.provenance.get("mu")
        if cfg is None:
            raise ProvenanceMismatch("table carries neither exponents nor a weight config")
        e = analyze(WeightFunction.from_config(cfg))
        ex = {"c_mu": e.c_mu, "gamma": e.gamma}
    return float(ex["c_mu"]), float(ex["gamma"])


def _plan(gtab):
    rep = gtab.get_representation()
    if not isinstance(rep, SpectralKernel):
        raise ProvenanceMismatch("g table has no spectral representation")
    return rep.plan(gtab.grid)


def analytic_constant(gtab):
    """c_{mu,T} with g(t) <= c t^(gamma-1) on (0, T]."""
    c_mu, gamma = _exponents(gtab)
    return c_mu_T(c_mu, gamma, gtab.grid.T)


def envelope_constant(gtab):
    """sup_t t^(1-gamma) g(t), bounded through the monotone envelope of the table.

    On [t_j, t_{j+1}] we use g(t) <= g(t_j) and t^(1-gamma) <= t_{j+1}^(1-gamma);
    the first panel uses its pure-power model. Falls back to the analytic
    constant when g is not monotone on the table or the model exponent is
    below gamma.
    """
    c_analytic = analytic_constant(gtab)
    _, gamma = _exponents(gtab)
    g = gtab.values
    t = gtab.grid.nodes
    if np.any(np.diff(g) > 0) or gtab.sigma0 < gamma:
        return c_analytic
    s0, C0 = gtab.first_panel
    first = C0 * t[1] ** (s0 - gamma)
    rest = np.max(g[:-1] * t[2:] ** (1.0 - gamma)) if g.size > 1 else 0.0
    return float(min(c_analytic, (1.0 + 1e-6) * max(first, rest)))


def _as_columns(x):
    v = np.asarray(x.values if isinstance(x, SampledTrajectory) else x, dtype=float)
    return v.reshape(v.shape[0], -1), v.shape


def iterated_convolution(gtab, a, k, check=True):
    """g^[k] * a; for nonnegative a also checks g^[k]*a <= (c Gamma(gamma))^k I^(k gamma) a."""
    _check_grid(gtab.grid, a.grid)
    if int(k) != k or k < 0:
        raise ValidationError("k", "need a nonnegative integer")
    if k == 0:
        return a.with_values(a.values.copy())
    plan = _plan(gtab)
    z = a.values
    for _ in range(int(k)):
        z = plan.apply(z)
    out = a.with_values(z)
    if check and np.all(a.values >= 0):
        c_mu, gamma = _exponents(gtab)
        scale = (analytic_constant(gtab) * special.gamma(gamma)) ** k
        bound = scale * frac_integral(a, k * gamma).values
        slack = 1e-6 * np.abs(bound) + 1e-12 * max(1.0, float(np.max(np.abs(z))))
        if np.any(z > bound + slack):
            raise EstimateViolation("iterated convolution exceeds the fractional-integral estimate")
    return out


@dataclass(frozen=True, eq=False)
class GronwallBound:
    grid: object
    bound: np.ndarray  # (M+1,) or (M+1, n)
    terms: np.ndarray  # number of retained k >= 1 terms per node
    residual: np.ndarray  # certified tail bound per node
    tol: float
    constant: float

    @property
    def certified(self):
        return bool(np.all(self.residual < self.tol))

    def to_csv(self, path):
        b = self.bound.reshape(self.grid.M + 1, -1)
        K = self.terms.reshape(b.shape)
        r = self.residual.reshape(b.shape)
        if b.shape[1] == 1:
            cols, names = [b[:, 0], K[:, 0], r[:, 0]], ["bound", "terms", "residual"]
        else:
            cols, names = [], []
            for i in range(b.shape[1]):
                cols += [b[:, i], K[:, i], r[:, i]]
                names += [f"bound_{i + 1}", f"terms_{i + 1}", f"residual_{i + 1}"]
        np.savetxt(
            path,
            np.column_stack([self.grid.nodes] + cols),
            delimiter=",",
            header=",".join(["t"] + names),
            comments="",
            fmt="%.17g",
        )
        return path


def _check_hypotheses(a, f):
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.any(a < -1e-14 * scale):
        raise HypothesisViolation("a must be nonnegative")
    if np.any(f < 0):
        raise HypothesisViolation("f must be nonnegative")
    fs = max(1.0, float(np.max(np.abs(f))))
    if np.any(np.diff(f, axis=0) < -1e-12 * fs):
        raise HypothesisViolation("f must be non-decreasing")


def _l1_running(t, a):
    """int_0^t |a| for the piecewise-linear interpolant (exact when a keeps its sign per step)."""
    h = np.diff(t)[:, None]
    inc = 0.5 * h * (np.abs(a[1:]) + np.abs(a[:-1]))
    return np.vstack([np.zeros((1, a.shape[1])), np.cumsum(inc, axis=0)])


def _tail_bound(k, f, c, gamma, t, L):
    """Sum over j > k of (f c Gamma(gamma))^j t^(j gamma - 1) L / Gamma(j gamma), or inf."""
    j = k + 1
    out = np.full(f.shape, np.inf)
    if j * gamma <= 1.0:
        return out
    tt = np.broadcast_to(t[:, None], f.shape)
    pos = (tt > 0) & (L > 0) & (f > 0)
    out[~pos] = 0.0
    with np.errstate(divide="ignore"):
        x = f[pos] * c * special.gamma(gamma)
        logb = j * np.log(x) + (j * gamma - 1.0) * np.log(tt[pos]) + np.log(L[pos]) - special.gammaln(j * gamma)
        # b_{i+1} / b_i is decreasing in i, so the tail is geometric with this ratio
        r = f[pos] * c * tt[pos] ** gamma * special.beta(gamma, j * gamma)
    val = np.where(r < CERT_RATIO, np.exp(np.minimum(logb, 700.0)) / (1.0 - np.minimum(r, 0.99)), np.inf)
    out[pos] = val
    return out


def gronwall_majorant(gtab, a, f, tol=1e-10, constant="auto", max_terms=MAX_TERMS):
    """Sum f^k (g^[k] * a) per node until the certified tail is below ``tol``.

    ``constant`` selects c in g(t) <= c t^(gamma-1) used by the tail
    certificate: "analytic" for the closed-form constant, "envelope" for the
    table-based one, "auto" for the smaller of the two.
    """
    _check_grid(gtab.grid, a.grid)
    _check_grid(gtab.grid, f.grid)
    A, shape = _as_columns(a)
    F, _ = _as_columns(f)
    F = np.broadcast_to(F, A.shape).copy()
    _check_hypotheses(A, F)
    _, gamma = _exponents(gtab)
    if constant == "analytic":
        c = analytic_constant(gtab)
    elif constant in ("envelope", "auto"):
        c = envelope_constant(gtab)
    else:
        raise ValidationError("constant", f"unknown choice {constant!r}")
    t = gtab.grid.nodes
    L = _l1_running(t, A)
    plan = _plan(gtab)

    conv = plan.matrix() if gtab.grid.M <= DENSE_MAX else None
    S = A.copy()
    K = np.zeros(A.shape, dtype=int)
    resid = np.where((F == 0) | (A.max(axis=0, keepdims=True) == 0), 0.0, np.inf)
    resid[0] = 0.0  # the convolution terms vanish at t = 0
    active = resid >= tol
    # z_k = g^[k] * a is kept as exp(logs) * zn per column; f^k and z_k would over/underflow separately
    zn = A.copy()
    logs = np.zeros(A.shape[1])
    with np.errstate(divide="ignore"):
        logF = np.log(F)
    k = 0
    while np.any(active) and k < max_terms:
        k += 1
        zn = np.maximum(conv @ zn if conv is not None else plan.apply(zn), 0.0)
        peak = zn.max(axis=0)
        nz = peak > 0
        zn[:, nz] /= peak[nz]
        logs[nz] += np.log(peak[nz])
        with np.errstate(divide="ignore", over="ignore", under="ignore", invalid="ignore"):
            term = np.where((zn > 0) & (F > 0), np.exp(k * logF + logs + np.log(zn)), 0.0)
        S = np.where(active, S + term, S)
        K = np.where(active, k, K)
        tail = _tail_bound(k, F, c, gamma, t, L)
        resid = np.where(active, tail, resid)
        active = active & (resid >= tol)
        if not np.any(peak):
            resid = np.where(active, 0.0, resid)
            active[:] = False
    return GronwallBound(gtab.grid, S.reshape(shape), K.reshape(shape), resid.reshape(shape), float(tol), float(c))


def certify_dominance(bound, w, a, f, gtab, tol=1e-10):
    """(dominated, max violation) of w <= bound, after checking w <= a + f (g * w)."""
    _check_grid(gtab.grid, w.grid)
    W, shape = _as_columns(w)
    A, _ = _as_columns(a)
    F, _ = _as_columns(f)
    F = np.broadcast_to(F, W.shape)
    gw = _plan(gtab).apply(W)
    rhs = A + F * gw
    slack = tol * np.maximum(1.0, np.abs(rhs))
    if np.any(W > rhs + slack):
        raise HypothesisViolation("w does not satisfy w <= a + f (g * w)")
    B = bound.bound.reshape(W.shape)
    excess = W - B
    worst = float(np.max(excess))
    return bool(worst <= tol), worst
