"""Numerical checks of energy identities, a-priori bounds and initial-time continuity.

Every check returns a report object with ``verdict()`` (a JSON-ready dict
``{check, pass, margin, tolerances, ...}``) and ``to_csv(path)``.

Terms that involve w are evaluated exactly for the piecewise-linear
interpolant of the nodal data, with the alpha-integral replaced by the
Gauss atoms of the kernel k = sum_a c_a tau^(p_a - 1), p_a = 1 - alpha_a.
Each term is then a sum of power moments per time panel.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import special

from . import _pi
from .errors import ArgumentOutOfSupportedRange, GridMismatch, OrderMismatch, ValidationError
from .fraccalc import SampledTrajectory, TimeGrid, mittag_leffler, singular_convolve
from .kernels import PowerMeasure, build_table, c_mu_T
from .weight import analyze, order_index_m


@dataclass
class Report:
    check: str
    passed: bool
    margin: float
    tolerances: dict
    columns: dict = field(default_factory=dict, repr=False)
    details: dict = field(default_factory=dict)

    def verdict(self):
        out = {"check": self.check, "pass": bool(self.passed), "margin": _num(self.margin),
               "tolerances": self.tolerances}
        out.update({k: _num(v) for k, v in self.details.items()})
        return out

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.verdict(), indent=2, sort_keys=True))
        return path

    def to_csv(self, path):
        if not self.columns:
            raise ValidationError("report", "nothing tabulated")
        names = list(self.columns)
        data = np.column_stack([np.asarray(self.columns[k], dtype=float) for k in names])
        np.savetxt(path, data, delimiter=",", header=",".join(names), comments="", fmt="%.17g")
        return path


def _num(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


# -- shared product-integration pieces -----------------------------------------------

def _atoms(mu):
    pm = PowerMeasure.kernel_k(mu)
    return pm.p, pm.c


def _vec(w):
    v = np.asarray(w.values if isinstance(w, SampledTrajectory) else w, dtype=float)
    return v.reshape(v.shape[0], -1)


def _check_nodes(M, n_check):
    if n_check is None or n_check >= M:
        return np.arange(1, M + 1)
    return np.unique(np.round(np.linspace(1, M, n_check)).astype(int))


def _pair_index(j_list):
    """Flattened (node j, panel i) pairs with i < j - 1 (panels away from t_j)."""
    J, I = [], []
    for j in j_list:
        if j >= 2:
            J.append(np.full(j - 1, j))
            I.append(np.arange(j - 1))
    if not J:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    return np.concatenate(J), np.concatenate(I)


def _history_terms(t, W, p, c, j_list):
    """sum_a alpha_a c_a int_0^t_j (t_j - s)^(-alpha_a - 1) |w(t_j) - w(s)|^2 ds for each j."""
    j_list = np.asarray(j_list, dtype=int)
    h = np.diff(t)
    S = np.diff(W, axis=0) / h[:, None]
    ss = np.einsum("ij,ij->i", S, S)
    J, I = _pair_index(j_list)
    a = t[J] - t[I + 1]
    hp = h[I]
    d = W[J] - W[I + 1]  # w(t_j) - w(t_{i+1})
    # |d + x h s|^2 with x = (tau' - a)/h, tau' = t_j - s
    q0 = np.einsum("ij,ij->i", d, d)
    q1 = 2.0 * hp * np.einsum("ij,ij->i", d, S[I])
    q2 = hp * hp * ss[I]
    out = np.zeros(j_list.size)
    pos = j_list > 0
    last = np.where(pos, j_list - 1, 0)
    slot = np.searchsorted(j_list, J) if J.size else J
    for pa, ca in zip(p, c):
        alpha = 1.0 - pa
        acc = np.where(pos, ss[last] * h[last] ** (2.0 - alpha) / (2.0 - alpha), 0.0)
        if J.size:
            mom = _pi.power_moments(a, hp, -alpha, kmax=2)
            acc += np.bincount(slot, q0 * mom[0] + q1 * mom[1] + q2 * mom[2], minlength=j_list.size)
        out += alpha * ca * acc
    return out


def _history_term(t, W, p, c, j):
    return float(_history_terms(t, W, p, c, [j])[0])


def _weighted_cumint(t, p, c, q):
    """Cumulative int_0^t_j K(tau) q(tau) dtau, K = sum c tau^(p-1), q piecewise linear."""
    h = np.diff(t)
    inc = np.zeros(h.size)
    for pa, ca in zip(p, c):
        m = _pi.power_moments(t[:-1], h, pa, kmax=1)
        inc += ca * (q[:-1] * (m[0] - m[1]) + q[1:] * m[1])
    return np.concatenate([[0.0], np.cumsum(inc)])


def _kernel_at(t, p, c):
    with np.errstate(divide="ignore"):
        return np.exp(np.multiply.outer(np.log(t), p - 1.0)) @ c


def _cum_square(t, W):
    """int_0^t_j |w|^2 for piecewise-linear w (exact)."""
    h = np.diff(t)
    q0 = np.einsum("ij,ij->i", W[:-1], W[:-1])
    q1 = np.einsum("ij,ij->i", W[1:], W[1:])
    qm = np.einsum("ij,ij->i", 0.5 * (W[:-1] + W[1:]), 0.5 * (W[:-1] + W[1:]))
    return np.concatenate([[0.0], np.cumsum(h / 6.0 * (q0 + 4.0 * qm + q1))])


# -- energy identity ------------------------------------------------------------------

def energy_identity_terms(w, mu, n_check=None):
    """Nodal values of the four terms of the energy identity for the interpolant of w.

    Returns (nodes, D|w|^2, history, initial, 2<D w, w>).
    """
    grid = w.grid
    t = grid.nodes
    W = _vec(w)
    p, c = _atoms(mu)
    h = np.diff(t)
    S = np.diff(W, axis=0) / h[:, None]
    idx = _check_nodes(grid.M, n_check)
    # all (j, i) pairs with i < j
    J = np.concatenate([np.full(j, j) for j in idx])
    I = np.concatenate([np.arange(j) for j in idx])
    slot = np.searchsorted(idx, J)
    a = t[J] - t[I + 1]
    m0 = np.zeros(J.size)
    m1 = np.zeros(J.size)
    for pa, ca in zip(p, c):
        mom = _pi.power_moments(a, h[I], pa, kmax=1)
        m0 += ca * mom[0]
        m1 += ca * mom[1]
    # tau = t_{i+1} - x h on panel i, so w = w_{i+1} - x h s_i
    ws = np.einsum("ij,ij->i", W[I + 1], S[I])
    ss = np.einsum("ij,ij->i", S[I], S[I])
    dn = np.bincount(slot, 2.0 * ws * m0 - 2.0 * h[I] * ss * m1, minlength=idx.size)
    kw = np.zeros((idx.size, W.shape[1]))
    np.add.at(kw, slot, m0[:, None] * S[I])  # (k * w')(t_j)
    cross = 2.0 * np.einsum("ij,ij->i", kw, W[idx])
    diff0 = W[idx] - W[0]
    init = _kernel_at(t[idx], p, c) * np.einsum("ij,ij->i", diff0, diff0)
    hist = _history_terms(t, W, p, c, idx)
    return t[idx], dn, hist, init, cross


def energy_identity_residual(w, mu, n_check=None, tol=5e-2, grid=None):
    """max |LHS - RHS| of the energy identity, relative to the largest single term."""
    if grid is not None and not grid.same_as(w.grid):
        raise GridMismatch("trajectory and requested grid differ")
    tt, dn, hist, init, cross = energy_identity_terms(w, mu, n_check)
    res = dn + hist + init - cross
    scale = max(float(np.max(np.abs(np.concatenate([dn, hist, init, cross])))), 0.0)
    rel = 0.0 if scale == 0.0 else float(np.max(np.abs(res)) / scale)
    negative = bool(np.any(hist < -1e-12 * max(scale, 1e-300)) or np.any(init < 0))
    return Report(
        "energy_identity",
        bool(rel < tol and not negative),
        tol - rel,
        {"relative": tol},
        {"t": tt, "d_norm_sq": dn, "history": hist, "initial": init, "cross": cross, "residual": res},
        {"relative_residual": rel, "absolute_residual": float(np.max(np.abs(res))), "scale": scale},
    )


# -- a-priori energy estimate -------------------------------------------------------------

def _sup_field(fld, X, ts):
    return max(float(np.max(np.abs(fld(X, float(tt))))) for tt in ts)


def _h_function(sol, samples=64):
    """h(t) = (2/lam) ||b||_inf^2 + 2 ||c||_inf, taken as a sup over time samples."""
    co = sol.system.coeffs
    X = sol.basis.points
    ts = np.linspace(0.0, sol.grid.T, samples)
    bsup = max(_sup_field(b, X, ts) for b in co.b)
    csup = _sup_field(co.c, X, ts)
    return 2.0 / co.lam * bsup**2 + 2.0 * csup


def _dual_sq(F, lam, s=1.0):
    F = np.atleast_2d(F)
    return np.sum(F**2 * lam ** (-s), axis=1)


def sliding_window_sup(fun, T, eps, samples=4096):
    """sup over t in [0, T - eps] of int_t^{t+eps} fun, by cumulative trapezoid on a fine grid."""
    if eps >= T:
        raise ValidationError("eps", "window longer than the horizon")
    ts = np.linspace(0.0, T, samples + 1)
    vals = np.array([fun(x) for x in ts])
    cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(ts) * (vals[1:] + vals[:-1]))])
    starts = ts[ts <= T - eps]
    return float(np.max(np.interp(starts + eps, ts, cum) - np.interp(starts, ts, cum)))


def energy_estimate_check(sol, raw_coeffs=None, n_check=64, tol=0.0):
    """LHS <= c~1 (|u0|^2 + int |f|_{H^-1}^2) + c1 delta_n at every checked node."""
    if sol.system is None or sol.mu is None or sol.basis is None:
        raise ValidationError("solution", "estimate needs the basis, the system and the weight")
    grid = sol.grid
    t = grid.nodes
    C = sol.coeffs
    lam_k = sol.basis.eigenvalues
    mu = sol.mu
    exps = sol.exponents or analyze(mu)
    p, c = _atoms(mu)
    co = sol.system.coeffs
    lam = co.lam
    T = grid.T

    norm_sq = np.sum(C**2, axis=1)
    pm = PowerMeasure(p, c)
    term1 = pm.integral_matrix(grid) @ norm_sq
    d0 = np.sum((C - sol.c0) ** 2, axis=1)
    term2 = _weighted_cumint(t, p, c, d0)
    grad = C**2 @ lam_k
    term3 = lam * np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (grad[1:] + grad[:-1]))])
    hist = _history_terms(t, C, p, c, np.arange(grid.M + 1))
    term4 = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (hist[1:] + hist[:-1]))])
    lhs = term1 + term2 + term3 + term4

    h_tilde = _h_function(sol)
    cmt = c_mu_T(exps.c_mu, exps.gamma, T)
    x = h_tilde * cmt * special.gamma(exps.gamma) * T**exps.gamma
    try:
        c1 = h_tilde * T * mittag_leffler(exps.gamma, 2.0, x) + 4.0 / lam * mittag_leffler(exps.gamma, 1.0, x)
    except ArgumentOutOfSupportedRange:
        c1 = math.inf  # the bound is vacuous, not violated
    c1t = c1 + 2.0 * max(1.0, T) * exps.c_mu

    raw = raw_coeffs if raw_coeffs is not None else co
    from .galerkin import GalerkinSystem

    raw_sys = GalerkinSystem(sol.basis, raw)
    fn = lambda s: float(_dual_sq(raw_sys.F(s), lam_k)[0])  # noqa: E731
    fs = np.array([fn(s) for s in t])
    f_int = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (fs[1:] + fs[:-1]))])
    n_moll = sol.n_moll
    delta = sliding_window_sup(fn, T, 1.0 / n_moll) if n_moll else 0.0
    u0_sq = float(sol.c0 @ sol.c0)
    rhs = c1t * (u0_sq + f_int) + (c1 * delta if delta else 0.0)

    idx = _check_nodes(grid.M, n_check)
    terms_ok = all(np.all(v[idx] >= -1e-12 * max(1.0, float(np.max(np.abs(v))))) for v in (term1, term2, term3, term4))
    margin = float(np.min(rhs[idx] - lhs[idx]))
    return Report(
        "energy_estimate",
        bool(margin >= -tol and terms_ok),
        margin,
        {"absolute": tol},
        {"t": t[idx], "lhs": lhs[idx], "rhs": rhs[idx], "fractional": term1[idx], "initial": term2[idx],
         "gradient": term3[idx], "history": term4[idx]},
        {"c1": c1, "c1_tilde": c1t, "h_tilde": h_tilde, "delta_n": delta, "terms_nonnegative": terms_ok,
         "vacuous": not math.isfinite(c1)},
    )


# -- coercivity -------------------------------------------------------------------------

def coercivity_profile(w, mu, exps=None):
    """Nodal (LHS, RHS) of the coercivity inequality for every node t_j."""
    grid = w.grid
    t = grid.nodes
    W = _vec(w)
    exps = exps or analyze(mu)
    p, c = _atoms(mu)
    pm = PowerMeasure(p, c)
    D = pm.derivative_matrix(grid) @ W  # d/dt (k * w), includes k(t) w(0)
    kt = np.zeros(t.size)
    kt[1:] = _kernel_at(t[1:], p, c)
    R = D - np.outer(kt, W[0])
    R[0] = 0.0
    # k(tau) w(0).w(tau) exactly; the bounded remainder by the trapezoid rule
    singular = _weighted_cumint(t, p, c, W @ W[0])
    rw = np.einsum("ij,ij->i", R, W)
    regular = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (rw[1:] + rw[:-1]))])
    lhs = singular + regular
    const = exps.c_mu * (1.0 - exps.gamma) / (4.0 * special.gamma(exps.gamma))
    rhs = np.zeros(t.size)
    rhs[1:] = const * t[1:] ** (-exps.gamma) * _cum_square(t, W)[1:]
    return t, lhs, rhs


def coercivity_check(w, mu, t=None, exps=None, tol=1e-10):
    """LHS >= RHS - tol at node t (or at every node t_j <= 1 when t is None)."""
    tt, lhs, rhs = coercivity_profile(w, mu, exps)
    if t is None:
        sel = (tt > 0) & (tt <= 1.0 + 1e-12)
    else:
        if t > 1.0:
            raise ValidationError("t", "the coercivity bound needs t <= 1")
        j = int(np.argmin(np.abs(tt - t)))
        if not math.isclose(tt[j], t, rel_tol=1e-12, abs_tol=1e-15):
            raise ValidationError("t", "t must be a grid node")
        sel = np.zeros(tt.size, dtype=bool)
        sel[j] = True
    scale = np.maximum(1.0, np.abs(rhs[sel]))
    gap = lhs[sel] - rhs[sel]
    margin = float(np.min(gap / scale)) if np.any(sel) else 0.0
    return Report(
        "coercivity",
        bool(np.all(gap >= -tol * scale)),
        margin,
        {"absolute": tol},
        {"t": tt[sel], "lhs": lhs[sel], "rhs": rhs[sel]},
        {"lhs": float(lhs[sel][-1]) if np.any(sel) else 0.0, "rhs": float(rhs[sel][-1]) if np.any(sel) else 0.0},
    )


# -- continuity at t = 0 -------------------------------------------------------------------

def dual_norm(values, eigenvalues, s):
    """(sum lambda_k^(-s) v_k^2)^(1/2), rowwise."""
    return np.sqrt(_dual_sq(values, eigenvalues, s))


def reconstruction_identity(sol, m=None, method="spectral"):
    """max_j |g_m * d/dt (k_m * (c - c0)) - (c - c0)| over the grid."""
    mu = sol.mu
    grid = sol.grid
    V = sol.coeffs - sol.c0
    if m is None:
        kk = PowerMeasure.kernel_k(mu)
        gtab = build_table(mu, grid, "g", exps=sol.exponents)
    else:
        kk = PowerMeasure.kernel_k_m(mu, m)
        gtab = build_table(mu, grid, "g_m", m=m, exps=sol.exponents)
    # k*V vanishes at 0, so g * (k*V)' = (g * k*V)'; differentiating last
    # avoids interpolating the kinked (k*V)' between nodes
    K = kk.integral_matrix(grid) @ V
    W = singular_convolve(gtab, SampledTrajectory(grid, K), method=method).values.reshape(V.shape)
    Z = np.gradient(W, grid.nodes, axis=0, edge_order=2)
    return float(np.max(np.abs(Z - V)))


@dataclass
class ContinuityReport(Report):
    regime: str = "upper"
    s: float = 1.0


def continuity_report(sol, exps=None, n_samples=24, threshold=0.05, identity_tol=1e-3, regime=None):
    """Approach u(t) -> u0 in the dual norm matching the weight's regime.

    (H^-1 when the upper half of mu carries mass, the dual of H^(2m+1)
    otherwise.) ``regime`` may force "upper" or "m"; forcing a regime the
    weight does not have raises OrderMismatch.
    """
    if sol.basis is None or sol.mu is None:
        raise ValidationError("solution", "continuity needs the basis and the weight")
    exps = exps or sol.exponents or analyze(sol.mu)
    actual = "upper" if exps.m is None else "m"
    if regime is not None and regime != actual:
        raise OrderMismatch(f"weight is in regime {actual!r}, not {regime!r}")
    if (exps.m is None) != (order_index_m(sol.mu) is None):
        raise OrderMismatch("exponents disagree with the weight's order index")
    s = 1.0 if exps.m is None else 2.0 * exps.m + 1.0
    grid = sol.grid
    T = grid.T
    ts = np.geomspace(T, grid.nodes[1], n_samples)
    from .galerkin import coefficients_at

    D = coefficients_at(sol, ts) - sol.c0
    lam_k = sol.basis.eigenvalues
    norms = dual_norm(D, lam_k, s)
    hm1 = dual_norm(D, lam_k, 1.0)
    ref = max(float(dual_norm(sol.c0, lam_k, s)[0]), float(norms[0]), 1e-300)
    mono = bool(np.all(np.diff(norms) <= 1e-12 * ref))
    small = bool(norms[-1] <= threshold * ref)
    pos = norms > 0
    if np.count_nonzero(pos) >= 2:
        rate = float(np.polyfit(np.log(ts[pos]), np.log(norms[pos]), 1)[0])
    else:
        rate = float("inf")
    dev = reconstruction_identity(sol, exps.m)
    passed = mono and small and dev < identity_tol
    rep = ContinuityReport(
        "continuity",
        passed,
        float(threshold * ref - norms[-1]),
        {"threshold": threshold, "identity": identity_tol},
        {"t": ts, "norm": norms, "h_minus1": hm1},
        {"norm": "H^-1" if s == 1.0 else f"(H^{int(s)})*", "monotone": mono, "rate": rate,
         "identity_deviation": dev, "regime": actual},
        regime=actual,
        s=s,
    )
    return rep


# -- regularity ------------------------------------------------------------------------

def regularity_monitor(sol, constant=None):
    """Spectral H^2 and gradient norms of the Galerkin solution against the data size."""
    if sol.basis is None:
        raise ValidationError("solution", "monitor needs the basis")
    t = sol.grid.nodes
    lam_k = sol.basis.eigenvalues
    C = sol.coeffs
    h2 = (C**2) @ lam_k**2
    grad = (C**2) @ lam_k
    trap = lambda v: float(np.sum(0.5 * np.diff(t) * (v[1:] + v[:-1])))  # noqa: E731
    h2_int = trap(h2)
    if sol.system is not None:
        fsq = np.array([float(np.sum(sol.system.F(tt) ** 2)) for tt in t])
    else:
        fsq = np.zeros(t.size)
    data = float(sol.c0**2 @ lam_k) + trap(fsq)
    lhs = h2_int + float(np.max(grad))
    passed = True if constant is None else bool(lhs <= constant * data)
    return Report(
        "regularity",
        passed,
        float("nan") if constant is None else constant * data - lhs,
        {"constant": constant},
        {"t": t, "grad_sq": grad, "h2_sq": h2},
        {"h2_integral": h2_int, "max_grad_sq": float(np.max(grad)), "data": data},
    )
