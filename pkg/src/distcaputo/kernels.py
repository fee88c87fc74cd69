r"""The kernel k, its resolvent g and the iterated pair (k_m, g_m).

The kernel of the distributed-order derivative is

.. math::

    k(t) = \int_0^1 \frac{t^{-\alpha}}{\Gamma(1-\alpha)}\,\mu(\alpha)\,d\alpha,

and its resolvent g (with k * g = 1) is obtained from the real-axis inversion

.. math::

    g(t) = \frac1\pi\int_0^\infty e^{-rt}\,\psi(r)\,dr, \qquad
    \psi(r) = \operatorname{Im}\frac{1}{\overline{Z(r)}^{\,m+1}},\quad
    Z(r) = \int e^{i\pi\alpha} r^\alpha \mu(\alpha)\,d\alpha,

with m = 0 for g itself. For m >= 1 the real and imaginary parts of Z^(m+1)
are exactly the iterated (m+1)-fold alpha-integrals, so g_m needs no tensor
quadrature.

Two kernel representations are used downstream:

* :class:`PowerMeasure`: a finite sum of power kernels c_k tau^(p_k - 1),
  handled exactly by product integration;
* :class:`SpectralKernel`: g or g_m as a superposition of decaying
  exponentials, which gives an O(M) recursive convolution (:class:`ConvolutionPlan`).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import integrate, special

from . import _pi
from .errors import (
    DimensionTooLarge,
    NonPositiveTime,
    OnBranchCut,
    OrderMismatch,
    ProvenanceMismatch,
    QuadratureNonConvergence,
    ValidationError,
)
from .fraccalc import TimeGrid, measure_derivative_matrix, measure_integral_matrix
from .weight import WeightFunction, analyze, gauss_legendre, order_index_m

U_PANEL = 0.5
U_NODES = 12
U_CHECK_NODES = 8
U_FLOOR = -700.0
U_CEIL = 2000.0
CUTOFF = 45.0  # e^{-45} is negligible against the retained integrand
RTOL_G = 1e-8
TENSOR_MAX_M = 6
TENSOR_MAX_ATOMS = 2_000_000


# -- constants from the kernel estimates --------------------------------------

def prop2_constant(c_mu, gamma):
    return 4.0 * special.gamma(gamma) * math.sqrt(math.pi) / (math.pi**2 * c_mu)


def g_upper_bound(t, c_mu, gamma):
    """Pointwise upper bound C (sqrt(pi) t^(gamma-1) + Gamma(gamma) t^(-gamma))."""
    t = np.asarray(t, dtype=float)
    return prop2_constant(c_mu, gamma) * (math.sqrt(math.pi) * t ** (gamma - 1.0) + special.gamma(gamma) * t ** (-gamma))


def c_mu_T(c_mu, gamma, T):
    """Constant with g(t) <= c_mu_T t^(gamma-1) on (0, T]."""
    return prop2_constant(c_mu, gamma) * (
        math.sqrt(math.pi) + special.gamma(gamma) * max(1.0, T) ** (1.0 - 2.0 * gamma)
    )


def laplace_lower_constant(c_mu, gamma):
    s = min(math.sin(gamma * math.pi / 2), math.sin(gamma * math.pi), math.sqrt(2) / 2)
    return s * 0.5 * (1.0 - gamma) * c_mu


def g_l2_bound(t, b_mu, gamma_zero):
    """Upper bound on g valid when the upper half of mu carries mass."""
    bbar = math.sin(math.pi * gamma_zero) * b_mu
    t = np.asarray(t, dtype=float)
    return (1.0 / gamma_zero + special.gamma(0.5 - gamma_zero) * t ** (gamma_zero - 0.5)) / (bbar * math.pi)


def g_m_exponent(m, gamma_m):
    """sigma_m with g_m(t) <= c t^(sigma_m - 1)."""
    return (1.0 / (2 * (m + 1)) + gamma_m) * (m + 1)


def g_m_lq_threshold(m, gamma_m):
    return 2.0 + 4.0 * gamma_m * (m + 1) / (1.0 - 4.0 * gamma_m)


# -- pointwise k and its Laplace symbol ---------------------------------------

def _check_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise NonPositiveTime("kernels are defined for t > 0")
    return t


def kernel_k(mu, t):
    """k(t) by adaptive quadrature in alpha (relative tolerance 1e-10)."""
    t = _check_time(t)

    def one(tt):
        lt = math.log(tt)
        total = 0.0
        for a, b in mu.panels():
            val, _ = integrate.quad(
                lambda al: math.exp(-al * lt) * special.rgamma(1.0 - al) * float(mu(np.array(al))),
                a, b, epsabs=0.0, epsrel=1e-11, limit=200,
            )
            total += val
        return total

    out = np.vectorize(one, otypes=[float])(t)
    return float(out) if out.ndim == 0 else out


def laplace_k(mu, p, nodes=16, max_width=0.0625):
    """k~(p) = int p^(alpha-1) mu(alpha) dalpha on the principal branch."""
    p = np.asarray(p, dtype=complex)
    if np.any((p.imag == 0) & (p.real <= 0)):
        raise OnBranchCut("p lies on the cut (-inf, 0]")
    al, w = mu.quadrature(nodes=nodes, max_width=max_width)
    logp = np.log(p)
    out = np.exp(np.multiply.outer(logp, al - 1.0)) @ w
    return complex(out) if out.ndim == 0 else out


def check_laplace_lower_bounds(mu, exps=None, eta=0.05, radii=None, n_phi=41):
    """Sample |p k~(p)| against c~ r^(1-gamma) (r <= 1) and c~ r^gamma (r > 1)."""
    exps = exps or analyze(mu)
    radii = np.logspace(-6, 6, 61) if radii is None else np.asarray(radii)
    phis = np.linspace(-(math.pi - eta), math.pi - eta, n_phi)
    P = np.multiply.outer(radii, np.exp(1j * phis))
    lhs = np.abs(P * laplace_k(mu, P))
    c = laplace_lower_constant(exps.c_mu, exps.gamma)
    rhs = c * np.where(radii <= 1.0, radii ** (1.0 - exps.gamma), radii**exps.gamma)[:, None]
    ratio = lhs / rhs
    return {"constant": c, "min_ratio": float(ratio.min()), "violations": int(np.sum(lhs < rhs))}


# -- power-measure kernels -------------------------------------------------------

def _gauss_compress(x, w, n):
    """Gauss rule with n nodes matching the first 2n moments of sum w delta_x."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    if x.size <= n:
        return x, w
    total = w.sum()
    center = 0.5 * (x.max() + x.min())
    scale = 0.5 * (x.max() - x.min()) or 1.0
    y = (x - center) / scale
    V = np.zeros((n, x.size))
    a = np.zeros(n)
    b = np.zeros(n)
    v = np.sqrt(w / total)
    size = n
    for k in range(n):
        V[k] = v
        z = y * v
        a[k] = v @ z
        z = z - a[k] * v - (b[k - 1] * V[k - 1] if k else 0.0)
        z = z - V[: k + 1].T @ (V[: k + 1] @ z)
        b[k] = np.linalg.norm(z)
        if b[k] < 1e-13:
            size = k + 1
            break
        v = z / b[k]
    J = np.diag(a[:size]) + np.diag(b[: size - 1], 1) + np.diag(b[: size - 1], -1)
    theta, Q = np.linalg.eigh(J)
    return center + scale * theta, total * Q[0] ** 2


def _beta_atoms(mu, m, n_compress=32, nodes=16):
    """Compressed rule for the distribution of alpha_0 + ... + alpha_m, alpha_i ~ mu."""
    lo, hi = mu.support()
    al, w = mu.quadrature(lo, hi, nodes=nodes, max_width=max((hi - lo) / 2, 1e-3))
    x, wx = al, w
    for _ in range(m):
        x = np.add.outer(x, al).ravel()
        wx = np.multiply.outer(wx, w).ravel()
        x, wx = _gauss_compress(x, wx, n_compress)
    return x, wx


@dataclass(frozen=True, eq=False)
class PowerMeasure:
    """Kernel K(tau) = sum_k c_k tau^(p_k - 1), all p_k > 0."""

    p: np.ndarray
    c: np.ndarray

    @classmethod
    def kernel_k(cls, mu, nodes=16, max_width=0.125):
        al, w = mu.quadrature(nodes=nodes, max_width=max_width)
        return cls(1.0 - al, w * special.rgamma(1.0 - al))

    @classmethod
    def kernel_k_m(cls, mu, m, n_compress=32):
        _require_m(mu, m)
        beta, w = _beta_atoms(mu, m, n_compress)
        return cls(1.0 - beta, w * special.rgamma(1.0 - beta))

    @classmethod
    def fractional(cls, alpha):
        return cls(np.array([float(alpha)]), np.array([special.rgamma(alpha)]))

    def value(self, t):
        t = _check_time(t)
        lt = np.log(t)
        out = np.exp(np.multiply.outer(lt, self.p - 1.0)) @ self.c
        return float(out) if np.ndim(out) == 0 else out

    def scaled(self, s):
        return PowerMeasure(self.p, self.c * s)

    @property
    def max_exponent(self):
        """Largest singularity exponent 1 - min p."""
        return float(1.0 - self.p.min())

    def integral_matrix(self, grid):
        return measure_integral_matrix(grid, self.p, self.c)

    def derivative_matrix(self, grid):
        return measure_derivative_matrix(grid, self.p, self.c)


def _require_m(mu, m):
    actual = order_index_m(mu)
    if actual != m:
        raise OrderMismatch(f"order index of mu is {actual}, not {m}")


def kernel_k_m(mu, m, t, method="auto", samples=200_000, seed=0, return_error=False):
    """Iterated kernel k_m(t) as an (m+1)-fold alpha-integral.

    ``method="tensor"`` uses a tensor Gauss rule (m <= 6); ``"montecarlo"``
    samples the alphas from mu and reports a standard error; ``"auto"``
    picks the tensor rule when allowed and falls back to Monte Carlo.
    """
    _require_m(mu, m)
    t = _check_time(t)
    if method == "auto":
        method = "tensor" if m <= TENSOR_MAX_M else "montecarlo"
        if method == "montecarlo":
            warnings.warn(f"k_m with m={m}: Monte Carlo fallback", RuntimeWarning, stacklevel=2)
    lo, hi = mu.support()
    lt = np.log(np.atleast_1d(t))
    if method == "tensor":
        if m > TENSOR_MAX_M:
            raise DimensionTooLarge(f"tensor quadrature limited to m <= {TENSOR_MAX_M}")
        n_dim = int(min(16, max(2, math.floor(TENSOR_MAX_ATOMS ** (1.0 / (m + 1))))))
        al, w = mu.quadrature(lo, hi, nodes=n_dim, max_width=hi - lo)
        beta, wb = al, w
        for _ in range(m):
            beta = np.add.outer(beta, al).ravel()
            wb = np.multiply.outer(wb, w).ravel()
        coef = wb * special.rgamma(1.0 - beta)
        val = np.array([np.sum(coef * np.exp(-beta * x)) for x in lt])
        err = np.zeros_like(val)
    elif method == "montecarlo":
        rng = np.random.default_rng(seed)
        grid = np.linspace(lo, hi, 4097)
        dens = mu(grid)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
        c_mu = mu.mass()
        cdf /= cdf[-1]
        beta = np.zeros(samples)
        for _ in range(m + 1):
            beta += np.interp(rng.random(samples), cdf, grid)
        val, err = [], []
        for x in lt:
            y = np.exp(-beta * x) * special.rgamma(1.0 - beta) * c_mu ** (m + 1)
            val.append(y.mean())
            err.append(y.std(ddof=1) / math.sqrt(samples))
        val, err = np.array(val), np.array(err)
    else:
        raise ValidationError("method", f"unknown method {method!r}")
    if np.ndim(t) == 0:
        val, err = float(val[0]), float(err[0])
    return (val, err) if return_error else val


# -- spectral kernels ------------------------------------------------------------

def _cexpm1(w):
    x, y = w.real, w.imag
    return np.expm1(x) * np.cos(y) - 2.0 * np.sin(0.5 * y) ** 2 + 1j * np.exp(x) * np.sin(y)


class _Symbol:
    """log psi(e^u), psi(r) = Im[1 / conj(Z(r))^(m+1)], evaluated with exponent scaling."""

    def __init__(self, mu, m=0):
        self.mu = mu
        self.m = int(m)
        self.lo, self.hi = mu.support()
        self.cells = None
        if mu.kind == "piecewise":
            b, v = mu.breaks, mu.values
            self.cells = [(b[i], b[i + 1], v[i]) for i in range(v.size) if v[i] != 0.0]
        self._rules = {}

    def _rule(self, level):
        if level not in self._rules:
            width = 0.0625 / 2**level
            self._rules[level] = self.mu.quadrature(self.lo, self.hi, nodes=16, max_width=width)
        return self._rules[level]

    def scaled_z(self, u):
        u = np.asarray(u, dtype=float)
        ref = np.where(u >= 0.0, self.hi, self.lo)
        if self.cells is not None:
            z = u + 1j * math.pi
            pos = u >= 0.0
            acc = np.zeros(u.shape, dtype=complex)
            for a, b, v in self.cells:
                up = np.exp((b - ref) * u + 1j * math.pi * b) * (-_cexpm1(-(b - a) * z))
                dn = np.exp((a - ref) * u + 1j * math.pi * a) * _cexpm1((b - a) * z)
                acc += v * np.where(pos, up, dn)
            return ref, acc / z
        out = np.empty(u.shape, dtype=complex)
        need = np.minimum(0.0625, 8.0 / np.maximum(np.abs(u), 1e-300))
        level = np.maximum(0, np.ceil(np.log2(0.0625 / need))).astype(int)
        for lev in np.unique(level):
            sel = np.nonzero(level == lev)[0]
            al, w = self._rule(int(lev))
            for chunk in np.array_split(sel, max(1, sel.size // 256)):
                uu, rr = u[chunk], ref[chunk]
                expo = np.multiply.outer(uu, al) - (rr * uu)[:, None] + 1j * math.pi * al
                out[chunk] = np.exp(expo) @ w
        return ref, out

    def logpsi(self, u):
        u = np.asarray(u, dtype=float)
        ref, zh = self.scaled_z(u)
        k = self.m + 1
        with np.errstate(divide="ignore", invalid="ignore"):
            return -k * (ref * u + np.log(np.abs(zh))) + np.log(np.sin(k * np.angle(zh)))


def _phi2(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    s = x < 0.5
    xs = x[s]
    acc = np.zeros_like(xs)
    fact = 1.0
    for n in range(20):
        acc += (-xs) ** n / (fact * (n + 2))
        fact *= n + 1
    out[s] = acc
    xl = x[~s]
    out[~s] = (1.0 - np.exp(-xl) * (1.0 + xl)) / xl**2
    return out


def _phi12(x):
    """phi1 - phi2 = int_0^1 (1-s) e^{-xs} ds."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    s = x < 0.5
    xs = x[s]
    acc = np.zeros_like(xs)
    fact = 1.0
    for n in range(20):
        acc += (-xs) ** n / (fact * (n + 1) * (n + 2))
        fact *= n + 1
    out[s] = acc
    xl = x[~s]
    out[~s] = -np.expm1(-xl) / xl - (1.0 - np.exp(-xl) * (1.0 + xl)) / xl**2
    return out


class _LogLattice:
    """Composite Gauss-Legendre rule in u = log r on panels of fixed width, cached."""

    def __init__(self, logf, nodes=U_NODES, panel=U_PANEL):
        self.logf = logf
        self.panel = panel
        self.x, self.w = gauss_legendre(nodes)
        self.xc, self.wc = gauss_legendre(U_CHECK_NODES)
        self._cache = {}

    def _panel_data(self, k, check=False):
        key = (k, check)
        if key not in self._cache:
            x, w = (self.xc, self.wc) if check else (self.x, self.w)
            a = k * self.panel
            u = a + 0.5 * self.panel * (x + 1.0)
            self._cache[key] = (u, 0.5 * self.panel * w, self.logf(u))
        return self._cache[key]

    def nodes(self, u_a, u_b, check=False):
        k0 = int(math.floor(u_a / self.panel + 1e-12))
        k1 = int(math.ceil(u_b / self.panel - 1e-12))
        parts = [self._panel_data(k, check) for k in range(k0, max(k1, k0 + 1))]
        return tuple(np.concatenate(z) for z in zip(*parts))


def _lower_cutoff(logf, start=-5.0):
    """Lower end of the u-range for int exp(logf(u) + u) du plus a tail weight."""
    ref = logf(np.array([0.0]))[0]
    u = start
    while u > U_FLOOR:
        val = logf(np.array([u, u + 0.5]))
        if val[0] + u < ref + math.log(1e-18) and val[1] + 0.5 > val[0]:
            break
        u -= 5.0
    val = logf(np.array([u, u + 0.5]))
    kappa = (val[1] + 0.5 - val[0]) / 0.5
    if not kappa > 0:
        raise QuadratureNonConvergence("integrand does not decay as r -> 0")
    return u, 1.0 / kappa


class SpectralKernel:
    """g (m = 0) or g_m as (1/pi) int_0^inf e^{-rt} psi(r) dr."""

    def __init__(self, mu, m=0, logpsi=None):
        self.mu = mu
        self.m = int(m)
        self._logpsi = logpsi if logpsi is not None else _Symbol(mu, m).logpsi
        self.lattice = _LogLattice(self._logpsi)
        self.u_lo, self.tail_lo = _lower_cutoff(self._logpsi)
        self._plans = {}

    def logpsi(self, u):
        return self._logpsi(np.asarray(u, dtype=float))

    def _nodes(self, u_hi, check=False):
        u, w, lp = self.lattice.nodes(self.u_lo, u_hi, check)
        keep = u >= self.u_lo
        u, w, lp = u[keep], w[keep], lp[keep]
        lp_lo = self._logpsi(np.array([self.u_lo]))
        return (np.append(u, self.u_lo), np.append(w, self.tail_lo), np.append(lp, lp_lo))

    def value(self, t, return_error=False):
        """g(t) with an a-posteriori error estimate from a coarser rule."""
        t = _check_time(t)
        tt = np.atleast_1d(t).astype(float)
        u_hi = math.log(CUTOFF / tt.min())
        res = []
        for check in (False, True):
            u, w, lp = self._nodes(u_hi, check)
            with np.errstate(over="ignore", under="ignore"):
                expo = lp + u - np.multiply.outer(tt, np.exp(u))
                res.append(np.exp(expo) @ w / math.pi)
        val, err = res[0], np.abs(res[0] - res[1])
        bad = err > 1e-6 * np.abs(val)
        if np.any(bad):
            raise QuadratureNonConvergence(f"g quadrature estimate {float(np.max(err / val)):.2e} exceeds budget")
        if np.ndim(t) == 0:
            val, err = float(val[0]), float(err[0])
        return (val, err) if return_error else val

    __call__ = value

    def plan(self, grid):
        if grid.key not in self._plans:
            self._plans[grid.key] = ConvolutionPlan(self, grid)
        return self._plans[grid.key]


class ConvolutionPlan:
    """Exact-kernel product integration of g * f for piecewise-linear f.

    Each exponential e^{-r tau} in the spectral representation of g carries
    its own history H_r(t) = int_0^t e^{-r(t-s)} f(s) ds, updated in O(1)
    per step, so a full convolution costs O(M * n_u).
    """

    def __init__(self, kernel, grid):
        self.grid = grid
        t = grid.nodes
        h = np.diff(t)
        self.h = h
        hmin = float(h.min())
        u_hi = math.log(CUTOFF / hmin)
        u, w, lp = kernel._nodes(u_hi)
        r = np.exp(u)
        coeff = w * np.exp(lp + u) / math.pi
        X = np.multiply.outer(h, r)
        with np.errstate(under="ignore"):
            E = np.exp(-X)
        self.E = E
        self.CE = E * coeff
        self.P2 = h[:, None] * _phi2(X)
        self.P12 = h[:, None] * _phi12(X)
        wd0 = self.P2 @ coeff
        wd1 = self.P12 @ coeff
        # long tail of the local (a = 0) panel weights
        U = u_hi
        while True:
            U_new = min(U + 20.0, U_CEIL)
            ue, we, lpe = kernel.lattice.nodes(U, U_new)
            keep = ue > U
            ue, we, lpe = ue[keep], we[keep], lpe[keep]
            ce = we * np.exp(lpe + ue) / math.pi
            Xe = np.multiply.outer(h, np.exp(ue))
            wd0 += (h[:, None] * _phi2(Xe)) @ ce
            wd1 += (h[:, None] * _phi12(Xe)) @ ce
            U = U_new
            lpU = kernel.logpsi(np.array([U - U_PANEL, U]))
            nu = (lpU[0] - lpU[1]) / U_PANEL
            if not nu > 0:
                raise QuadratureNonConvergence("psi does not decay at large r")
            psiU = math.exp(lpU[1])
            tail1 = psiU / (math.pi * nu)
            if tail1 < 1e-13 * wd1.min() or U >= U_CEIL:
                break
        R = math.exp(U)
        wd1 += psiU / math.pi * (1.0 / nu - 1.0 / (R * h * (nu + 1.0)))
        wd0 += psiU / (math.pi * R * h * (nu + 1.0))
        self.tail_rel = tail1 / wd1.min()
        self.wd0, self.wd1 = wd0, wd1
        self.n_nodes = u.size

    def history(self, H, j):
        """Contribution to (g * f)(t_j) of f on [0, t_{j-1}]."""
        return self.CE[j - 1] @ H

    def advance(self, H, j, f_prev, f_cur):
        return self.E[j - 1][:, None] * H + np.multiply.outer(self.P2[j - 1], f_prev) + np.multiply.outer(
            self.P12[j - 1], f_cur
        )

    def initial_state(self, dim):
        return np.zeros((self.E.shape[1], dim))

    def apply(self, values):
        v = np.asarray(values, dtype=float)
        vec = v.reshape(v.shape[0], -1)
        out = np.zeros_like(vec)
        H = self.initial_state(vec.shape[1])
        for j in range(1, vec.shape[0]):
            out[j] = self.history(H, j) + self.wd0[j - 1] * vec[j - 1] + self.wd1[j - 1] * vec[j]
            H = self.advance(H, j, vec[j - 1], vec[j])
        return out.reshape(v.shape)

    def matrix(self):
        """Dense (M+1) x (M+1) convolution matrix, built once per plan."""
        if getattr(self, "_dense", None) is None:
            self._dense = self.apply(np.eye(self.grid.M + 1))
        return self._dense


def resolvent_g(mu, t):
    """g(t) with k * g = 1."""
    return SpectralKernel(mu).value(t)


def resolvent_g_m(mu, m, t):
    """g_m(t), the resolvent of the iterated kernel k_m."""
    _require_m(mu, m)
    return SpectralKernel(mu, m).value(t)


def laplace_invert(F, x, boundary_im=None, eta=0.1):
    """f(x) = (1/pi) int_0^inf e^{-rx} Im F^-(r) dr.

    ``boundary_im`` may supply r -> Im F^-(r) directly; otherwise F is
    evaluated at r e^{-i pi}. Growth/decay assumptions are sampled and
    reported as warnings only.
    """
    x = _check_time(x)
    if boundary_im is None:
        def boundary_im(r):
            return np.imag(F(np.asarray(r) * np.exp(-1j * math.pi)))

    _sanity_check_transform(F, eta)

    def logf(u):
        with np.errstate(divide="ignore"):
            return np.log(np.abs(boundary_im(np.exp(u))))

    def signed(u):
        return np.sign(boundary_im(np.exp(u)))

    u_lo, tail = _lower_cutoff(logf)
    lat = _LogLattice(logf)
    xs = np.atleast_1d(x).astype(float)
    u, w, lf = lat.nodes(u_lo, math.log(CUTOFF / xs.min()))
    keep = u >= u_lo
    u, w, lf = u[keep], w[keep], lf[keep]
    u = np.append(u, u_lo)
    w = np.append(w, tail)
    lf = np.append(lf, logf(np.array([u_lo])))
    sg = signed(u)
    with np.errstate(under="ignore"):
        vals = (np.exp(lf + u - np.multiply.outer(xs, np.exp(u))) * sg) @ w / math.pi
    return float(vals[0]) if np.ndim(x) == 0 else vals


def _sanity_check_transform(F, eta):
    if F is None:
        return
    phis = np.linspace(-(math.pi - eta), math.pi - eta, 9)
    try:
        big = np.abs(F(1e8 * np.exp(1j * phis)))
        small = np.abs(1e-8 * F(1e-8 * np.exp(1j * phis)))
        mid = np.abs(F(np.exp(1j * phis)))
    except Exception as exc:  # noqa: BLE001 - any evaluation failure is only reported
        warnings.warn(f"transform could not be sampled: {exc}", RuntimeWarning, stacklevel=3)
        return
    if not np.all(big < np.maximum(mid, 1e-300)):
        warnings.warn("F does not appear to vanish as |p| -> infinity", RuntimeWarning, stacklevel=3)
    if not np.all(small < 1e-2):
        warnings.warn("p F(p) does not appear to vanish as |p| -> 0", RuntimeWarning, stacklevel=3)


# -- tables ------------------------------------------------------------------------

def default_grading(gamma):
    return float(min(max(2.0 / gamma, 2.0), 8.0))


@dataclass(frozen=True, eq=False)
class KernelTable:
    """Kernel samples on a graded grid with the singular factor split off."""

    grid: TimeGrid
    values: np.ndarray
    sigma: float
    provenance: dict
    sigma0: Optional[float] = None
    tolerances: dict = field(default_factory=dict)
    representation: Optional[object] = field(default=None, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.M,):
            raise ValidationError("table.values", "one value per positive grid node")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.sigma0 is None:
            t1, t2 = self.grid.nodes[1:3]
            s0 = 1.0 + math.log(v[1] / v[0]) / math.log(t2 / t1)
            object.__setattr__(self, "sigma0", float(min(max(s0, 1e-3), 2.0)))

    @property
    def kernel(self):
        return self.provenance["kernel"]

    @property
    def t(self):
        return self.grid.nodes[1:]

    @property
    def smooth_factor(self):
        """t^(1-sigma) * value at the positive nodes (index 0 repeats index 1)."""
        phi = self.t ** (1.0 - self.sigma) * self.values
        return np.concatenate([[phi[0]], phi])

    @property
    def first_panel(self):
        """(sigma0, C0) with value ~ C0 t^(sigma0-1) on [0, t_1]."""
        t1 = self.grid.nodes[1]
        return self.sigma0, float(self.values[0] * t1 ** (1.0 - self.sigma0))

    def get_representation(self):
        if self.representation is not None:
            return self.representation
        cfg = self.provenance.get("mu")
        if cfg is None:
            raise ProvenanceMismatch("table has no reconstructible weight")
        mu = WeightFunction.from_config(cfg)
        rep = _representation(mu, self.kernel, self.provenance.get("m"))
        object.__setattr__(self, "representation", rep)
        return rep

    def to_csv(self, path):
        path = Path(path)
        data = np.column_stack([self.t, self.values, self.smooth_factor[1:]])
        np.savetxt(path, data, delimiter=",", header="t,value,smooth_factor", comments="", fmt="%.17g")
        side = {
            "kernel": self.kernel,
            "m": self.provenance.get("m"),
            "mu_digest": self.provenance["mu_digest"],
            "mu": self.provenance.get("mu"),
            "exponents": self.provenance.get("exponents"),
            "sigma": self.sigma,
            "sigma0": self.sigma0,
            "grading": {"T": self.grid.T, "M": self.grid.M, "q": self.grid.q},
            "tolerances": self.tolerances,
        }
        path.with_suffix(".json").write_text(json.dumps(side, indent=2, sort_keys=True))
        return path

    @classmethod
    def from_csv(cls, path):
        path = Path(path)
        side = json.loads(path.with_suffix(".json").read_text())
        g = side["grading"]
        grid = TimeGrid(g["T"], g["M"], g["q"])
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        prov = {"kernel": side["kernel"], "m": side["m"], "mu_digest": side["mu_digest"], "mu": side["mu"],
                "exponents": side.get("exponents")}
        return cls(grid, data[:, 1], side["sigma"], prov, side["sigma0"], side["tolerances"])


def _representation(mu, kernel, m=None):
    if kernel == "k":
        return PowerMeasure.kernel_k(mu)
    if kernel == "g":
        return SpectralKernel(mu)
    if kernel == "k_m":
        return PowerMeasure.kernel_k_m(mu, m)
    if kernel == "g_m":
        _require_m(mu, m)
        return SpectralKernel(mu, m)
    raise ValidationError("kernel", f"unknown kernel {kernel!r}")


def build_table(mu, grid, kernel="g", m=None, exps=None):
    """Tabulate k, g, k_m or g_m on the positive nodes of ``grid``."""
    if kernel in ("k_m", "g_m") and m is None:
        m = order_index_m(mu)
    exps = exps or analyze(mu)
    rep = _representation(mu, kernel, m)
    t = grid.nodes[1:]
    values = rep.value(t)
    if kernel == "g":
        sigma = exps.gamma
    elif kernel == "g_m":
        sigma = g_m_exponent(m, exps.gamma_m)
    else:
        sigma = 1.0 - rep.max_exponent
    try:
        cfg = mu.to_config() if mu.config.get("kind") != "analytic" or mu.config.get("expression") else None
    except Exception:  # noqa: BLE001
        cfg = None
    prov = {
        "kernel": kernel,
        "m": m,
        "mu_digest": mu.digest(),
        "mu": cfg,
        "exponents": {"c_mu": exps.c_mu, "gamma": exps.gamma},
    }
    tol = {"g_rtol": RTOL_G, "k_rtol": 1e-10}
    return KernelTable(grid, values, float(sigma), prov, None, tol, rep)


def _check_pair(ktab, gtab):
    pk, pg = ktab.provenance, gtab.provenance
    if pk["mu_digest"] != pg["mu_digest"]:
        raise ProvenanceMismatch("tables were built from different weights")
    pair = (pk["kernel"], pg["kernel"])
    if pair not in (("k", "g"), ("k_m", "g_m")):
        raise ProvenanceMismatch(f"kernel pair {pair} is not a resolvent pair")
    if pair == ("k_m", "g_m") and pk.get("m") != pg.get("m"):
        raise ProvenanceMismatch("tables were built for different m")
    if not ktab.grid.same_as(gtab.grid):
        raise ProvenanceMismatch("tables use different grids")


def resolvent_identity_profile(ktab, gtab, n_check=64):
    """(t, (k * g)(t)) on check nodes in [T/M, T]."""
    _check_pair(ktab, gtab)
    grid = gtab.grid
    t = grid.nodes
    first = int(np.searchsorted(t, grid.T / grid.M * (1 - 1e-12)))
    idx = np.unique(np.round(np.linspace(first, grid.M, n_check)).astype(int))
    kk = ktab.get_representation()
    vals = _pi.singular_data_convolution(kk.p, kk.c, t, gtab.smooth_factor, gtab.sigma, t[idx], gtab.first_panel)
    return t[idx], vals


def verify_resolvent_identity(ktab, gtab, T=None, n_check=64):
    """max |(k * g)(t) - 1| over check nodes in [T/M, T]."""
    if T is not None and not math.isclose(T, gtab.grid.T) or not ktab.grid.same_as(gtab.grid):
        raise ProvenanceMismatch("horizon differs between the tables and the request")
    _, vals = resolvent_identity_profile(ktab, gtab, n_check)
    return float(np.max(np.abs(vals - 1.0)))
