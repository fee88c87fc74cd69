"""Product-integration primitives on a nonuniform grid.

Every routine here integrates a power kernel tau^(p-1) exactly against a
piecewise-linear (or piecewise-quadratic, in local coordinates) function.
Panels far from the kernel singularity use a binomial series in h/a to
avoid cancellation; panels touching it use closed forms.
"""

from __future__ import annotations

import numpy as np
from scipy import special

_SERIES_SWITCH = 0.25
_SERIES_TERMS = 32


def _binom_series_coeffs(p):
    c = np.empty(_SERIES_TERMS)
    c[0] = 1.0
    for n in range(1, _SERIES_TERMS):
        c[n] = c[n - 1] * (p - n) / n  # binom(p-1, n)
    return c


def power_moments(a, h, p, kmax=1):
    """Moments M_k = int_a^{a+h} tau^(p-1) ((tau-a)/h)^k dtau for k = 0..kmax.

    ``a >= 0`` and ``h > 0`` are broadcastable arrays; ``p > 0``.
    """
    a = np.asarray(a, dtype=float)
    h = np.asarray(h, dtype=float)
    a, h = np.broadcast_arrays(a, h)
    out = np.zeros((kmax + 1,) + a.shape)
    zero = a == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(zero, np.inf, h / np.where(zero, 1.0, a))
    series = x < _SERIES_SWITCH
    direct = ~series & ~zero

    if np.any(zero):
        hz = h[zero]
        for k in range(kmax + 1):
            out[k][zero] = hz**p / (p + k)

    if np.any(series):
        aa, hh, xx = a[series], h[series], x[series]
        coef = _binom_series_coeffs(p)
        n = np.arange(_SERIES_TERMS)
        pref = aa ** (p - 1.0) * hh
        for k in range(kmax + 1):
            terms = coef / (n + k + 1.0)
            acc = np.zeros_like(xx)
            for c in terms[::-1]:
                acc = acc * xx + c
            out[k][series] = pref * acc

    if np.any(direct):
        aa, hh = a[direct], h[direct]
        b = aa + hh
        lr = np.log(b / aa)

        def j(q):
            # int_a^b tau^(q-1) dtau, stable as q -> 0
            return aa**q * np.expm1(q * lr) / q

        for k in range(kmax + 1):
            # expand (tau - a)^k binomially
            acc = np.zeros_like(aa)
            for i in range(k + 1):
                acc += special.comb(k, i) * (-aa) ** (k - i) * j(p + i)
            out[k][direct] = acc / hh**k
    return out


def panel_weights(a, h, p):
    """Weights (w0, w1) of the left/right panel values for int tau^(p-1) f."""
    m = power_moments(a, h, p, kmax=1)
    # f(s0) multiplies (tau - a)/h, f(s1) multiplies 1 - (tau - a)/h
    return m[1], m[0] - m[1]


def _lagrange_theta_coeffs(t, order):
    """Per panel i: stencil start and coefficients C[i, l, k] of theta^k in the
    Lagrange basis polynomial of stencil node l, with s = t_{i+1} - h_i theta."""
    n = t.size - 1
    i = np.arange(n)
    start = np.clip(i - order + 1, 0, n - order)
    h = t[i + 1] - t[i]
    C = np.zeros((n, order + 1, order + 1))
    for l in range(order + 1):
        poly = np.zeros((n, order + 1))
        poly[:, 0] = 1.0
        xl = t[start + l]
        for m in range(order + 1):
            if m == l:
                continue
            xm = t[start + m]
            d = (t[i + 1] - xm) / (xl - xm)
            e = -h / (xl - xm)
            new = poly * d[:, None]
            new[:, 1:] += poly[:, :-1] * e[:, None]
            poly = new
        C[:, l, :] = poly
    return start, C


def power_integral_matrix(t, p, order=1):
    """Dense W with (W f)_j = int_0^{t_j} (t_j - s)^(p-1) f(s) ds.

    ``order`` 1 integrates the piecewise-linear interpolant of f; higher
    orders use local Lagrange interpolants on (order + 1)-node stencils.
    """
    t = np.asarray(t, dtype=float)
    n = t.size
    W = np.zeros((n, n))
    J, I = np.tril_indices(n, -1)
    a = np.maximum(t[J] - t[I + 1], 0.0)
    h = t[I + 1] - t[I]
    if order == 1:
        w0, w1 = panel_weights(a, h, p)
        np.add.at(W, (J, I), w0)
        np.add.at(W, (J, I + 1), w1)
        return W
    if n - 1 < order:
        raise ValueError("grid too short for the requested interpolation order")
    mom = power_moments(a, h, p, kmax=order)
    start, C = _lagrange_theta_coeffs(t, order)
    for l in range(order + 1):
        w = np.einsum("kp,pk->p", mom, C[I, l, :])
        np.add.at(W, (J, start[I] + l), w)
    return W


def _pow_diff_over_p(A, B, p):
    """(A^p - B^p)/p for A > B >= 0 without cancellation."""
    out = np.empty_like(A)
    z = B == 0.0
    out[z] = A[z] ** p / p
    nz = ~z
    out[nz] = -(A[nz] ** p) * np.expm1(p * np.log(B[nz] / A[nz])) / p
    return out


def power_derivative_matrix(t, p):
    """Dense D with (D f)_j = d/dt int_0^t (t-s)^(p-1) f(s) ds at t_j.

    Row 0 is left zero; the caller decides how to treat t = 0.
    """
    t = np.asarray(t, dtype=float)
    n = t.size
    D = np.zeros((n, n))
    J, I = np.tril_indices(n, -1)
    A = t[J] - t[I]
    B = t[J] - t[I + 1]
    h = t[I + 1] - t[I]
    d = _pow_diff_over_p(A, np.maximum(B, 0.0), p) / h
    np.add.at(D, (J, I + 1), d)
    np.add.at(D, (J, I), -d)
    D[1:, 0] += t[1:] ** (p - 1.0)
    return D


def singular_data_convolution(atoms_p, atoms_c, s, phi, sigma, t_eval, first_panel=None):
    """int_0^t sum_k c_k (t-s)^(p_k-1) s^(sigma-1) phi(s) ds with phi linear per panel.

    ``s`` are the data nodes (s[0] = 0), ``phi`` the smooth factor at them.
    With ``first_panel = (sigma0, C0)`` the data on [0, s_1] is taken as the
    pure power C0 s^(sigma0 - 1) instead. Exact up to rounding through
    regularized incomplete beta functions; t_eval must not lie below s_1.
    """
    s = np.asarray(s, dtype=float)
    phi = np.asarray(phi, dtype=float)
    out = np.zeros(len(t_eval))
    for idx, t in enumerate(t_eval):
        last = np.searchsorted(s, t, side="right") - 1
        skip = 0
        if first_panel is not None:
            s0, c0 = first_panel
            x1 = min(s[1] / t, 1.0)
            for p, c in zip(atoms_p, atoms_c):
                out[idx] += c * c0 * np.exp(special.betaln(s0, p) + (p + s0 - 1.0) * np.log(t)) * special.betainc(s0, p, x1)
            skip = 1
        lo = s[skip : last + 1].copy()
        hi = np.append(s[skip + 1 : last + 1], t)
        keep = hi > lo
        lo, hi = lo[keep], hi[keep]
        plo = phi[skip : last + 1][keep]
        # phi at the right end of a partial last panel by interpolation
        phi_hi = np.interp(hi, s, phi)
        slope = (phi_hi - plo) / (hi - lo)
        A = plo - slope * lo
        x0, x1 = lo / t, np.minimum(hi / t, 1.0)
        total = 0.0
        for p, c in zip(atoms_p, atoms_c):
            for kk, coef in ((0, A), (1, slope)):
                aa = sigma + kk
                lb = special.betaln(aa, p)
                incr = np.where(
                    x1 <= 0.5,
                    special.betainc(aa, p, x1) - special.betainc(aa, p, x0),
                    special.betainc(p, aa, 1.0 - x0) - special.betainc(p, aa, 1.0 - x1),
                )
                total += c * np.exp(lb + (p + aa - 1.0) * np.log(t)) * np.sum(coef * incr)
        out[idx] += total
    return out
