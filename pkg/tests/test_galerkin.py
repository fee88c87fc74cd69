import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distcaputo.errors import EpsilonTooLarge, PicardStall, UnsupportedDomain, ValidationError
from distcaputo.fraccalc import SampledTrajectory, TimeGrid, mittag_leffler
from distcaputo.galerkin import (
    Domain,
    EllipticCoefficients,
    GalerkinSolution,
    GalerkinSystem,
    eigenpairs,
    galerkin_solve,
    manufactured_forcing,
    mollify,
    project_initial,
    reconstruct,
    solve_volterra,
    weak_residual,
)
from distcaputo.kernels import build_table
from distcaputo.weight import indicator

PHI1 = "sqrt(2/L)*sin(pi*x/L)"


def test_interval_eigenpairs():
    b = eigenpairs(Domain.interval(), 5)
    np.testing.assert_allclose(b.eigenvalues, [1, 4, 9, 16, 25])
    np.testing.assert_allclose(b.gram(), np.eye(5), atol=1e-13)
    L = 2.0
    b2 = eigenpairs(Domain.interval(L), 3)
    np.testing.assert_allclose(b2.eigenvalues, (np.pi * np.arange(1, 4) / L) ** 2)


def test_rectangle_eigenpairs():
    b = eigenpairs(Domain.rectangle(), 5)
    np.testing.assert_allclose(b.eigenvalues, [2, 5, 5, 8, 10])
    np.testing.assert_allclose(b.gram(), np.eye(5), atol=1e-13)


def test_unsupported_domain():
    with pytest.raises(UnsupportedDomain):
        Domain.from_config({"kind": "disk", "R": 1.0})
    with pytest.raises(UnsupportedDomain):
        Domain("interval", (-1.0,))


def test_ellipticity_enforced():
    with pytest.raises(ValidationError):
        EllipticCoefficients.build(Domain.interval(), a="0.5 + 0.4*sin(x)", lam=1.0, Lam=2.0)
    EllipticCoefficients.build(Domain.interval(), a="1.5 + 0.4*sin(x)", lam=1.0, Lam=2.0)


def test_mollification():
    dom = Domain.interval()
    co = EllipticCoefficients.build(dom, a=2.0, c="t", f="sin(x)*t", lam=1.0, Lam=2.0, T=1.0)
    with pytest.raises(EpsilonTooLarge):
        mollify(co, 1, 1.0)
    m = mollify(co, 8, 1.0)
    X = np.array([[0.3, 1.0, 2.5]])
    # unit-mass mollifier keeps constants
    np.testing.assert_allclose(m.a_matrix(X, 0.5), co.a_matrix(X, 0.5), rtol=1e-13)
    # c vanishes beyond the horizon, so mollified values near T fall below the raw ones
    assert np.all(m.c(X, 1.0) < 1.0)
    assert np.all(np.isfinite(m.f(X, 0.0)))


def test_projection():
    b = eigenpairs(Domain.interval(), 4)
    np.testing.assert_allclose(project_initial(PHI1, b), [1, 0, 0, 0], atol=1e-13)
    # x (pi - x) has sine coefficients 8/(sqrt(2 pi) k^3) on odd k
    c = project_initial("x*(L - x)", b)
    k = np.arange(1, 5)
    ref = np.where(k % 2 == 1, math.sqrt(2 / math.pi) * 4 / k**3, 0.0)
    np.testing.assert_allclose(c, ref, atol=1e-12)


@pytest.fixture(scope="module")
def g_ind():
    mu = indicator(0.6, 0.8)
    return mu, build_table(mu, TimeGrid(1.0, 128, 4), "g")


def test_grid_too_coarse(g_ind):
    mu, g = g_ind
    with pytest.raises(ValidationError):
        solve_volterra(build_table(mu, TimeGrid(1.0, 32, 4), "g"), np.eye(1), None, np.ones(1),
                       TimeGrid(1.0, 32, 4))


def test_picard_and_implicit_agree(g_ind):
    _, g = g_ind
    A = np.diag([0.5, 1.0, 2.0])  # mild enough for plain Picard on every step
    F = np.array([0.5, 0.0, -1.0])
    c0 = np.array([1.0, 0.5, 0.25])
    a = solve_volterra(g, A, F, c0, g.grid, method="picard")
    b = solve_volterra(g, A, F, c0, g.grid, method="implicit")
    np.testing.assert_allclose(a.coeffs, b.coeffs, atol=1e-8)
    assert a.info["method"] == "picard" and b.info["method"] == "implicit"


def test_picard_stall(g_ind):
    _, g = g_ind
    with pytest.raises(PicardStall):
        solve_volterra(g, np.diag([1.0, 400.0]), None, np.ones(2), g.grid, picard_tol=1e-15, method="picard",
                       max_iter=2)


def test_single_mode_relaxation(tables):
    g = tables.get("bump", "g", 512)
    sol = solve_volterra(g, np.eye(1), None, np.ones(1), g.grid)
    t = g.grid.nodes
    np.testing.assert_allclose(sol.coeffs[:, 0], mittag_leffler(0.5, 1.0, -np.sqrt(t)), atol=1e-4)


def test_heat_decay_and_reconstruction(g_ind):
    mu, g = g_ind
    sol = galerkin_solve(mu, Domain.interval(), EllipticCoefficients.build(Domain.interval()), "x*(L - x)",
                         n_modes=3, gtab=g)
    n2 = sol.l2_norm_sq()
    assert np.all(np.diff(n2) <= 1e-14)
    x = np.array([[0.5, 1.5]])
    u = reconstruct(sol, x, 0.0)
    np.testing.assert_allclose(u, sol.c0 @ sol.basis.values(x))
    # weak residual of a converged solve is a time-discretization error
    for m in (1, 2, 3, 5):
        r = weak_residual(sol, m)
        assert np.max(np.abs(r[g.grid.nodes >= 0.1])) < 1e-2


def test_manufactured_convergence():
    mu = indicator(0.3, 0.45)
    basis = eigenpairs(Domain.interval(), 2)
    system = GalerkinSystem(basis, EllipticCoefficients.build(Domain.interval(), c="0.5*t"))
    errs = []
    for M in (64, 128, 256):
        grid = TimeGrid(1.0, M, 4)
        t = grid.nodes
        exact = np.column_stack([1 + t, 0.5 * t**2])
        A = np.array([system.A(x) for x in t])
        F = manufactured_forcing(mu, SampledTrajectory(grid, exact), A)
        sol = solve_volterra(build_table(mu, grid, "g"), A, F, exact[0], grid)
        errs.append(np.max(np.abs(sol.coeffs - exact)))
    assert errs[0] / errs[1] > 1.5 and errs[1] / errs[2] > 1.5


def test_solution_csv_round_trip(tmp_path, g_ind):
    mu, g = g_ind
    sol = galerkin_solve(mu, Domain.interval(), EllipticCoefficients.build(Domain.interval()), PHI1, n_modes=2,
                         gtab=g)
    path = sol.to_csv(tmp_path / "sol.csv")
    back = GalerkinSolution.from_csv(path)
    np.testing.assert_array_equal(back.coeffs, sol.coeffs)
    np.testing.assert_array_equal(back.c0, sol.c0)


@settings(max_examples=10, deadline=None)
@given(s=st.floats(-3, 3), c0=st.lists(st.floats(-2, 2), min_size=2, max_size=2),
       f=st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_linearity(g_ind, s, c0, f):
    _, g = g_ind
    A = np.array([[1.0, 0.3], [0.0, 4.0]])
    c0, f = np.array(c0), np.array(f)
    u = solve_volterra(g, A, f, c0, g.grid).coeffs
    v = solve_volterra(g, A, s * f, s * c0, g.grid).coeffs
    np.testing.assert_allclose(v, s * u, atol=1e-8 * (1 + abs(s)))
