import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from distcaputo.errors import OnBranchCut, ProvenanceMismatch
from distcaputo.fraccalc import TimeGrid
from distcaputo.kernels import (
    KernelTable,
    PowerMeasure,
    build_table,
    check_laplace_lower_bounds,
    kernel_k,
    laplace_invert,
    laplace_k,
    resolvent_g,
    verify_resolvent_identity,
)
from distcaputo.weight import WeightFunction, indicator, uniform

T_PTS = np.array([1e-4, 1e-2, 0.1, 0.5, 1.0])


def k_quad(mu, t, lo=0.0, hi=1.0):
    return integrate.quad(lambda a: t**-a / math.gamma(1 - a) * float(mu(a)), lo, hi, epsrel=1e-12, limit=200)[0]


def test_k_uniform_against_quadrature():
    mu = uniform()
    ref = np.array([k_quad(mu, t) for t in T_PTS])
    np.testing.assert_allclose(kernel_k(mu, T_PTS), ref, rtol=1e-10)
    np.testing.assert_allclose(PowerMeasure.kernel_k(mu).value(T_PTS), ref, rtol=1e-10)


def test_k_indicator_against_quadrature():
    mu = indicator(0.3, 0.45)
    ref = np.array([k_quad(mu, t, 0.3, 0.45) for t in T_PTS])
    np.testing.assert_allclose(kernel_k(mu, T_PTS), ref, rtol=1e-10)


def test_laplace_k_uniform_closed_form():
    p = np.array([0.3, 2.0, 5.0 + 1j, -1.0 + 0.5j])
    # int_0^1 p^(a-1) da = (p - 1) / (p log p)
    np.testing.assert_allclose(laplace_k(uniform(), p), (p - 1) / (p * np.log(p)), rtol=1e-12)


def test_laplace_on_cut_rejected():
    with pytest.raises(OnBranchCut):
        laplace_k(uniform(), -2.0)


def test_resolvent_uniform_closed_form():
    # g^ = log p / (p - 1); the cut integral gives g(t) = e^t E_1(t)
    ref = np.exp(T_PTS) * special.exp1(T_PTS)
    np.testing.assert_allclose(resolvent_g(uniform(), T_PTS), ref, rtol=1e-8)


@pytest.mark.filterwarnings("ignore:p F")  # p^(1/4) decays too slowly for the sampled heuristic
def test_laplace_invert_power():
    x = np.array([0.25, 1.0, 3.0])
    np.testing.assert_allclose(laplace_invert(lambda p: p**-0.75, x), x**-0.25 / math.gamma(0.75), rtol=1e-9)


def test_laplace_lower_bounds_hold():
    for mu in (uniform(), indicator(0.4, 0.6), indicator(0.1, 0.2)):
        assert check_laplace_lower_bounds(mu)["violations"] == 0


def test_resolvent_identity_m_regime():
    mu = indicator(0.3, 0.45)
    grid = TimeGrid(1.0, 256, 4)
    dev = verify_resolvent_identity(build_table(mu, grid, "k_m"), build_table(mu, grid, "g_m"))
    assert dev < 1e-3


def test_table_csv_round_trip(tmp_path, tables):
    g = tables.get("indicator", "g", 512)
    path = g.to_csv(tmp_path / "g.csv")
    back = KernelTable.from_csv(path)
    np.testing.assert_array_equal(back.values, g.values)
    assert back.grid.same_as(g.grid)
    assert back.provenance["exponents"] == g.provenance["exponents"]
    k = tables.get("indicator", "k", 512)
    assert verify_resolvent_identity(k, back) == pytest.approx(verify_resolvent_identity(k, g), rel=1e-6)


def test_mismatched_tables(tables):
    with pytest.raises(ProvenanceMismatch):
        verify_resolvent_identity(tables.get("uniform", "k"), tables.get("indicator", "g"))
    with pytest.raises(ProvenanceMismatch):
        verify_resolvent_identity(tables.get("uniform", "g"), tables.get("uniform", "k"))


@settings(max_examples=10, deadline=None)
@given(s=st.floats(0.2, 5.0))
def test_mass_scaling(s):
    """k scales with mu, so g scales with 1/mu."""
    mu = indicator(0.35, 0.7)
    mus = mu.scaled(s)
    np.testing.assert_allclose(kernel_k(mus, T_PTS), s * kernel_k(mu, T_PTS), rtol=1e-10)
    np.testing.assert_allclose(resolvent_g(mus, T_PTS), resolvent_g(mu, T_PTS) / s, rtol=1e-8)


@settings(max_examples=10, deadline=None)
@given(lo=st.floats(0.05, 0.8), width=st.floats(0.05, 0.19))
def test_resolvent_positive_decreasing(lo, width):
    g = resolvent_g(indicator(lo, lo + width), np.geomspace(1e-4, 1.0, 30))
    assert np.all(g > 0) and np.all(np.diff(g) < 0)


def test_linear_weight_uses_expression():
    mu = WeightFunction.analytic("2*alpha")
    ref = np.array([integrate.quad(lambda a: 2 * a * t**-a / math.gamma(1 - a), 0, 1, epsrel=1e-12)[0]
                    for t in T_PTS])
    np.testing.assert_allclose(kernel_k(mu, T_PTS), ref, rtol=1e-10)
