import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distcaputo import diagnostics as D
from distcaputo.errors import OrderMismatch, ValidationError
from distcaputo.fraccalc import SampledTrajectory, TimeGrid
from distcaputo.galerkin import Domain, EllipticCoefficients, galerkin_solve
from distcaputo.weight import indicator, uniform

GRID = TimeGrid(1.0, 128, 4)


@pytest.fixture(scope="module")
def heat():
    mu = indicator(0.6, 0.8)
    dom = Domain.interval()
    return galerkin_solve(mu, dom, EllipticCoefficients.build(dom), "x*(L - x)", M=128, n_modes=3)


@pytest.fixture(scope="module")
def forced():
    mu = uniform()
    dom = Domain.interval()
    co = EllipticCoefficients.build(dom, a="1 + 0.2*sin(x)", b="0.1*cos(x)", c="0.1*t", f="sin(2*x)*(1 + t)",
                                    lam=0.8, Lam=1.2)
    return galerkin_solve(mu, dom, co, "x*(L - x)", M=128, n_modes=3), co


def random_trajectory(rng, n=2):
    t = GRID.nodes[:, None]
    a = rng.normal(size=(4, n))
    return SampledTrajectory(GRID, a[0] + a[1] * t + a[2] * np.cos(5 * a[3] * t))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_energy_identity_any_trajectory(seed):
    """The identity is exact for the piecewise-linear interpolant of any trajectory."""
    w = random_trajectory(np.random.default_rng(seed))
    rep = D.energy_identity_residual(w, indicator(0.2, 0.9), n_check=32)
    assert rep.passed and rep.details["relative_residual"] < 1e-10


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), lo=st.floats(0.05, 0.7))
def test_coercivity_any_trajectory(seed, lo):
    w = random_trajectory(np.random.default_rng(seed))
    rep = D.coercivity_check(w, indicator(lo, lo + 0.25))
    assert rep.passed, rep.margin


def test_coercivity_needs_small_t():
    w = SampledTrajectory(TimeGrid(2.0, 128, 2), np.ones(129))
    with pytest.raises(ValidationError):
        D.coercivity_check(w, uniform(), t=2.0)
    with pytest.raises(ValidationError):
        D.coercivity_check(w, uniform(), t=0.123456)


def test_heat_checks(heat):
    assert D.energy_identity_residual(heat.trajectory(), heat.mu).passed
    est = D.energy_estimate_check(heat)
    assert est.passed and not est.details["vacuous"]
    rep = D.continuity_report(heat)
    assert rep.regime == "upper" and rep.details["norm"] == "H^-1" and rep.details["monotone"]
    with pytest.raises(OrderMismatch):
        D.continuity_report(heat, regime="m")


def test_forced_estimate(forced):
    sol, raw = forced
    rep = D.energy_estimate_check(sol, raw_coeffs=raw)
    assert rep.passed and rep.details["delta_n"] > 0
    lhs, rhs = rep.columns["lhs"], rep.columns["rhs"]
    assert np.all(lhs <= rhs)
    for key in ("fractional", "initial", "gradient", "history"):
        assert np.all(rep.columns[key] >= -1e-12)


def test_sliding_window_sup():
    assert D.sliding_window_sup(lambda t: 3.0, 1.0, 0.25) == pytest.approx(0.75)
    assert D.sliding_window_sup(lambda t: t, 1.0, 0.5) == pytest.approx(0.375, rel=1e-6)
    with pytest.raises(ValidationError):
        D.sliding_window_sup(lambda t: t, 1.0, 1.0)


def test_dual_norm():
    v = np.array([[3.0, 4.0]])
    np.testing.assert_allclose(D.dual_norm(v, np.array([1.0, 4.0]), 1.0), [np.sqrt(9 + 4)])
    np.testing.assert_allclose(D.dual_norm(v, np.array([1.0, 4.0]), 0.0), [5.0])


def test_regularity_and_report_io(tmp_path, heat):
    rep = D.regularity_monitor(heat, constant=1e6)
    assert rep.passed
    out = json.loads(open(rep.to_json(tmp_path / "r.json")).read())
    assert out["check"] == "regularity" and out["pass"] is True
    cont = D.continuity_report(heat)
    path = cont.to_csv(tmp_path / "c.csv")
    assert open(path).readline().strip() == "t,norm,h_minus1"
