import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distcaputo.errors import HypothesisViolation, ProvenanceMismatch, ValidationError
from distcaputo.fraccalc import SampledTrajectory
from distcaputo.gronwall import (
    certify_dominance,
    envelope_constant,
    gronwall_majorant,
    iterated_convolution,
    analytic_constant,
)


@pytest.fixture(scope="module")
def g(tables):
    return tables.get("uniform", "g", 128)


def tr(g, v):
    return SampledTrajectory(g.grid, v)


def test_constants(g):
    c_env, c_pap = envelope_constant(g), analytic_constant(g)
    assert 0 < c_env <= c_pap
    gamma = g.provenance["exponents"]["gamma"]
    assert np.all(g.values <= c_env * g.t ** (gamma - 1.0) * (1 + 1e-9))


def test_zero_rate_gives_a(g):
    a = 1 + g.grid.nodes
    b = gronwall_majorant(g, tr(g, a), tr(g, np.zeros_like(a)))
    np.testing.assert_array_equal(b.bound, a)
    assert b.certified


def test_iterated_convolution(g):
    a = tr(g, np.cos(g.grid.nodes) + 1)
    np.testing.assert_array_equal(iterated_convolution(g, a, 0).values, a.values)
    one = iterated_convolution(g, a, 1).values
    np.testing.assert_allclose(one, g.get_representation().plan(g.grid).apply(a.values))
    two = iterated_convolution(g, a, 2).values  # also checks the fractional-integral estimate
    assert np.all(two >= 0) and np.all(two <= one.max() * g.grid.T)
    with pytest.raises(ValidationError):
        iterated_convolution(g, a, 1.5)


def test_hypotheses_enforced(g):
    t = g.grid.nodes
    with pytest.raises(HypothesisViolation):
        gronwall_majorant(g, tr(g, -1 + 0 * t), tr(g, 1 + 0 * t))
    with pytest.raises(HypothesisViolation):
        gronwall_majorant(g, tr(g, 1 + 0 * t), tr(g, 2 - t))
    b = gronwall_majorant(g, tr(g, 1 + 0 * t), tr(g, 1 + 0 * t))
    with pytest.raises(HypothesisViolation):
        certify_dominance(b, tr(g, 10 + 0 * t), tr(g, 1 + 0 * t), tr(g, 1 + 0 * t), g)


def test_needs_resolvent(tables):
    k = tables.get("uniform", "k", 128)
    t = k.grid.nodes
    with pytest.raises(ProvenanceMismatch):
        gronwall_majorant(k, SampledTrajectory(k.grid, 1 + 0 * t), SampledTrajectory(k.grid, 1 + 0 * t))


@settings(max_examples=25, deadline=None)
@given(c0=st.floats(0.0, 2.0), c1=st.floats(0.0, 2.0), freq=st.floats(0.0, 10.0), f=st.floats(0.0, 2.0))
def test_constant_rate_matches_discrete_solution(g, c0, c1, freq, f):
    """With constant f the series sums to the solution of w = a + f (g * w)."""
    t = g.grid.nodes
    a = c0 + c1 * np.sin(freq * t) ** 2
    G = g.get_representation().plan(g.grid).matrix()
    exact = np.linalg.solve(np.eye(t.size) - f * G, a)
    b = gronwall_majorant(g, tr(g, a), tr(g, f + 0 * t))
    assert b.certified
    np.testing.assert_allclose(b.bound, exact, rtol=1e-8, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_dominance_random_instances(g, seed):
    rng = np.random.default_rng(seed)
    t = g.grid.nodes
    n = 8
    a = rng.uniform(0, 1, n) + rng.uniform(0, 1, n) * np.sin(rng.uniform(0, 9, n) * t[:, None]) ** 2
    f = rng.uniform(0, 1.5, n) + rng.uniform(0, 1, n) * t[:, None] ** 2
    w = a + f * g.get_representation().plan(g.grid).apply(a)
    b = gronwall_majorant(g, tr(g, a), tr(g, f))
    ok, worst = certify_dominance(b, tr(g, w), tr(g, a), tr(g, f), g)
    assert ok, worst


def test_to_csv(tmp_path, g):
    t = g.grid.nodes
    b = gronwall_majorant(g, tr(g, np.column_stack([1 + 0 * t, t])), tr(g, 1 + 0 * t))
    path = b.to_csv(tmp_path / "b.csv")
    head = path.read_text().splitlines()[0]
    assert head == "t,bound_1,terms_1,residual_1,bound_2,terms_2,residual_2"
