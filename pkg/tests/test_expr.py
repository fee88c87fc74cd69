import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from distcaputo.errors import ParseError
from distcaputo.expr import compile_expression


def test_grammar():
    ex = compile_expression("sin(pi*x/L)*(1 + t) - 2^x", ("x", "t"), {"L": 2.0})
    x = np.array([0.5, 1.0])
    np.testing.assert_allclose(ex(x=x, t=0.5), np.sin(np.pi * x / 2) * 1.5 - 2.0**x)
    assert ex.uses("t") and ex.uses("x")
    assert compile_expression("3.5", ("x",)).is_constant()


def test_caret_is_power():
    assert compile_expression("2^3", ()).__call__() == 8.0
    assert compile_expression("2**3", ()).__call__() == 8.0


@pytest.mark.parametrize("src", ["__import__('os')", "x.real", "[1, 2]", "y + 1", "foo(x)", "x +* 2", "lambda: 1"])
def test_rejected(src):
    with pytest.raises(ParseError):
        compile_expression(src, ("x",))


@given(a=st.floats(-10, 10), b=st.floats(-10, 10))
def test_matches_python_arithmetic(a, b):
    ex = compile_expression("a*x - b/2 + cos(x)", ("x",), {"a": a, "b": b})
    assert ex(x=0.3) == pytest.approx(a * 0.3 - b / 2 + math.cos(0.3), abs=1e-12)
