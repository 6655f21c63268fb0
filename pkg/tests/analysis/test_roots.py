import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from limitforge.analysis.roots import newton_bisect
from limitforge.exceptions import RootBracketError


def square_minus(c):
    return lambda x: (x * x - c, 2.0 * x)


def test_newton_bisect_sqrt2():
    root = newton_bisect(square_minus(2.0), 0.0, 2.0)
    assert root == pytest.approx(math.sqrt(2.0), rel=1e-15)


def test_bracket_orientation_does_not_matter():
    # f decreasing on the bracket
    root = newton_bisect(lambda x: (2.0 - x * x, -2.0 * x), 0.0, 2.0)
    assert root == pytest.approx(math.sqrt(2.0), rel=1e-15)


def test_root_at_endpoint():
    assert newton_bisect(square_minus(4.0), 0.0, 2.0) == 2.0
    assert newton_bisect(square_minus(0.0), 0.0, 2.0) == 0.0


def test_not_bracketed():
    with pytest.raises(RootBracketError):
        newton_bisect(square_minus(9.0), 0.0, 2.0)


def test_useless_derivative_falls_back_to_bisection():
    root = newton_bisect(lambda x: (x**3 - x - 2.0, 0.0), 1.0, 2.0)
    assert root == pytest.approx(1.5213797068045676, abs=1e-12)


def test_residual_tolerance_stops_early():
    root = newton_bisect(square_minus(2.0), 0.0, 2.0, ftol=1e-3)
    assert abs(root * root - 2.0) <= 1e-3


@given(st.floats(min_value=0.01, max_value=1e6))
def test_square_roots(c):
    root = newton_bisect(square_minus(c), 0.0, max(1.0, c))
    assert root == pytest.approx(math.sqrt(c), rel=1e-14)
