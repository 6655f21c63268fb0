import math

import numpy as np
import pytest

from limitforge.analysis.quadrature import adaptive_simpson, integrate_unit_panels
from limitforge.parsers.funcdsl import parse
from limitforge.exceptions import QuadratureError


def test_adaptive_simpson_sine():
    result = adaptive_simpson(math.sin, 0.0, math.pi, tol=1e-12)
    assert result.value == pytest.approx(2.0, abs=1e-11)
    assert result.error <= 1e-10
    assert result.evaluations > 3


def test_adaptive_simpson_is_exact_on_cubics():
    result = adaptive_simpson(lambda x: x**3 - x, 0.0, 2.0)
    assert result.value == pytest.approx(2.0, abs=1e-14)


def test_adaptive_simpson_panels_cover_interval():
    result = adaptive_simpson(math.sqrt, 0.0, 4.0, tol=1e-10)
    panels = result.panels
    assert panels[0].a == 0.0 and panels[-1].b == 4.0
    assert all(p.b == q.a for p, q in zip(panels, panels[1:]))
    assert result.value == pytest.approx(16.0 / 3.0, abs=1e-8)


def test_adaptive_simpson_empty_interval():
    result = adaptive_simpson(math.exp, 1.5, 1.5)
    assert result.value == 0.0 and result.evaluations == 0


def test_adaptive_simpson_budget():
    with pytest.raises(QuadratureError) as e:
        adaptive_simpson(math.sqrt, 0.0, 1.0, tol=1e-15, budget=10)
    a, b, error = e.value.worst_panel
    assert a == 0.0 and b <= 1.0 and error > 0.0


def test_adaptive_simpson_budget_counts_panels():
    full = adaptive_simpson(math.sin, 0.0, math.pi, tol=1e-12)
    count = len(full.panels)
    assert count < full.evaluations
    exact = adaptive_simpson(math.sin, 0.0, math.pi, tol=1e-12, budget=count)
    assert exact.value == full.value
    assert len(exact.panels) == count
    with pytest.raises(QuadratureError):
        adaptive_simpson(math.sin, 0.0, math.pi, tol=1e-12, budget=count - 1)


def test_unit_panels_reciprocal():
    values = integrate_unit_panels(parse("1/t"), 1, 50)
    k = np.arange(1, 50)
    np.testing.assert_allclose(values, np.log1p(1.0 / k), rtol=1e-14)


def test_unit_panels_polynomial():
    values = integrate_unit_panels(parse("t^2"), 0, 10)
    k = np.arange(0, 10, dtype=float)
    np.testing.assert_allclose(values, ((k + 1) ** 3 - k**3) / 3.0, rtol=1e-14)


def test_unit_panels_oscillating():
    values = integrate_unit_panels(parse("sin(t)^2"), 1, 100)
    k = np.arange(1, 100, dtype=float)
    exact = 0.5 - (np.sin(2 * (k + 1)) - np.sin(2 * k)) / 4.0
    np.testing.assert_allclose(values, exact, rtol=1e-12, atol=1e-14)
