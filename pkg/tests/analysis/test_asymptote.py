import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from limitforge.analysis.asymptote import (
    CumulativeIntegral,
    build_cumulative,
    catalog,
    catalog_law,
    default_panel_budget,
    invert,
    numeric_law,
    predict,
    proof_bounds,
)
from limitforge.engine.recurrences import iterate
from limitforge.parsers.funcdsl import parse
from limitforge.schemas.laws import ClosedForm, SecondTerm
from limitforge.schemas.recurrences import (
    Coupled,
    CumulativeSecondOrder,
    DrivenSqrt,
    FirstOrderInverse,
    QuadraticMap,
    TauberianGenerator,
)
from limitforge.exceptions import (
    ConfigurationError,
    DivergenceWarning,
    FamilyMismatchError,
    HypothesisViolation,
    InversionError,
    NoCatalogEntry,
    QuadratureError,
)


@pytest.fixture(scope="module")
def half_square():
    """F(x) = 1 + x^2/2"""
    return CumulativeIntegral(parse("t"), base_point=0.0, offset=1.0)


@pytest.fixture(scope="module")
def root_integral():
    """F(x) = x + 2 x^(3/2)/3"""
    F = build_cumulative(parse("sqrt(t) + 1"), 0.0, 0.0)
    F.value(2e4)
    return F


# %% Cumulative integrals
def test_value_and_inverse(half_square):
    assert half_square.value(0.0) == 1.0
    assert half_square.value(2.0) == pytest.approx(3.0, rel=1e-12)
    assert half_square(100.0) == pytest.approx(5001.0, rel=1e-12)
    assert half_square.inverse(9.0) == pytest.approx(4.0, abs=1e-8)
    assert invert(half_square, 1.0) == 0.0


def test_out_of_range(half_square):
    with pytest.raises(InversionError):
        half_square.value(-1.0)
    with pytest.raises(InversionError):
        half_square.inverse(0.5)


def test_breakpoints_follow_lattice(half_square):
    half_square.value(20.0)
    points = half_square.breakpoints
    assert [b for b, _ in points[:5]] == [0.0, 1.0, 3.0, 7.0, 15.0]
    assert points[2][1] == pytest.approx(1.0 + 4.5, rel=1e-12)
    assert "integrand=\"t\"" in repr(half_square)


def test_values_do_not_depend_on_query_order():
    forward = CumulativeIntegral(parse("exp(-t) + 1"))
    backward = CumulativeIntegral(parse("exp(-t) + 1"))
    xs = [0.3, 2.5, 11.0, 40.0, 123.4]
    first = [forward.value(x) for x in xs]
    second = [backward.value(x) for x in reversed(xs)][::-1]
    assert first == pytest.approx(second, rel=1e-15, abs=0.0)


@given(st.lists(st.floats(min_value=0.0, max_value=1e4), min_size=2, max_size=20))
@settings(deadline=None)
def test_value_is_monotone(root_integral, xs):
    xs = sorted(xs)
    values = [root_integral.value(x) for x in xs]
    assert all(b >= a for a, b in zip(values, values[1:]))


@given(st.floats(min_value=1.0, max_value=1e6))
@settings(max_examples=200, deadline=None)
def test_inversion_consistency(half_square, y):
    x = half_square.inverse(y)
    assert abs(half_square.value(x) - y) <= 1e-9 * max(1.0, y)


def test_build_cumulative_checks_positivity():
    with pytest.raises(HypothesisViolation):
        build_cumulative(parse("t - 5"))


def test_panel_budget(monkeypatch):
    monkeypatch.delenv("LIMITFORGE_PANEL_BUDGET", raising=False)
    assert default_panel_budget() == 1_000_000
    monkeypatch.setenv("LIMITFORGE_PANEL_BUDGET", "5e3")
    assert default_panel_budget() == 5000
    for raw in ("abc", "0"):
        monkeypatch.setenv("LIMITFORGE_PANEL_BUDGET", raw)
        with pytest.raises(ConfigurationError):
            default_panel_budget()


def test_panel_budget_exhaustion():
    F = CumulativeIntegral(parse("sin(t*t) + 2"), panel_budget=50)
    with pytest.raises(QuadratureError):
        F.value(1e3)


# %% Prediction
def test_predict_identity():
    assert predict(parse("t"), None, 1e4) == pytest.approx(math.sqrt(2.0 * (1e4 - 1.0)), rel=1e-8)
    assert predict(parse("t"), None, 1) == 0.0


def test_predict_exponential():
    assert predict(parse("exp(t)"), None, 1e6) == pytest.approx(math.log(1e6), rel=1e-8)


def test_predict_with_index_function():
    expected = math.sqrt(2.0 * (math.log(1e6) / 2.0 - 1.0))
    assert predict(parse("t"), parse("2*t"), 1e6) == pytest.approx(expected, rel=1e-7)
    with pytest.raises(InversionError):
        predict(parse("t"), parse("2*t"), 3)


def test_predict_warns_when_integral_converges():
    with pytest.warns(DivergenceWarning), pytest.raises(InversionError):
        predict(parse("t"), parse("t^2"), 1e4)


def test_predict_rejects_bad_input():
    with pytest.raises(ConfigurationError):
        predict(parse("t"), None, 0.5)
    with pytest.raises(HypothesisViolation):
        predict(parse("1/(t + 1)"), None, 10)


def test_numeric_law_agrees_with_catalog():
    law = numeric_law(parse("t^2"))
    closed = catalog_law(FirstOrderInverse(f=parse("t^2")))
    # F(x) = 1 + x^3/3, so F^-1(n) = (3(n - 1))^(1/3)
    assert law(1e6) == pytest.approx((3.0 * (1e6 - 1.0)) ** (1.0 / 3.0), rel=1e-8)
    assert law(1e6) / closed(1e6) == pytest.approx(1.0, abs=1e-6)


# %% Catalog
@pytest.mark.parametrize(
    "f, g, c, e, log_power",
    [
        ("t", None, math.sqrt(2.0), 0.5, 0.0),
        ("t^2", None, 3.0 ** (1.0 / 3.0), 1.0 / 3.0, 0.0),
        ("sqrt(t)", None, 1.5 ** (2.0 / 3.0), 2.0 / 3.0, 0.0),
        ("3*t^2", "1/t", (1.0 / 2.0) ** (1.0 / 3.0), 2.0 / 3.0, 0.0),
        ("t", "2*t", 1.0, 0.0, 0.5),
        ("exp(t)", None, 1.0, 0.0, 1.0),
    ],
)
def test_first_order_catalog(f, g, c, e, log_power):
    spec = FirstOrderInverse(f=parse(f), g=parse(g) if g else None)
    (law,) = catalog(spec)
    assert law.c == pytest.approx(c, rel=1e-15)
    assert law.power_e == pytest.approx(e, rel=1e-15)
    assert law.log_power == pytest.approx(log_power, rel=1e-15)


@pytest.mark.parametrize(
    "f, g",
    [("t + 1", None), ("t", "t^2"), ("exp(t)", "t"), ("1/t", None)],
)
def test_first_order_without_catalog_entry(f, g):
    with pytest.raises(NoCatalogEntry):
        catalog(FirstOrderInverse(f=parse(f), g=parse(g) if g else None))


def test_family_catalogs():
    assert catalog_law(CumulativeSecondOrder())(6.0) == pytest.approx(6.0)
    assert catalog_law(CumulativeSecondOrder(), "A")(6.0) == pytest.approx(12.0)
    assert catalog_law(Coupled(), "b")(9.0) == pytest.approx(3.0)
    assert catalog_law(TauberianGenerator(p=1, q=2))(9.0) == pytest.approx(1.0 / 3.0)
    assert catalog_law(TauberianGenerator(p=2, q=1), "A")(2.0) == pytest.approx(
        (1.5 * 2.0) ** (2.0 / 3.0)
    )
    assert catalog_law(DrivenSqrt())(8.0) == pytest.approx(4.0)
    assert catalog_law(DrivenSqrt(driver="sin2"))(16.0) == pytest.approx(4.0)
    quadratic = catalog(QuadraticMap())
    assert catalog_law(QuadraticMap(), "a") == quadratic[0]
    assert [type(law) for law in quadratic] == [ClosedForm, SecondTerm, SecondTerm]
    with pytest.raises(NoCatalogEntry):
        catalog_law(CumulativeSecondOrder(), "b")


# %% Proof bounds
@pytest.mark.parametrize("f", ["t", "t^2", "sqrt(t)", "exp(t)", "t + 1"])
def test_proof_bounds_hold(f):
    traj = iterate(FirstOrderInverse(f=parse(f)), 10_000)
    report = proof_bounds(traj)
    assert report.passed, report
    assert [c.checked for c in report.checks] == [len(traj.checkpoints)] * 2


def test_proof_bounds_detect_wrong_values():
    traj = iterate(FirstOrderInverse(f=parse("t")), 1000)
    traj.values[-1] *= 0.9
    report = proof_bounds(traj)
    assert not report.passed
    assert report.first_violation == 1000


def test_proof_bounds_constant_is_first_step():
    # c = a_1 + 1/f(a_1) = 2.25 here; a_1 + 1 = 3 would accept the shifted value
    traj = iterate(FirstOrderInverse(f=parse("t^2"), a1=2.0), 1000)
    traj.values[-1] = (3.0 * 999.0) ** (1.0 / 3.0) + 2.5
    report = proof_bounds(traj)
    assert [c.passed for c in report.checks] == [True, False]
    assert report.first_violation == 1000


def test_proof_bounds_family():
    with pytest.raises(FamilyMismatchError):
        proof_bounds(iterate(CumulativeSecondOrder(), 10))
    with pytest.raises(FamilyMismatchError):
        proof_bounds(iterate(FirstOrderInverse(f=parse("t"), g=parse("t")), 10))
