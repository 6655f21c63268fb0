import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from limitforge.parsers.funcdsl import (
    check_hypotheses,
    evaluate,
    evaluate_array,
    parse,
    power_law,
    reciprocal,
    render,
    rescale,
)
from limitforge.schemas.expressions import FUNCTION_NAMES, BinOp, Call, Const, Neg, Pow, Var
from limitforge.exceptions import (
    ExpressionDomainError,
    ExpressionSyntaxError,
    NonConstantExponentError,
    UnknownIdentifierError,
)

CORPUS = [
    "t",
    "1/t",
    "ln(t)/t",
    "ln(t)^2/t",
    "t^2",
    "t^0.5",
    "sqrt(t)",
    "2*t",
    "3*t^2 + 1",
    "exp(t)",
    "exp(-t)",
    "exp(t/10) - 1",
    "sin(t)^2",
    "1 + sin(t)^2",
    "t^(-1)",
    "t^-2",
    "1/(t*t)",
    "(t + 1)/(t + 2)",
    "-t + 5",
    "--t",
    "t - -1",
    "2^3",
    "ln(ln(t + 3))",
    "sqrt(t + 1) - sqrt(t)",
    "t*ln(t + 1)",
    "1/sqrt(t)",
    "t^1.5/(1 + t)",
    "exp(sin(t))",
    "1e-3*t + 2.5e2",
    ".5*t",
    "(((t)))",
    "t/2/2",
    "t - t/3 + t/9",
]


@pytest.fixture
def log_over_t():
    return parse("ln(t)/t")


def test_parse_and_evaluate(log_over_t):
    """
    Tests parsing of a composite expression and its binary64 evaluation.
    """
    assert evaluate(log_over_t, math.e) == pytest.approx(1 / math.e, rel=1e-15)
    assert log_over_t.source_text == "ln(t)/t"
    assert str(log_over_t) == "ln(t)/t"


def test_precedence_and_associativity():
    assert parse("2+3*t")(2) == 8.0
    assert parse("-t^2")(3) == -9.0
    assert parse("t/2/2")(8) == 2.0
    assert parse("2^-1")(0) == 0.5
    # Unary minus binds looser than '^' and tighter than '*'
    assert parse("-t^2").root == Neg(Pow(Var(), 2.0))
    assert parse("2*-t").root == BinOp("*", Const(2.0), Neg(Var()))


def test_function_calls():
    expr = parse("sqrt(exp(t))")
    assert expr.root == Call("sqrt", Call("exp", Var()))
    assert expr(2.0) == pytest.approx(math.e, rel=1e-15)


@pytest.mark.parametrize(
    "text, offset",
    [("t +", 3), ("2 t", 2), ("", 0), ("(t", 2), ("t^2^3", 3), ("t $ 1", 2)],
)
def test_syntax_errors_report_offset(text, offset):
    with pytest.raises(ExpressionSyntaxError) as e:
        parse(text)
    assert e.value.offset == offset
    assert len(e.value.expected) > 0


def test_syntax_error_offset_counts_bytes():
    # 'é' is two bytes in UTF-8
    with pytest.raises(ExpressionSyntaxError) as e:
        parse("é")
    assert e.value.offset == 0
    with pytest.raises(ExpressionSyntaxError) as e:
        parse("t+é")
    assert e.value.offset == 2


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifierError) as e:
        parse("1 + cos(t)")
    assert e.value.identifier == "cos"
    assert e.value.offset == 4
    with pytest.raises(UnknownIdentifierError):
        parse("T")


@pytest.mark.parametrize("name", FUNCTION_NAMES)
def test_known_functions_parse(name):
    assert parse(f"{name}(t)").root == Call(name, Var())


@pytest.mark.parametrize("text", ["pi*t", "e^t", "abs(t)", "cos(t)"])
def test_names_outside_the_grammar(text):
    with pytest.raises(UnknownIdentifierError):
        parse(text)


def test_binary_nodes_reject_unknown_operators():
    with pytest.raises(AssertionError):
        BinOp("%", Var(), Const(2.0))


@pytest.mark.parametrize("text", ["t^t", "t^(t)", "t^ln(2)"])
def test_non_constant_exponent(text):
    with pytest.raises(NonConstantExponentError):
        parse(text)


@pytest.mark.parametrize(
    "text, t, subexpression",
    [
        ("ln(t)", 0.0, "ln(t)"),
        ("1/t", 0.0, "(1.0/t)"),
        ("sqrt(t - 2)", 1.0, "sqrt((t-2.0))"),
        ("t^0.5", -1.0, "(t^0.5)"),
        ("t^-1", 0.0, "(t^(-1.0))"),
    ],
)
def test_domain_errors_name_subexpression(text, t, subexpression):
    with pytest.raises(ExpressionDomainError) as e:
        evaluate(parse(text), t)
    assert e.value.subexpression == subexpression
    assert e.value.t == t


def test_overflow_yields_infinity():
    assert parse("exp(t)")(1000.0) == math.inf
    assert parse("t^400")(1e10) == math.inf


def test_render_reparses_to_identical_tree():
    """
    Tests that the canonical rendering parses back to the same tree, hence bit-identical evaluation,
    over the whole corpus.
    """
    assert len(CORPUS) >= 30
    for text in CORPUS:
        expr = parse(text)
        again = parse(render(expr))
        assert again.root == expr.root, text
        for t in (0.5, 1.0, 3.0, 17.25):
            try:
                expected = evaluate(expr, t)
            except ExpressionDomainError:
                continue
            assert evaluate(again, t) == expected or (math.isnan(expected) and math.isnan(evaluate(again, t)))


def test_evaluate_array_matches_scalar(log_over_t):
    t = np.arange(1.0, 200.0)
    np.testing.assert_allclose(
        evaluate_array(log_over_t, t), [log_over_t(x) for x in t], rtol=1e-14
    )


def test_evaluate_array_reports_first_offending_point():
    with pytest.raises(ExpressionDomainError) as e:
        evaluate_array(parse("ln(t - 5)"), np.arange(1.0, 10.0))
    assert e.value.t == 1.0
    assert e.value.subexpression == "ln((t-5.0))"


def test_tree_builders():
    assert rescale(parse("1/t"), 2.0)(3.0) == pytest.approx(1 / 6, rel=1e-15)
    assert reciprocal(parse("2*t"))(4.0) == 0.125
    # builders return parseable source text
    assert parse(rescale(parse("ln(t)/t"), 2.0).source_text)(1.5) == pytest.approx(
        math.log(3.0) / 3.0, rel=1e-15
    )


@pytest.mark.parametrize(
    "text, expected",
    [
        ("t", (1.0, 1.0)),
        ("2*t", (2.0, 1.0)),
        ("3*t^2", (3.0, 2.0)),
        ("sqrt(t)", (1.0, 0.5)),
        ("t^2/4", (0.25, 2.0)),
        ("1", (1.0, 0.0)),
        ("1/t", (1.0, -1.0)),
        ("t + 1", None),
        ("exp(t)", None),
        ("-t", None),
    ],
)
def test_power_law(text, expected):
    assert power_law(parse(text)) == expected


def test_check_hypotheses_decreasing():
    verdict = check_hypotheses(parse("1/t"), 1.0, 100.0, 16)
    assert verdict.positive_on_samples
    assert not verdict.non_decreasing_on_samples
    assert verdict.non_increasing_from == verdict.grid[0] == 1.0
    assert verdict.samples_used == len(verdict.grid) == 16


def test_check_hypotheses_increasing():
    verdict = check_hypotheses(parse("t"), 0.0, 10.0, 8)
    # positivity is judged strictly above lo
    assert verdict.positive_on_samples
    assert verdict.non_decreasing_on_samples
    assert verdict.non_increasing_from is None
    assert min(verdict.grid) > 0.0


def test_check_hypotheses_eventually_decreasing(log_over_t):
    verdict = check_hypotheses(log_over_t, 1.0, 1e4, 64)
    assert verdict.positive_on_samples
    assert 2.0 < verdict.non_increasing_from < 4.0


def test_check_hypotheses_negative():
    verdict = check_hypotheses(parse("t - 5"), 0.0, 100.0, 32)
    assert not verdict.positive_on_samples


@given(st.floats(min_value=1e-3, max_value=1e3), st.floats(min_value=0.1, max_value=10.0))
@settings(max_examples=200)
def test_scaling_property(t, c):
    """
    rescale(f, c) evaluates f at c*t, and the reciprocal of a positive function is its inverse.
    """
    f = parse("sqrt(t) + ln(t + 1)")
    assert rescale(f, c)(t) == pytest.approx(f(c * t), rel=1e-15)
    assert reciprocal(f)(t) * f(t) == pytest.approx(1.0, rel=1e-15)


@given(st.floats(min_value=-50.0, max_value=50.0, allow_nan=False))
def test_polynomial_evaluation_order(t):
    # '^' with an integer exponent agrees with repeated products up to rounding
    assert parse("t^3 - 2*t")(t) == pytest.approx(t * t * t - 2 * t, rel=1e-12, abs=1e-12)
