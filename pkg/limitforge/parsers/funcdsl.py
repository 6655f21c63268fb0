import re
import math
import logging
from typing import Callable, List, NamedTuple, Optional, Tuple

import numpy as np

from ..schemas.expressions import (
    FUNCTION_NAMES,
    BinOp,
    Call,
    Const,
    FunctionExpr,
    Neg,
    Node,
    Pow,
    Var,
)
from ..schemas.reports import MonotonicityVerdict
from ..exceptions import (
    ExpressionDomainError,
    ExpressionSyntaxError,
    NonConstantExponentError,
    UnknownIdentifierError,
)

logger = logging.getLogger(__name__)

"""
Grammar (whitespace-insensitive, identifiers case-sensitive):

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := '-' factor | atom ('^' exponent)?
    atom   := number | 't' | ident '(' expr ')' | '(' expr ')'
    exponent := number | '-' number | '(' ['-'] number ')'
"""

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^()])
""",
    re.VERBOSE,
)

_ATOM_START = ("number", "t", "function call", "(", "-")
_AFTER_OPERAND = ("+", "-", "*", "/", "^", ")", "end of input")


class Token(NamedTuple):
    kind: str  # "number", "ident", "op" or "end"
    text: str
    pos: int


# %% Tokenizer and recursive descent parser
def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


def tokenize(text: str) -> List[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise ExpressionSyntaxError(
                f"Unexpected character {text[pos]!r} at offset {_byte_offset(text, pos)}",
                offset=_byte_offset(text, pos),
                expected=_ATOM_START,
            )
        if match.lastgroup != "ws":
            tokens.append(Token(match.lastgroup, match.group(), pos))
        pos = match.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str) -> None:
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0

    def peek(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        token = self.tokens[self.i]
        self.i += 1
        return token

    def is_op(self, *ops: str) -> bool:
        token = self.peek()
        return token.kind == "op" and token.text in ops

    def syntax_error(self, token: Token, expected) -> ExpressionSyntaxError:
        offset = _byte_offset(self.text, token.pos)
        found = "end of input" if token.kind == "end" else repr(token.text)
        return ExpressionSyntaxError(
            f"Unexpected {found} at offset {offset}, expected one of: {', '.join(expected)}",
            offset=offset,
            expected=expected,
        )

    def expect(self, op: str, expected) -> Token:
        if not self.is_op(op):
            raise self.syntax_error(self.peek(), expected)
        return self.advance()

    def parse(self) -> Node:
        if self.peek().kind == "end":
            raise ExpressionSyntaxError(
                "Empty expression", offset=0, expected=_ATOM_START
            )
        node = self.expr()
        if self.peek().kind != "end":
            raise self.syntax_error(self.peek(), _AFTER_OPERAND)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.is_op("+", "-"):
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.is_op("*", "/"):
            op = self.advance().text
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        if self.is_op("-"):
            self.advance()
            return Neg(self.factor())
        node = self.atom()
        if self.is_op("^"):
            self.advance()
            node = Pow(node, self.exponent())
            if self.is_op("^"):
                raise self.syntax_error(
                    self.peek(), ("+", "-", "*", "/", ")", "end of input")
                )
        return node

    def exponent(self) -> float:
        sign = 1.0
        parenthesized = self.is_op("(")
        if parenthesized:
            self.advance()
        if self.is_op("-"):
            self.advance()
            sign = -1.0
        token = self.peek()
        if token.kind != "number":
            if token.kind == "end" or (token.kind == "op" and token.text != "("):
                raise self.syntax_error(token, ("number",))
            raise NonConstantExponentError(
                f"Exponent at offset {_byte_offset(self.text, token.pos)} must be a numeric literal",
                offset=_byte_offset(self.text, token.pos),
            )
        self.advance()
        if parenthesized:
            self.expect(")", (")",))
        return sign * float(token.text)

    def atom(self) -> Node:
        token = self.peek()
        if token.kind == "number":
            self.advance()
            return Const(float(token.text))
        if token.kind == "ident":
            self.advance()
            if token.text == "t":
                return Var()
            if token.text in FUNCTION_NAMES:
                self.expect("(", ("(",))
                arg = self.expr()
                self.expect(")", _AFTER_OPERAND[:-1])
                return Call(token.text, arg)
            raise UnknownIdentifierError(
                f"Unknown identifier '{token.text}' at offset {_byte_offset(self.text, token.pos)}",
                identifier=token.text,
                offset=_byte_offset(self.text, token.pos),
            )
        if self.is_op("("):
            self.advance()
            node = self.expr()
            self.expect(")", _AFTER_OPERAND[:-1])
            return node
        raise self.syntax_error(token, _ATOM_START)


def parse(text: str) -> FunctionExpr:
    """Parses a function of `t` into an immutable expression tree.

    Args:
        text (str): Expression source, e.g. "ln(t)/t".

    Raises:
        ExpressionSyntaxError: Raises with the byte offset and the expected token set.
        UnknownIdentifierError: Raises on identifiers other than t, ln, exp, sin and sqrt.
        NonConstantExponentError: Raises when '^' is not followed by a numeric literal.

    Returns:
        FunctionExpr: Parsed expression.
    """
    assert isinstance(text, str), "Expression must be a string."
    return FunctionExpr(root=_Parser(text).parse(), source_text=text)


# %% Rendering
def _render_number(value: float) -> str:
    if math.isinf(value):
        return "1e999" if value > 0 else "(-1e999)"
    return repr(value) if value >= 0 else f"(-{repr(-value)})"


def render_node(node: Node) -> str:
    if isinstance(node, Const):
        return _render_number(node.value)
    if isinstance(node, Var):
        return "t"
    if isinstance(node, Neg):
        return f"(-{render_node(node.operand)})"
    if isinstance(node, BinOp):
        return f"({render_node(node.left)}{node.op}{render_node(node.right)})"
    if isinstance(node, Pow):
        exponent = (
            repr(node.exponent)
            if node.exponent >= 0
            else f"(-{repr(-node.exponent)})"
        )
        return f"({render_node(node.base)}^{exponent})"
    if isinstance(node, Call):
        return f"{node.name}({render_node(node.arg)})"
    raise TypeError(f"Unknown expression node {node!r}")


def render(expr: FunctionExpr) -> str:
    """
    Returns a fully parenthesized source text that parses back into an expression with identical evaluation.
    """
    return render_node(expr.root)


# %% Scalar evaluation
def _domain_error(message: str, node: Node, t: float) -> ExpressionDomainError:
    subexpression = render_node(node)
    return ExpressionDomainError(
        f"{message} in '{subexpression}' at t={t!r}", subexpression=subexpression, t=t
    )


def _power(x: float, exponent: float, node: Node, t: float) -> float:
    if x == 0.0 and exponent < 0:
        raise _domain_error("Zero raised to a negative power", node, t)
    if x < 0 and not exponent.is_integer():
        raise _domain_error("Negative base with a non-integer exponent", node, t)
    try:
        return math.pow(x, exponent)
    except OverflowError:
        if x < 0 and exponent % 2 == 1:
            return -math.inf
        return math.inf


def compile_node(node: Node) -> Callable[[float], float]:
    """
    Compiles an expression tree into a closure applying the operations in tree order.
    """
    if isinstance(node, Const):
        value = node.value
        return lambda t: value
    if isinstance(node, Var):
        return lambda t: t
    if isinstance(node, Neg):
        operand = compile_node(node.operand)
        return lambda t: -operand(t)
    if isinstance(node, BinOp):
        left, right = compile_node(node.left), compile_node(node.right)
        if node.op == "+":
            return lambda t: left(t) + right(t)
        if node.op == "-":
            return lambda t: left(t) - right(t)
        if node.op == "*":
            return lambda t: left(t) * right(t)

        def divide(t):
            numerator = left(t)
            denominator = right(t)
            if denominator == 0.0:
                raise _domain_error("Division by zero", node, t)
            return numerator / denominator

        return divide
    if isinstance(node, Pow):
        base, exponent = compile_node(node.base), float(node.exponent)
        return lambda t: _power(base(t), exponent, node, t)
    if isinstance(node, Call):
        arg = compile_node(node.arg)
        if node.name == "ln":

            def ln(t):
                x = arg(t)
                if x <= 0:
                    raise _domain_error("Logarithm of a non-positive value", node, t)
                return math.log(x)

            return ln
        if node.name == "exp":

            def exp(t):
                try:
                    return math.exp(arg(t))
                except OverflowError:
                    return math.inf

            return exp
        if node.name == "sin":

            def sin(t):
                try:
                    return math.sin(arg(t))
                except ValueError:
                    raise _domain_error("Sine of a non-finite value", node, t)

            return sin
        if node.name == "sqrt":

            def sqrt(t):
                x = arg(t)
                if x < 0:
                    raise _domain_error("Square root of a negative value", node, t)
                return math.sqrt(x)

            return sqrt
    raise TypeError(f"Unknown expression node {node!r}")


def evaluate(expr: FunctionExpr, t: float) -> float:
    """Evaluates the expression at t in binary64.

    Raises:
        ExpressionDomainError: Raises outside of the natural domain, naming the offending subexpression and t.
    """
    return expr(t)


# %% Vectorized evaluation
def _first_offending(t: np.ndarray, mask: np.ndarray) -> float:
    return float(t[np.argmax(mask)])


def _evaluate_node_array(node: Node, t: np.ndarray) -> np.ndarray:
    if isinstance(node, Const):
        return np.full(t.shape, node.value, dtype=float)
    if isinstance(node, Var):
        return t
    if isinstance(node, Neg):
        return -_evaluate_node_array(node.operand, t)
    if isinstance(node, BinOp):
        left = _evaluate_node_array(node.left, t)
        right = _evaluate_node_array(node.right, t)
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        if node.op == "*":
            return left * right
        zero = right == 0.0
        if zero.any():
            raise _domain_error("Division by zero", node, _first_offending(t, zero))
        return left / right
    if isinstance(node, Pow):
        x = _evaluate_node_array(node.base, t)
        exponent = float(node.exponent)
        bad = (x == 0.0) if exponent < 0 else np.zeros(x.shape, dtype=bool)
        if not exponent.is_integer():
            bad = bad | (x < 0)
        if bad.any():
            raise _domain_error(
                "Invalid power base", node, _first_offending(t, bad)
            )
        return np.power(x, exponent)
    if isinstance(node, Call):
        x = _evaluate_node_array(node.arg, t)
        if node.name == "ln":
            bad = x <= 0
            if bad.any():
                raise _domain_error(
                    "Logarithm of a non-positive value", node, _first_offending(t, bad)
                )
            return np.log(x)
        if node.name == "exp":
            return np.exp(x)
        if node.name == "sin":
            bad = ~np.isfinite(x) & ~np.isnan(x)
            if bad.any():
                raise _domain_error(
                    "Sine of a non-finite value", node, _first_offending(t, bad)
                )
            return np.sin(x)
        if node.name == "sqrt":
            bad = x < 0
            if bad.any():
                raise _domain_error(
                    "Square root of a negative value", node, _first_offending(t, bad)
                )
            return np.sqrt(x)
    raise TypeError(f"Unknown expression node {node!r}")


def evaluate_array(expr: FunctionExpr, t: np.ndarray) -> np.ndarray:
    """
    Vectorized evaluation with the same domain rules as `evaluate`. Overflow yields inf.
    """
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        return _evaluate_node_array(expr.root, t)


# %% Tree builders
def _substitute(node: Node, replacement: Node) -> Node:
    if isinstance(node, Var):
        return replacement
    if isinstance(node, Neg):
        return Neg(_substitute(node.operand, replacement))
    if isinstance(node, BinOp):
        return BinOp(
            node.op,
            _substitute(node.left, replacement),
            _substitute(node.right, replacement),
        )
    if isinstance(node, Pow):
        return Pow(_substitute(node.base, replacement), node.exponent)
    if isinstance(node, Call):
        return Call(node.name, _substitute(node.arg, replacement))
    return node


def _from_root(root: Node) -> FunctionExpr:
    return FunctionExpr(root=root, source_text=render_node(root))


def reciprocal(expr: FunctionExpr) -> FunctionExpr:
    """Returns 1/expr."""
    return _from_root(BinOp("/", Const(1.0), expr.root))


def rescale(expr: FunctionExpr, factor: float) -> FunctionExpr:
    """Returns expr(factor*t)."""
    return _from_root(_substitute(expr.root, BinOp("*", Const(float(factor)), Var())))


def _match_power_law(node: Node) -> Optional[Tuple[float, float]]:
    if isinstance(node, Var):
        return 1.0, 1.0
    if isinstance(node, Const):
        return (node.value, 0.0) if node.value > 0 else None
    if isinstance(node, Pow):
        base = _match_power_law(node.base)
        if base is None:
            return None
        return base[0] ** node.exponent, base[1] * node.exponent
    if isinstance(node, Call) and node.name == "sqrt":
        arg = _match_power_law(node.arg)
        return None if arg is None else (math.sqrt(arg[0]), arg[1] / 2)
    if isinstance(node, BinOp) and node.op in ("*", "/"):
        left, right = _match_power_law(node.left), _match_power_law(node.right)
        if left is None or right is None:
            return None
        if node.op == "*":
            return left[0] * right[0], left[1] + right[1]
        return left[0] / right[0], left[1] - right[1]
    return None


def power_law(expr: FunctionExpr) -> Optional[Tuple[float, float]]:
    """
    Recognizes expressions of the form c*t^alpha with c > 0 and returns (c, alpha), or None.
    """
    return _match_power_law(expr.root)


# %% Hypotheses
def sample_grid(lo: float, hi: float, n_samples: int) -> np.ndarray:
    """
    Geometric grid of n_samples points in [lo, hi]. For lo <= 0 the grid is shifted to start just above lo.
    """
    if lo > 0:
        return np.geomspace(lo, hi, n_samples)
    width = hi - lo
    return lo + np.geomspace(width * 1e-6, width, n_samples)


def check_hypotheses(
    expr: FunctionExpr, lo: float, hi: float, n_samples: int
) -> MonotonicityVerdict:
    """Samples an expression on a geometric grid and reports positivity and monotonicity.

    Positivity is judged on grid points strictly greater than lo. `non_increasing_from` is the earliest
    grid point from which consecutive samples never increase, or None when only the last sample qualifies.

    Args:
        expr (FunctionExpr): Expression to sample.
        lo (float): Lower end of the sampled interval.
        hi (float): Upper end of the sampled interval.
        n_samples (int): Number of grid points.

    Raises:
        ExpressionDomainError: Propagated from evaluation.

    Returns:
        MonotonicityVerdict: Verdict with the grid it was computed on.
    """
    assert lo < hi, f"Sampling interval must satisfy lo < hi, got [{lo}, {hi}]."
    assert n_samples >= 2, "At least two samples are needed to check monotonicity."
    grid = [float(x) for x in sample_grid(lo, hi, n_samples)]
    values = [evaluate(expr, x) for x in grid]
    positive = all(v > 0 for x, v in zip(grid, values) if x > lo)
    non_decreasing = all(b >= a for a, b in zip(values, values[1:]))
    i = len(values) - 1
    while i > 0 and values[i - 1] >= values[i]:
        i -= 1
    non_increasing_from = grid[i] if i < len(values) - 1 else None
    logger.debug(
        "Sampled '%s' on [%g, %g]: positive=%s, non_increasing_from=%s",
        expr.source_text,
        lo,
        hi,
        positive,
        non_increasing_from,
    )
    return MonotonicityVerdict(
        positive_on_samples=positive,
        non_increasing_from=non_increasing_from,
        non_decreasing_on_samples=non_decreasing,
        samples_used=n_samples,
        lo=lo,
        hi=hi,
        grid=grid,
    )
