from __future__ import annotations

from functools import cached_property
from dataclasses import dataclass
from typing import Callable, Union

FUNCTION_NAMES = ("ln", "exp", "sin", "sqrt")
BINARY_OPERATORS = ("+", "-", "*", "/")


# Expression tree nodes
@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str = "t"


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"

    def __post_init__(self) -> None:
        assert self.op in BINARY_OPERATORS, f"Unknown binary operator '{self.op}'."


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: float


@dataclass(frozen=True)
class Call:
    name: str
    arg: "Node"


Node = Union[Const, Var, Neg, BinOp, Pow, Call]


@dataclass(frozen=True)
class FunctionExpr:
    """
    Parsed real function of the single variable `t`.
    Instances are immutable; the evaluator is compiled once on first use and is not pickled.
    """

    root: Node
    source_text: str = ""

    @cached_property
    def _compiled(self) -> Callable[[float], float]:
        from ..parsers.funcdsl import compile_node

        return compile_node(self.root)

    def __call__(self, t: float) -> float:
        return self._compiled(float(t))

    def __getstate__(self) -> dict:
        state = dict(self.__dict__)
        state.pop("_compiled", None)
        return state

    def __str__(self) -> str:
        return self.source_text

    @property
    def is_identity(self) -> bool:
        return isinstance(self.root, Var)
