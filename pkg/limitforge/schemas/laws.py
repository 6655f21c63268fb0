from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Union

from ..exceptions import LawEvaluationError

if TYPE_CHECKING:
    from ..analysis.asymptote import CumulativeIntegral


def _checked(value: float, n: float, description: str) -> float:
    if not math.isfinite(value) or value <= 0:
        raise LawEvaluationError(
            f"Growth law '{description}' evaluates to {value!r} at n={n!r}."
        )
    return value


@dataclass(frozen=True)
class ClosedForm:
    """c * n^power_e * (ln n)^log_power"""

    c: float
    power_e: float
    log_power: float = 0.0
    description: str = ""
    stream: str = "a"

    def __call__(self, n: float) -> float:
        try:
            shape = float(n) ** self.power_e * math.log(n) ** self.log_power
        except (ValueError, ZeroDivisionError, OverflowError) as e:
            raise LawEvaluationError(
                f"Growth law '{self.label}' cannot be evaluated at n={n!r}: {e}"
            )
        return _checked(self.c * shape, n, self.label)

    @property
    def label(self) -> str:
        if self.description:
            return self.description
        parts = [repr(self.c)]
        if self.power_e:
            parts.append(f"n^{self.power_e!r}")
        if self.log_power:
            parts.append(f"(ln n)^{self.log_power!r}")
        return "*".join(parts)

    def scaled(self, factor: float) -> "ClosedForm":
        """Same law with c multiplied by factor; values scaled by the same factor keep their ratios."""
        return ClosedForm(
            self.c * factor, self.power_e, self.log_power, self.description, self.stream
        )


@dataclass(frozen=True)
class NumericLaw:
    """F^{-1}(G(n)), G defaulting to the identity."""

    F: "CumulativeIntegral"
    G: Optional["CumulativeIntegral"] = None
    description: str = ""
    stream: str = "a"

    def __call__(self, n: float) -> float:
        y = float(n) if self.G is None else self.G.value(float(n))
        return _checked(self.F.inverse(y), n, self.label)

    @property
    def label(self) -> str:
        return self.description or "F^-1(G(n))"


@dataclass(frozen=True)
class SecondTerm:
    """
    Second-order correction of the quadratic map: 1 - n*x_n against ln n/n, or the refined ln n/(n + ln n).
    """

    refined: bool = False
    description: str = ""
    stream: str = "x"

    def __call__(self, n: float) -> float:
        if n <= 1:
            raise LawEvaluationError(f"Second-term law needs n > 1, got n={n!r}.")
        log_n = math.log(n)
        return _checked(log_n / (n + log_n) if self.refined else log_n / n, n, self.label)

    def observe(self, n: int, x: float) -> float:
        return 1.0 - n * x

    @property
    def label(self) -> str:
        if self.description:
            return self.description
        return "ln n/(n + ln n)" if self.refined else "ln n/n"


GrowthLaw = Union[ClosedForm, NumericLaw, SecondTerm]
