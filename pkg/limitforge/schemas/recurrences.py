from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import ClassVar, List, Optional, Union

from .expressions import FunctionExpr
from ..exceptions import ConfigurationError, InvalidRecurrenceSpec

DRIVERS = ("constant", "sin2")


# Recurrence families
@dataclass(frozen=True)
class FirstOrderInverse:
    """a_{n+1} = a_n + 1/(f(a_n) g(n)), g defaulting to the constant 1."""

    family: ClassVar[str] = "first_order"
    f: FunctionExpr
    g: Optional[FunctionExpr] = None
    a1: float = 1.0

    def __post_init__(self):
        _require_positive("a1", self.a1)


@dataclass(frozen=True)
class CumulativeSecondOrder:
    """a_{n+1} = a_n + A_n/a_n with A_n the running sum of a_k."""

    family: ClassVar[str] = "cumulative"
    a1: float = 1.0

    def __post_init__(self):
        _require_positive("a1", self.a1)


@dataclass(frozen=True)
class TauberianGenerator:
    """a_n is the positive root of a^p (A_{n-1} + a^q) = 1, A_n the running sum of a_k^q."""

    family: ClassVar[str] = "tauberian"
    p: int = 1
    q: int = 2

    def __post_init__(self):
        if int(self.p) != self.p or int(self.q) != self.q or self.p < 1 or self.q < 1:
            raise InvalidRecurrenceSpec(
                f"Tauberian exponents must be positive integers, got p={self.p}, q={self.q}."
            )


@dataclass(frozen=True)
class Coupled:
    """a_{n+1} - a_n = 1/b_n^2, b_{n+1} - b_n = 1/a_n^2."""

    family: ClassVar[str] = "coupled"
    a1: float = 1.0
    b1: float = 1.0

    def __post_init__(self):
        _require_positive("a1", self.a1)
        _require_positive("b1", self.b1)


@dataclass(frozen=True)
class QuadraticMap:
    """x_{n+1} = x_n - x_n^2 with 0 < x_1 < 1."""

    family: ClassVar[str] = "quadratic"
    x1: float = 0.5

    def __post_init__(self):
        if not 0 < self.x1 < 1:
            raise InvalidRecurrenceSpec(
                f"QuadraticMap requires 0 < x1 < 1, got x1={self.x1}."
            )


@dataclass(frozen=True)
class DrivenSqrt:
    """a_{n+1} = a_n + d(n)/a_n with d the constant 1 or sin^2 n."""

    family: ClassVar[str] = "driven"
    driver: str = "constant"
    a1: float = 1.0

    def __post_init__(self):
        _require_positive("a1", self.a1)
        if self.driver not in DRIVERS:
            raise InvalidRecurrenceSpec(
                f"Unknown driver '{self.driver}', expected one of {DRIVERS}."
            )


RecurrenceSpec = Union[
    FirstOrderInverse,
    CumulativeSecondOrder,
    TauberianGenerator,
    Coupled,
    QuadraticMap,
    DrivenSqrt,
]

FAMILIES = {
    cls.family: cls
    for cls in (
        FirstOrderInverse,
        CumulativeSecondOrder,
        TauberianGenerator,
        Coupled,
        QuadraticMap,
        DrivenSqrt,
    )
}


def _require_positive(name: str, value: float) -> None:
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise InvalidRecurrenceSpec(
            f"Initial value {name} must be strictly positive, got {value!r}."
        )


def describe(spec: RecurrenceSpec) -> str:
    if isinstance(spec, FirstOrderInverse):
        g = f", g={spec.g.source_text}" if spec.g is not None else ""
        return f"FirstOrderInverse(f={spec.f.source_text}{g}, a1={spec.a1})"
    if isinstance(spec, TauberianGenerator):
        return f"TauberianGenerator(p={spec.p}, q={spec.q})"
    return repr(spec)


# Checkpoint schedules
@dataclass(frozen=True)
class Schedule:
    """
    Checkpoint schedule descriptor. Every schedule contains 1 and n_max.
    Textual forms: "geometric", "all", "linear:STEP", "list:N1,N2,...".
    """

    kind: str = "geometric"
    step: Optional[int] = None
    points: Optional[tuple] = None

    @classmethod
    def parse(cls, text: Union[str, "Schedule", None]) -> "Schedule":
        if text is None:
            return cls()
        if isinstance(text, Schedule):
            return text
        kind, _, arg = str(text).strip().partition(":")
        try:
            if kind == "geometric" and not arg:
                return cls()
            if kind == "all" and not arg:
                return cls(kind="all")
            if kind == "linear":
                step = int(float(arg))
                if step < 1:
                    raise ValueError
                return cls(kind="linear", step=step)
            if kind == "list":
                points = tuple(sorted({int(float(p)) for p in arg.split(",") if p}))
                if not points or points[0] < 1:
                    raise ValueError
                return cls(kind="list", points=points)
        except ValueError:
            pass
        raise ConfigurationError(
            f"Invalid checkpoint schedule '{text}'. Expected 'geometric', 'all', 'linear:STEP' or 'list:N1,N2,...'."
        )

    @property
    def last_point(self) -> Optional[int]:
        return self.points[-1] if self.points else None

    def checkpoints(self, n_max: int) -> List[int]:
        n_max = int(n_max)
        if n_max < 1:
            raise ConfigurationError(f"n_max must be at least 1, got {n_max}.")
        if self.kind == "all":
            return list(range(1, n_max + 1))
        if self.kind == "linear":
            points = set(range(self.step, n_max + 1, self.step))
        elif self.kind == "list":
            if self.points[-1] > n_max:
                raise ConfigurationError(
                    f"Checkpoint {self.points[-1]} exceeds n_max={n_max}."
                )
            points = set(self.points)
        else:
            points = set()
            scale = 1
            while scale <= n_max:
                points.update(m * scale for m in (1, 2, 5) if m * scale <= n_max)
                scale *= 10
        points.update((1, n_max))
        return sorted(points)

    def __str__(self) -> str:
        if self.kind == "linear":
            return f"linear:{self.step}"
        if self.kind == "list":
            return "list:" + ",".join(str(p) for p in self.points)
        return self.kind


# Iteration output
@dataclass
class Trajectory:
    """
    Checkpointed samples of a recurrence. `successors[i]` holds the value at checkpoints[i] + 1
    (None at n_max); coupled trajectories carry the b stream in `second_values`.
    """

    spec: RecurrenceSpec
    checkpoints: List[int]
    values: List[float]
    aux_sums: Optional[List[float]] = None
    second_values: Optional[List[float]] = None
    successors: List[Optional[float]] = field(default_factory=list)
    second_successors: Optional[List[Optional[float]]] = None
    terminated_at: Optional[int] = None
    termination_reason: Optional[str] = None

    @property
    def family(self) -> str:
        return self.spec.family

    @property
    def n_max(self) -> int:
        return self.checkpoints[-1]

    def stream(self, name: str = "a") -> List[float]:
        """
        Returns the values of stream 'a' (or 'x'), 'b' or 'A' (running sum).
        """
        if name in ("a", "x"):
            return self.values
        if name == "b" and self.second_values is not None:
            return self.second_values
        if name == "A" and self.aux_sums is not None:
            return self.aux_sums
        raise KeyError(f"Stream '{name}' not found in {self.family} trajectory")

    def rows(self) -> List[dict]:
        rows = []
        for i, n in enumerate(self.checkpoints):
            row = {"n": n, "value": self.values[i]}
            if self.second_values is not None:
                row["second_value"] = self.second_values[i]
            if self.aux_sums is not None:
                row["aux_sum"] = self.aux_sums[i]
            rows.append(row)
        return rows
