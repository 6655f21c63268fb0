import math
from typing import Iterable, Tuple, Union

import numpy as np


def two_sum(u: float, v: float) -> Tuple[float, float]:
    """
    Error-free transformation of a sum: u + v == s + t exactly, with s = fl(u + v).
    """
    s = u + v
    up = s - v
    vpp = s - up
    up -= u
    vpp -= v
    t = -(up + vpp)
    return s, t


class CompensatedSum:
    """Running sum that carries the rounding error of every addition.

    The state is a pair (s, t) with s the rounded sum and t the accumulated error term, updated with
    two-sum at the least significant end first. Behaves like math.fsum but supports a running total.

    Examples:
        $ total = CompensatedSum()
        $ for a in values:
        $     total += a
        $ total.value
    """

    __slots__ = ("_s", "_t")

    def __init__(self, y: Union[float, "CompensatedSum"] = 0.0) -> None:
        self.set(y)

    def set(self, y: Union[float, "CompensatedSum"] = 0.0) -> None:
        if isinstance(y, CompensatedSum):
            self._s, self._t = y._s, y._t
        else:
            self._s, self._t = float(y), 0.0

    def add(self, y: float) -> None:
        y, u = two_sum(float(y), self._t)
        self._s, self._t = two_sum(y, self._s)
        if self._s == 0:
            self._s = u
        else:
            self._t += u

    def extend(self, values: Iterable[float]) -> None:
        for y in values:
            self.add(y)

    def add_array(self, values: np.ndarray) -> None:
        """
        Adds the correctly rounded sum of an array chunk.
        """
        self.add(math.fsum(np.asarray(values, dtype=float).tolist()))

    def __iadd__(self, y: float) -> "CompensatedSum":
        self.add(y)
        return self

    @property
    def value(self) -> float:
        return self._s + self._t

    def __float__(self) -> float:
        return self.value

    def __repr__(self) -> str:
        return f"CompensatedSum({self.value!r})"


def chunked_fsum(values: Iterable[np.ndarray]) -> float:
    """
    Sums a stream of array chunks: each chunk is summed with math.fsum, chunk totals are compensated.
    """
    total = CompensatedSum()
    for chunk in values:
        total.add_array(chunk)
    return total.value
