import math
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from ..exceptions import QuadratureError
from ..schemas.expressions import FunctionExpr
from ..parsers.funcdsl import evaluate_array

logger = logging.getLogger(__name__)

EPS = 2.220446049250313e-16
ROUNDING_FLOOR = 64 * EPS


@dataclass
class Panel:
    a: float
    b: float
    value: float
    error: float


@dataclass
class QuadratureResult:
    value: float
    error: float
    evaluations: int
    panels: List[Panel] = field(default_factory=list, repr=False)


def _simpson(fa: float, fm: float, fb: float, h: float) -> float:
    return h / 6.0 * (fa + 4.0 * fm + fb)


def adaptive_simpson(
    func: Callable[[float], float],
    a: float,
    b: float,
    tol: float = 1e-12,
    budget: Optional[int] = None,
    max_depth: int = 50,
) -> QuadratureResult:
    """Adaptive Simpson's rule with panel bisection and Richardson correction.

    A panel is accepted when the two-halves estimate differs from the whole-panel estimate by at most
    15*tol, by less than the rounding floor, or when it sits at max_depth. Accepted panels are returned
    left to right.

    Args:
        func (Callable[[float], float]): Integrand.
        a (float): Lower bound.
        b (float): Upper bound, a <= b.
        tol (float, optional): Absolute error tolerance. Defaults to 1e-12.
        budget (Optional[int], optional): Maximum number of panels, accepted and pending. Defaults to None (unbounded).
        max_depth (int, optional): Maximum bisection depth. Defaults to 50.

    Raises:
        QuadratureError: Raises when the budget is exhausted, reporting the worst panel.

    Returns:
        QuadratureResult: Value, error estimate and accepted panels.
    """
    assert a <= b, f"Integration bounds must satisfy a <= b, got [{a}, {b}]."
    if a == b:
        return QuadratureResult(0.0, 0.0, 0, [Panel(a, b, 0.0, 0.0)])
    fa, fb, fm = func(a), func(b), func(0.5 * (a + b))
    evaluations = 3
    stack = [(a, b, fa, fm, fb, _simpson(fa, fm, fb, b - a), tol, 0)]
    panels: List[Panel] = []
    worst: Optional[Tuple[float, float, float]] = None
    while stack:
        a0, b0, fa0, fm0, fb0, whole, tol0, depth = stack.pop()
        m = 0.5 * (a0 + b0)
        flm, frm = func(0.5 * (a0 + m)), func(0.5 * (m + b0))
        evaluations += 2
        halves = _simpson(fa0, flm, fm0, m - a0) + _simpson(fm0, frm, fb0, b0 - m)
        delta = halves - whole
        if math.isinf(halves):
            panels.append(Panel(a0, b0, halves, 0.0))
            continue
        if abs(delta) <= 15.0 * tol0 or abs(delta) <= ROUNDING_FLOOR * abs(halves):
            panels.append(Panel(a0, b0, halves + delta / 15.0, abs(delta) / 15.0))
            continue
        if depth >= max_depth:
            # panels this narrow only occur next to endpoint singularities such as sqrt(t) at 0
            panels.append(Panel(a0, b0, halves + delta / 15.0, abs(delta) / 15.0))
            continue
        if worst is None or abs(delta) > worst[2]:
            worst = (a0, b0, abs(delta))
        # splitting turns one panel into two
        if budget is not None and len(panels) + len(stack) + 2 > budget:
            raise QuadratureError(
                f"Adaptive quadrature did not converge on [{a!r}, {b!r}]: worst panel "
                f"[{worst[0]!r}, {worst[1]!r}] with estimated error {worst[2]:.3g}.",
                worst_panel=worst,
            )
        stack.append((m, b0, fm0, frm, fb0, _simpson(fm0, frm, fb0, b0 - m), tol0 / 2, depth + 1))
        stack.append((a0, m, fa0, flm, fm0, _simpson(fa0, flm, fm0, m - a0), tol0 / 2, depth + 1))
    value = math.fsum(p.value for p in panels)
    error = math.fsum(p.error for p in panels)
    return QuadratureResult(value, error, evaluations, panels)


def _simpson_weights(m: int) -> np.ndarray:
    weights = np.ones(m + 1)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    return weights / (3.0 * m)


def integrate_unit_panels(
    expr: FunctionExpr,
    start: int,
    stop: int,
    rtol: float = 1e-15,
    max_level: int = 16,
) -> np.ndarray:
    """Integrates an expression over every unit panel [k, k+1] for start <= k < stop.

    Each panel starts with composite Simpson on 2 and 4 subintervals; panels whose two estimates
    disagree are refined by doubling the subinterval count. Accepted values carry the Richardson
    correction.

    Raises:
        QuadratureError: Raises when a panel still disagrees after 2**max_level subintervals.
    """
    k = np.arange(start, stop, dtype=float)
    result = np.empty(k.shape)
    pending = np.arange(k.size)
    m = 2
    while pending.size:
        fine = 2 * m
        nodes = k[pending, None] + np.arange(fine + 1) / fine
        values = evaluate_array(expr, nodes)
        coarse_estimate = values[:, ::2] @ _simpson_weights(m)
        fine_estimate = values @ _simpson_weights(fine)
        delta = fine_estimate - coarse_estimate
        threshold = np.maximum(15.0 * rtol, ROUNDING_FLOOR) * np.abs(fine_estimate)
        accepted = (np.abs(delta) <= threshold) | np.isinf(fine_estimate)
        result[pending[accepted]] = fine_estimate[accepted] + delta[accepted] / 15.0
        pending = pending[~accepted]
        if pending.size and fine >= 2**max_level:
            worst = int(np.argmax(np.abs(delta[~accepted])))
            panel = float(k[pending[worst]])
            raise QuadratureError(
                f"Unit-panel quadrature of '{expr.source_text}' did not converge on [{panel!r}, {panel + 1!r}].",
                worst_panel=(panel, panel + 1, float(np.abs(delta[~accepted])[worst])),
            )
        m = fine
    return result
