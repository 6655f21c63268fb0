import math
import logging
from typing import Iterable, List, Sequence

import numpy as np

from .quadrature import adaptive_simpson, integrate_unit_panels
from ..engine.accumulators import CompensatedSum, chunked_fsum
from ..parsers.funcdsl import check_hypotheses, evaluate, evaluate_array, rescale
from ..schemas.expressions import FunctionExpr
from ..schemas.recurrences import Schedule
from ..schemas.reports import (
    AuditReport,
    ConstantEstimate,
    DefectSequence,
    InequalityCheck,
    SeriesResult,
)
from ..exceptions import ConfigurationError, HypothesisViolation

logger = logging.getLogger(__name__)

CHUNK = 1 << 16
BRIDGE_TOLERANCE = 1e-12


def _chunks(start: int, stop: int) -> Iterable[np.ndarray]:
    for lo in range(start, stop, CHUNK):
        yield np.arange(lo, min(lo + CHUNK, stop), dtype=float)


def _defects(expr: FunctionExpr, checkpoints: Sequence[int]) -> List[float]:
    """Sum of f(1..n) minus the integral of f on [1, n], at each checkpoint n.

    The integral is taken panel by panel, so the running quantity is f(n) plus the compensated sum of
    f(k) - integral over [k, k+1] for k < n.
    """
    results: List[float] = []
    running = CompensatedSum()
    pending = sorted(checkpoints)
    i, n_max = 0, pending[-1]
    for k in _chunks(1, n_max):
        start, stop = int(k[0]), int(k[-1]) + 1
        terms = evaluate_array(expr, k) - integrate_unit_panels(expr, start, stop)
        # checkpoints n in (start, stop] only need terms k < n of this chunk
        while i < len(pending) and pending[i] <= stop:
            n = pending[i]
            partial = CompensatedSum(running)
            partial.add_array(terms[: max(n - start, 0)])
            results.append(partial.value + evaluate(expr, float(n)))
            i += 1
        running.add_array(terms)
    while i < len(pending):
        # only reached for n == 1
        results.append(running.value + evaluate(expr, float(pending[i])))
        i += 1
    return results


def _require_positive(f: FunctionExpr, n: int) -> None:
    verdict = check_hypotheses(f, 1.0, max(2.0, float(n)), 32)
    if not verdict.positive_on_samples:
        raise HypothesisViolation(
            f"'{f.source_text}' must be positive on (1, {max(2, n)}]."
        )


def defect(f: FunctionExpr, n: int) -> float:
    """Returns f(1) + ... + f(n) minus the integral of f over [1, n].

    Examples:
        $ defect(parse("1/t"), 10)
        0.6263831609742...
    """
    if n < 1:
        raise ConfigurationError(f"defect needs n >= 1, got n={n}.")
    _require_positive(f, n)
    return _defects(f, [int(n)])[0]


def defect_sequence(f: FunctionExpr, checkpoints: Sequence[int]) -> DefectSequence:
    """Defects A_n of f and B_n of t -> f(2t) at each checkpoint."""
    checkpoints = sorted({int(n) for n in checkpoints})
    if not checkpoints or checkpoints[0] < 1:
        raise ConfigurationError("Defect checkpoints must be integers >= 1.")
    _require_positive(f, 2 * checkpoints[-1])
    return DefectSequence(
        expression=f.source_text,
        checkpoints=checkpoints,
        defects=_defects(f, checkpoints),
        doubled_defects=_defects(rescale(f, 2.0), checkpoints),
    )


# %% Constants
def harmonic(n: int) -> float:
    return chunked_fsum(1.0 / k for k in _chunks(1, n + 1))


def euler_mascheroni(n: int) -> ConstantEstimate:
    """Euler-Mascheroni estimate H_n - ln n - 1/(2n), with error bound 1/(8n^2).

    Raises:
        ConfigurationError: Raises when n < 2.
    """
    if n < 2:
        raise ConfigurationError(f"euler_mascheroni needs n >= 2, got n={n}.")
    value = harmonic(n) - math.log(n) - 0.5 / n
    return ConstantEstimate(
        name="euler_mascheroni", value=value, n=n, error_bound=1.0 / (8.0 * n * n)
    )


def stieltjes(alpha: int, n: int) -> ConstantEstimate:
    """
    Raw Stieltjes defect: sum of ln^alpha k / k for k <= n, minus ln^(alpha+1) n/(alpha+1).
    No acceleration is applied.
    """
    if alpha < 0 or int(alpha) != alpha:
        raise ConfigurationError(f"Stieltjes index must be a non-negative integer, got {alpha}.")
    if n < 1:
        raise ConfigurationError(f"stieltjes needs n >= 1, got n={n}.")
    alpha = int(alpha)
    total = chunked_fsum(np.log(k) ** alpha / k for k in _chunks(1, n + 1))
    value = total - math.log(n) ** (alpha + 1) / (alpha + 1)
    return ConstantEstimate(name=f"stieltjes_{alpha}", value=value, n=n)


# %% Alternating series
def _check_alternating(f: FunctionExpr, n: int) -> None:
    hi = max(2.0 * n, 1e4)
    verdict = check_hypotheses(f, 1.0, hi, 200)
    if not verdict.positive_on_samples:
        raise HypothesisViolation(f"'{f.source_text}' must be positive on (1, {hi:g}].")
    if verdict.non_increasing_from is None:
        raise HypothesisViolation(
            f"'{f.source_text}' is not eventually non-increasing on [1, {hi:g}]."
        )
    if not evaluate(f, hi) <= 0.5 * evaluate(f, verdict.non_increasing_from):
        raise HypothesisViolation(
            f"'{f.source_text}' does not visibly decay to 0 on [1, {hi:g}]."
        )


def alternating_partial_sum(f: FunctionExpr, terms: int) -> float:
    """f(1) - f(2) + f(3) - ... over the first `terms` terms."""
    signs = lambda k: np.where(k % 2 == 1.0, 1.0, -1.0)  # noqa: E731
    return chunked_fsum(signs(k) * evaluate_array(f, k) for k in _chunks(1, terms + 1))


def sum_alternating(
    f: FunctionExpr, n: int, tol: float = BRIDGE_TOLERANCE
) -> SeriesResult:
    """Sums f(1) - f(2) + f(3) - ... as L + integral of f over [1, 2], with L estimated by A_{2n} - 2B_n.

    A_n is the defect of f and B_n the defect of t -> f(2t). The estimate equals the direct partial sum
    over 2n terms up to rounding and quadrature error, which is reported as `identity_residual`.

    Args:
        f (FunctionExpr): Positive, eventually non-increasing function tending to 0.
        n (int): Half the number of terms used.
        tol (float, optional): Tolerance of the bridge integral. Defaults to 1e-12.

    Raises:
        HypothesisViolation: Raises when f is not positive, not eventually non-increasing, or not decaying.

    Returns:
        SeriesResult: Sum estimate with its components.
    """
    if n < 1:
        raise ConfigurationError(f"sum_alternating needs n >= 1, got n={n}.")
    _check_alternating(f, n)
    sequence = defect_sequence(f, [n, 2 * n])
    a_n, a_2n = sequence.defects
    b_n = sequence.doubled_defects[0]
    limit = a_2n - 2.0 * b_n
    bridge = adaptive_simpson(f, 1.0, 2.0, tol=tol).value
    direct = alternating_partial_sum(f, 2 * n)
    estimate = limit + bridge
    residual = abs(estimate - direct)
    logger.info(
        "Alternating sum of '%s' with n=%d: %.17g (identity residual %.3g)",
        f.source_text,
        n,
        estimate,
        residual,
    )
    return SeriesResult(
        estimated_sum=estimate,
        L_estimate=limit,
        bridge_integral=bridge,
        n_used=n,
        error_estimate=abs(evaluate(f, 2.0 * n)) + tol,
        identity_residual=residual,
        L_companion=a_n - 2.0 * b_n,
        direct_partial_sum=direct,
        expression=f.source_text,
    )


def integral_test_bounds(f: FunctionExpr, n: int) -> AuditReport:
    """
    Checks the integral test sandwich, integral of f on [1, m+1] <= f(1) + ... + f(m) <= f(1) + integral
    on [1, m], at geometric checkpoints m <= n. Requires f positive and non-increasing on [1, n+1].
    """
    verdict = check_hypotheses(f, 1.0, n + 1.0, 64)
    if not verdict.positive_on_samples or verdict.non_increasing_from != verdict.grid[0]:
        raise HypothesisViolation(
            f"'{f.source_text}' must be positive and non-increasing on [1, {n + 1}]."
        )
    checkpoints = Schedule().checkpoints(n)
    defects = _defects(f, checkpoints)
    last_panels = [float(integrate_unit_panels(f, m, m + 1)[0]) for m in checkpoints]
    f1 = evaluate(f, 1.0)
    checks = []
    # sum minus the lower integral is A_m - P_m; upper bound minus the sum is f(1) - A_m
    for name, slacks in (
        ("integral on [1, m+1] <= partial sum", [d - p for d, p in zip(defects, last_panels)]),
        ("partial sum <= f(1) + integral on [1, m]", [f1 - d for d in defects]),
    ):
        violations = [m for m, s in zip(checkpoints, slacks) if s < -1e-12]
        checks.append(
            InequalityCheck(
                name=name,
                passed=not violations,
                checked=len(slacks),
                min_slack=min(slacks),
                first_violation=violations[0] if violations else None,
            )
        )
    return AuditReport(
        family="series", passed=all(c.passed for c in checks), checks=checks
    )
