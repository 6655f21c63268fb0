import math
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .asymptote import proof_bounds
from ..engine.accumulators import CompensatedSum
from ..schemas.laws import GrowthLaw, SecondTerm
from ..schemas.recurrences import (
    Coupled,
    CumulativeSecondOrder,
    DrivenSqrt,
    FirstOrderInverse,
    QuadraticMap,
    TauberianGenerator,
    Trajectory,
    describe,
)
from ..schemas.reports import (
    AuditReport,
    ConvergenceReport,
    InequalityCheck,
    LimitClassification,
    RateFit,
    StreamVerdict,
)
from ..exceptions import (
    FamilyMismatchError,
    InsufficientCheckpointsError,
)

logger = logging.getLogger(__name__)

# |ratio - 1| below this is treated as exact agreement by the trend rule
NOISE_FLOOR = 1e-9
SLACK_TOLERANCE = 1e-12
FINITE_AGREEMENT = 1e-9
EXTRAPOLATED_AGREEMENT = 1e-6


# %% Ratio reports
def _trend(errors: Sequence[float], tolerance: float) -> str:
    last = [0.0 if e <= NOISE_FLOOR else e for e in errors[-3:]]
    if all(b <= a for a, b in zip(last, last[1:])) and last[-1] <= tolerance:
        return "converging"
    if all(b > a for a, b in zip(last, last[1:])) and last[-1] > tolerance:
        return "diverging"
    return "stalled"


def fit_rate(checkpoints: Sequence[int], errors: Sequence[float]) -> Optional[RateFit]:
    """Fits |ratio - 1| ~ C n^-theta and ~ C (ln n)^-theta by least squares in log space, keeping the smaller RSS."""
    points = [(n, e) for n, e in zip(checkpoints, errors) if e > 0 and n > 1]
    if len(points) < 2:
        return None
    n = np.array([p[0] for p in points], dtype=float)
    y = np.log([p[1] for p in points])
    fits = []
    for model, x in (("power", np.log(n)), ("logarithmic", np.log(np.log(n)))):
        coefficients = np.polyfit(x, y, 1)
        rss = float(np.sum((y - np.polyval(coefficients, x)) ** 2))
        fits.append(RateFit(theta=-float(coefficients[0]), model=model, rss=rss))
    return min(fits, key=lambda fit: fit.rss)


def ratio_report(
    traj: Trajectory, law: GrowthLaw, tolerance: float = 1e-3, min_n: int = 3
) -> ConvergenceReport:
    """Compares a trajectory stream with a growth law at every checkpoint n >= min_n.

    The ratio is value/law(n); for SecondTerm laws it is (1 - n x_n)/law(n). The trend is "converging"
    when |ratio - 1| does not increase over the last three checkpoints and ends within tolerance,
    "diverging" when it strictly increases and ends outside tolerance, and "stalled" otherwise.

    Args:
        traj (Trajectory): Trajectory carrying the law's stream.
        law (GrowthLaw): Growth law to compare against.
        tolerance (float, optional): Final tolerance on |ratio - 1|. Defaults to 1e-3.
        min_n (int, optional): Smallest checkpoint compared. Defaults to 3.

    Raises:
        FamilyMismatchError: Raises when the trajectory has no stream for the law.
        InsufficientCheckpointsError: Raises when fewer than 3 checkpoints are usable.
        LawEvaluationError: Propagated from the law.

    Returns:
        ConvergenceReport: Ratios, trend and fitted error rate.
    """
    try:
        values = traj.stream(law.stream)
    except KeyError as e:
        raise FamilyMismatchError(f"{describe(traj.spec)}: {e.args[0]}")
    points = [(n, v) for n, v in zip(traj.checkpoints, values) if n >= min_n]
    if len(points) < 3:
        raise InsufficientCheckpointsError(
            f"At least 3 checkpoints with n >= {min_n} are needed, got {len(points)}."
        )
    checkpoints = [n for n, _ in points]
    predictions = [law(n) for n in checkpoints]
    if isinstance(law, SecondTerm):
        observed = [law.observe(n, v) for n, v in points]
    else:
        observed = [v for _, v in points]
    ratios = [o / p for o, p in zip(observed, predictions)]
    errors = [abs(r - 1.0) for r in ratios]
    trend = _trend(errors, tolerance)
    logger.info(
        "Ratio against %s at n=%d: %.17g (%s)",
        law.label,
        checkpoints[-1],
        ratios[-1],
        trend,
    )
    return ConvergenceReport(
        checkpoints=checkpoints,
        ratios=ratios,
        final_ratio=ratios[-1],
        trend=trend,
        tolerance_used=tolerance,
        fitted_rate=fit_rate(checkpoints, errors),
        law=law.label,
        stream=law.stream,
        values=observed,
        predictions=predictions,
    )


def cross_ratio(
    traj_a: Trajectory,
    traj_b: Trajectory,
    expected: float = math.sqrt(2.0),
    tolerance: float = 1e-2,
    min_n: int = 3,
) -> ConvergenceReport:
    """Compares a_n/b_n of two trajectories on their common checkpoints against a constant."""
    b_values = dict(zip(traj_b.checkpoints, traj_b.values))
    points = [
        (n, a / b_values[n])
        for n, a in zip(traj_a.checkpoints, traj_a.values)
        if n >= min_n and n in b_values
    ]
    if len(points) < 3:
        raise InsufficientCheckpointsError(
            f"At least 3 common checkpoints with n >= {min_n} are needed, got {len(points)}."
        )
    checkpoints = [n for n, _ in points]
    ratios = [r / expected for _, r in points]
    errors = [abs(r - 1.0) for r in ratios]
    return ConvergenceReport(
        checkpoints=checkpoints,
        ratios=ratios,
        final_ratio=ratios[-1],
        trend=_trend(errors, tolerance),
        tolerance_used=tolerance,
        fitted_rate=fit_rate(checkpoints, errors),
        law=f"a_n/b_n -> {expected!r}",
        stream="a/b",
        values=[r for _, r in points],
    )


# %% Inequality audits
Slack = Tuple[int, float]


def _check(name: str, slacks: List[Slack]) -> InequalityCheck:
    violations = [n for n, s in slacks if s < -SLACK_TOLERANCE]
    return InequalityCheck(
        name=name,
        passed=not violations,
        checked=len(slacks),
        min_slack=min((s for _, s in slacks), default=None),
        first_violation=violations[0] if violations else None,
    )


def _relative(lhs: float, rhs: float) -> float:
    """Slack of lhs >= rhs relative to max(1, |rhs|)."""
    return (lhs - rhs) / max(1.0, abs(rhs))


def _with_successors(traj: Trajectory) -> List[Tuple[int, float, float, int]]:
    return [
        (n, a, s, i)
        for i, (n, a, s) in enumerate(zip(traj.checkpoints, traj.values, traj.successors))
        if s is not None
    ]


def _square_audit(traj: Trajectory, a1: float) -> List[InequalityCheck]:
    a2_squared = (a1 + 1.0 / a1) ** 2
    points = list(zip(traj.checkpoints, traj.values))
    lower = [(n, _relative(a * a, 2.0 * n)) for n, a in points if n >= 2]
    upper = [
        (m, _relative(a2_squared - 4.0 + 2.0 * m + 0.5 * math.log(m - 1), a * a))
        for m, a in points
        if m >= 3
    ]
    return [
        _check("a_n^2 >= 2n", lower),
        _check("a_m^2 <= a_2^2 - 4 + 2m + ln(m-1)/2", upper),
    ]


def _driven_audit(traj: Trajectory) -> List[InequalityCheck]:
    a1 = traj.spec.a1
    slacks = [
        (n, _relative(a * a, a1 * a1 + 2.0 * drive))
        for n, a, drive in zip(traj.checkpoints, traj.values, traj.aux_sums)
    ]
    return [_check("a_n^2 >= a_1^2 + 2 * total drive", slacks)]


def _cumulative_audit(traj: Trajectory) -> List[InequalityCheck]:
    a1 = traj.spec.a1
    points = list(zip(traj.checkpoints, traj.values, traj.aux_sums))
    linear = [(n, _relative(a, a1 + n - 1.0)) for n, a, _ in points]
    running = [(n, _relative(big_a, n * a1 + n * (n - 1) / 2.0)) for n, _, big_a in points]
    cubic = [
        (n, _relative(2.0 * s**3, 3.0 * traj.aux_sums[i] ** 2))
        for n, _, s, i in _with_successors(traj)
    ]
    return [
        _check("a_n >= a_1 + n - 1", linear),
        _check("A_n >= n a_1 + n(n-1)/2", running),
        _check("2 a_{n+1}^3 >= 3 A_n^2", cubic),
    ]


def _coupled_audit(traj: Trajectory) -> List[InequalityCheck]:
    slacks = []
    for n, _, s, i in _with_successors(traj):
        product = s * traj.second_successors[i]
        slacks.append((n, _relative(product**3, 9.0 * n * n)))
    return [_check("a_{n+1}^3 b_{n+1}^3 >= 9n^2", slacks)]


def _quadratic_audit(traj: Trajectory) -> List[InequalityCheck]:
    points = list(zip(traj.checkpoints, traj.values))
    return [
        _check("0 < x_n < 1", [(n, min(x, 1.0 - x)) for n, x in points]),
        _check("n x_n < 1", [(n, 1.0 - n * x) for n, x in points]),
    ]


def _tauberian_increments(
    traj: Trajectory,
) -> List[Tuple[int, float, float, float, float]]:
    """(n, A_n, A_{n+1}, a_{n+1}^q, A_{n+1}^r - A_n^r) at checkpoints with a successor."""
    p, q = traj.spec.p, traj.spec.q
    r = q / p + 1.0
    rows = []
    for n, _, s, i in _with_successors(traj):
        big_a = traj.aux_sums[i]
        step = s**q
        increment = big_a**r * math.expm1(r * math.log1p(step / big_a))
        rows.append((n, big_a, big_a + step, step, increment))
    return rows


def _tauberian_audit(traj: Trajectory) -> List[InequalityCheck]:
    p, q = traj.spec.p, traj.spec.q
    r = q / p + 1.0
    exact = [
        (n, -abs(a**p * big_a - 1.0))
        for n, a, big_a in zip(traj.checkpoints, traj.values, traj.aux_sums)
    ]
    lower, upper = [], []
    for n, big_a, next_a, step, increment in _tauberian_increments(traj):
        lower.append((n, (increment - r * big_a ** (q / p) * step) / increment))
        upper.append((n, (r * next_a ** (q / p) * step - increment) / increment))
    return [
        _check("a_n^p A_n == 1", exact),
        _check("r A_n^(q/p) a_{n+1}^q <= A_{n+1}^r - A_n^r", lower),
        _check("A_{n+1}^r - A_n^r <= r A_{n+1}^(q/p) a_{n+1}^q", upper),
    ]


def inequality_audit(traj: Trajectory) -> AuditReport:
    """Checks the inequalities registered for the trajectory's family at every checkpoint.

    Slacks are relative to max(1, |right-hand side|); a check fails when a slack is below -1e-12.

    FirstOrderInverse(f=t) and DrivenSqrt(constant): a_n^2 >= 2n and a_m^2 <= a_2^2 - 4 + 2m + ln(m-1)/2.
    Other FirstOrderInverse with g absent: the proof bounds on F^{-1}(n).
    DrivenSqrt: a_n^2 >= a_1^2 + 2 * total drive.
    CumulativeSecondOrder: a_n >= a_1 + n - 1, A_n >= n a_1 + n(n-1)/2, 2 a_{n+1}^3 >= 3 A_n^2.
    Coupled: a_{n+1}^3 b_{n+1}^3 >= 9n^2.
    QuadraticMap: 0 < x_n < 1 and n x_n < 1.
    TauberianGenerator: a_n^p A_n == 1 and the double inequality on A_{n+1}^r - A_n^r, r = q/p + 1.

    Raises:
        FamilyMismatchError: Raises when no inequality is registered for the family.

    Returns:
        AuditReport: Per-inequality results with first violation and minimum slack.
    """
    spec = traj.spec
    if isinstance(spec, FirstOrderInverse) and spec.g is None:
        if spec.f.is_identity:
            checks = _square_audit(traj, spec.a1)
        else:
            return proof_bounds(traj)
    elif isinstance(spec, DrivenSqrt):
        checks = _driven_audit(traj)
        if spec.driver == "constant":
            checks = _square_audit(traj, spec.a1) + checks
    elif isinstance(spec, CumulativeSecondOrder):
        checks = _cumulative_audit(traj)
    elif isinstance(spec, Coupled):
        checks = _coupled_audit(traj)
    elif isinstance(spec, QuadraticMap):
        checks = _quadratic_audit(traj)
    elif isinstance(spec, TauberianGenerator):
        checks = _tauberian_audit(traj)
    else:
        raise FamilyMismatchError(f"No inequality is registered for {describe(spec)}.")
    report = AuditReport(
        family=traj.family, passed=all(c.passed for c in checks), checks=checks
    )
    if not report.passed:
        logger.warning(
            "Inequality audit of %s failed first at n=%s",
            describe(spec),
            report.first_violation,
        )
    return report


# %% Cesaro means and the Tauberian chain
def abelian_average(values: Sequence[float]) -> List[float]:
    """Running means (v_1 + ... + v_n)/n with compensated summation."""
    assert len(values) > 0, "Cannot average an empty sequence."
    total = CompensatedSum()
    means = []
    for n, v in enumerate(values, start=1):
        total.add(v)
        means.append(total.value / n)
    return means


def tauberian_chain(traj: Trajectory, tolerance: float = 1e-3) -> ConvergenceReport:
    """Tests that A_{n+1}^r - A_n^r averages to r = q/p + 1 for a Tauberian trajectory.

    With every checkpoint recorded the running Cesaro means of the increments are compared with r;
    otherwise the telescoped mean (A_n^r - A_1^r)/(n - 1) is used at each checkpoint.

    Raises:
        FamilyMismatchError: Raises unless the trajectory comes from TauberianGenerator.
    """
    spec = traj.spec
    if not isinstance(spec, TauberianGenerator):
        raise FamilyMismatchError(
            f"The Tauberian chain applies to TauberianGenerator, got {describe(spec)}."
        )
    r = spec.q / spec.p + 1.0
    rows = _tauberian_increments(traj)
    contiguous = traj.checkpoints[: len(rows)] == list(range(1, len(rows) + 1))
    if contiguous and len(rows) >= 3:
        checkpoints = [n for n, *_ in rows]
        means = abelian_average([row[-1] for row in rows])
    else:
        first = traj.aux_sums[0] ** r
        points = [
            (n, (big_a**r - first) / (n - 1))
            for n, big_a in zip(traj.checkpoints, traj.aux_sums)
            if n > 1
        ]
        checkpoints = [n for n, _ in points]
        means = [m for _, m in points]
    if len(means) < 3:
        raise InsufficientCheckpointsError(
            f"At least 3 checkpoints are needed for the Tauberian chain, got {len(means)}."
        )
    ratios = [m / r for m in means]
    errors = [abs(x - 1.0) for x in ratios]
    return ConvergenceReport(
        checkpoints=checkpoints,
        ratios=ratios,
        final_ratio=ratios[-1],
        trend=_trend(errors, tolerance),
        tolerance_used=tolerance,
        fitted_rate=fit_rate(checkpoints, errors),
        law=f"mean of A_(n+1)^{r!r} - A_n^{r!r} -> {r!r}",
        stream="A",
        values=means,
    )


# %% Finite or infinite limits of the coupled system
def _local_exponent(checkpoints: Sequence[int], values: Sequence[float]) -> Optional[float]:
    if len(values) < 2 or values[-2] <= 0 or checkpoints[-1] == checkpoints[-2]:
        return None
    return math.log(values[-1] / values[-2]) / math.log(checkpoints[-1] / checkpoints[-2])


def _richardson_limit(n1: int, v1: float, n2: int, v2: float) -> float:
    """Eliminates a c/n term: the limit of v when v_n = L - c/n."""
    return (n2 * v2 - n1 * v1) / (n2 - n1)


def _classify_stream(
    name: str, checkpoints: Sequence[int], values: Sequence[float]
) -> StreamVerdict:
    last = values[-1]
    normalized = last / checkpoints[-1] ** (1.0 / 3.0)
    exponent = _local_exponent(checkpoints, values)
    if abs(values[-1] - values[-2]) <= FINITE_AGREEMENT * abs(values[-1]):
        return StreamVerdict(name, "apparently finite", last, exponent, last, normalized)
    limits = [
        _richardson_limit(checkpoints[i], values[i], checkpoints[i + 1], values[i + 1])
        for i in (-3, -2)
    ]
    if (
        exponent is not None
        and exponent < 0.02
        and abs(limits[1] - limits[0]) <= EXTRAPOLATED_AGREEMENT * abs(limits[1])
    ):
        return StreamVerdict(name, "apparently finite", last, exponent, limits[1], normalized)
    previous = _local_exponent(checkpoints[:-1], values[:-1])
    if (
        last > 10.0 * values[0]
        and exponent is not None
        and exponent >= 0.1
        and previous is not None
        and abs(exponent - previous) <= 0.5 * previous
    ):
        return StreamVerdict(name, "diverging", last, exponent, None, normalized)
    return StreamVerdict(name, "undetermined", last, exponent, None, normalized)


def classify_limits(traj: Trajectory) -> LimitClassification:
    """Classifies each stream of a coupled trajectory as diverging, apparently finite or undetermined.

    A stream is apparently finite when its last two checkpoint values agree to 1e-9 relatively, or when
    its local growth exponent is below 0.02 and 1/n-extrapolated limits agree to 1e-6. It is diverging
    when it exceeds 10 times its initial value with a stable local exponent of at least 0.1. When one
    stream has a finite limit a, the report includes b_n/n against 1/a^2 and n(a - a_n) against a^4.
    Both streams finite contradicts the conservation of 1/a - 1/b and is flagged.

    Raises:
        FamilyMismatchError: Raises unless the trajectory comes from Coupled.
        InsufficientCheckpointsError: Raises with fewer than 5 checkpoints.
    """
    if not isinstance(traj.spec, Coupled):
        raise FamilyMismatchError(
            f"Limit classification applies to Coupled, got {describe(traj.spec)}."
        )
    if len(traj.checkpoints) < 5:
        raise InsufficientCheckpointsError(
            f"At least 5 checkpoints are needed, got {len(traj.checkpoints)}."
        )
    streams = {"a": traj.values, "b": traj.second_values}
    verdicts = [_classify_stream(s, traj.checkpoints, v) for s, v in streams.items()]
    finite = [v for v in verdicts if v.verdict == "apparently finite"]
    n = traj.checkpoints[-1]
    classification = LimitClassification(
        verdicts=verdicts,
        contradiction=len(finite) == 2,
        reciprocal_gap=1.0 / traj.values[-1] - 1.0 / traj.second_values[-1],
    )
    if len(finite) == 1:
        limit = finite[0].limit_estimate
        own, other = (
            (traj.values, traj.second_values)
            if finite[0].stream == "a"
            else (traj.second_values, traj.values)
        )
        classification.linear_growth_ratio = (other[-1] / n) * limit**2
        classification.approach_ratio = n * (limit - own[-1]) / limit**4
    if classification.contradiction:
        logger.warning(
            "Both coupled streams look finite at n=%d; the reciprocal gap is %.3g",
            n,
            classification.reciprocal_gap,
        )
    return classification
