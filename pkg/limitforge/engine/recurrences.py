import math
import logging
from typing import List, Optional, Union

from .accumulators import CompensatedSum
from ..analysis.roots import newton_bisect
from ..parsers.funcdsl import check_hypotheses
from ..schemas.recurrences import (
    Coupled,
    CumulativeSecondOrder,
    DrivenSqrt,
    FirstOrderInverse,
    QuadraticMap,
    RecurrenceSpec,
    Schedule,
    TauberianGenerator,
    Trajectory,
    describe,
)
from ..schemas.reports import AuditReport, InequalityCheck
from ..exceptions import (
    ExpressionDomainError,
    FamilyMismatchError,
    HypothesisViolation,
    RootBracketError,
)

logger = logging.getLogger(__name__)

OVERFLOW_THRESHOLD = 1e300
TWO_PI = 2.0 * math.pi
TAUBERIAN_RTOL = 1e-14


class _Recorder:
    """Collects checkpoint samples during a single iteration pass."""

    def __init__(self, checkpoints: List[int], streams: int = 1, aux: bool = False):
        self.checkpoints = checkpoints
        self.recorded: List[int] = []
        self.values: List[float] = []
        self.second_values: Optional[List[float]] = [] if streams == 2 else None
        self.aux_sums: Optional[List[float]] = [] if aux else None
        self.successors: List[Optional[float]] = []
        self.second_successors: Optional[List[Optional[float]]] = (
            [] if streams == 2 else None
        )
        self._i = 0
        self.next = checkpoints[0]
        self.terminated_at: Optional[int] = None
        self.reason: Optional[str] = None

    def record(self, n, value, successor, aux=None, second=None, second_successor=None):
        self.recorded.append(n)
        self.values.append(value)
        self.successors.append(successor)
        if self.aux_sums is not None:
            self.aux_sums.append(aux)
        if self.second_values is not None:
            self.second_values.append(second)
            self.second_successors.append(second_successor)
        self._i += 1
        self.next = self.checkpoints[self._i] if self._i < len(self.checkpoints) else 0

    def terminate(self, n: int, reason: str) -> None:
        self.terminated_at = n
        self.reason = reason
        logger.warning("Iteration terminated at n=%d: %s", n, reason)

    def trajectory(self, spec: RecurrenceSpec) -> Trajectory:
        return Trajectory(
            spec=spec,
            checkpoints=self.recorded,
            values=self.values,
            aux_sums=self.aux_sums,
            second_values=self.second_values,
            successors=self.successors,
            second_successors=self.second_successors,
            terminated_at=self.terminated_at,
            termination_reason=self.reason,
        )


def _overflowed(*values: float) -> bool:
    return any(not abs(v) <= OVERFLOW_THRESHOLD for v in values)


# %% One tight loop per family
def _iterate_first_order(spec: FirstOrderInverse, n_max: int, rec: _Recorder) -> None:
    f, g = spec.f, spec.g
    identity = f.is_identity and g is None
    a = float(spec.a1)
    for n in range(1, n_max):
        try:
            if identity:
                nxt = a + 1.0 / a
            elif g is None:
                nxt = a + 1.0 / f(a)
            else:
                nxt = a + 1.0 / (f(a) * g(float(n)))
        except ZeroDivisionError:
            raise ExpressionDomainError(
                f"Step denominator f(a_n)*g(n) vanished at n={n}, a_n={a!r}.", t=a
            )
        if n == rec.next:
            rec.record(n, a, nxt if not _overflowed(nxt) else None)
        if _overflowed(nxt):
            rec.terminate(n + 1, "overflow")
            return
        a = nxt
    rec.record(n_max, a, None)


def _iterate_cumulative(spec: CumulativeSecondOrder, n_max: int, rec: _Recorder) -> None:
    a = float(spec.a1)
    total = CompensatedSum(a)
    for n in range(1, n_max):
        running = total.value
        nxt = a + running / a
        if n == rec.next:
            rec.record(n, a, nxt if not _overflowed(nxt) else None, aux=running)
        if _overflowed(nxt):
            rec.terminate(n + 1, "overflow")
            return
        total.add(nxt)
        a = nxt
    rec.record(n_max, a, None, aux=total.value)


def _iterate_coupled(spec: Coupled, n_max: int, rec: _Recorder) -> None:
    a, b = float(spec.a1), float(spec.b1)
    for n in range(1, n_max):
        na = a + 1.0 / (b * b)
        nb = b + 1.0 / (a * a)
        if n == rec.next:
            ok = not _overflowed(na, nb)
            rec.record(
                n, a, na if ok else None, second=b, second_successor=nb if ok else None
            )
        if _overflowed(na, nb):
            rec.terminate(n + 1, "overflow")
            return
        a, b = na, nb
    rec.record(n_max, a, None, second=b, second_successor=None)


def _iterate_quadratic(spec: QuadraticMap, n_max: int, rec: _Recorder) -> None:
    x = float(spec.x1)
    for n in range(1, n_max):
        nxt = x - x * x
        if n == rec.next:
            rec.record(n, x, nxt)
        x = nxt
    rec.record(n_max, x, None)


def sin_squared(n: int) -> float:
    """sin^2 n with n reduced modulo 2*pi in double precision."""
    s = math.sin(math.fmod(float(n), TWO_PI))
    return s * s


def _iterate_driven(spec: DrivenSqrt, n_max: int, rec: _Recorder) -> None:
    # aux holds the total drive received so far, sum of d(k) for k < n
    a = float(spec.a1)
    drive = CompensatedSum()
    constant = spec.driver == "constant"
    for n in range(1, n_max):
        d = 1.0 if constant else sin_squared(n)
        nxt = a + 1.0 / a if constant else a + d / a
        if n == rec.next:
            rec.record(n, a, nxt if not _overflowed(nxt) else None, aux=drive.value)
        if _overflowed(nxt):
            rec.terminate(n + 1, "overflow")
            return
        drive.add(d)
        a = nxt
    rec.record(n_max, a, None, aux=drive.value)


def _check_first_order(spec: FirstOrderInverse) -> None:
    if not spec.f.is_identity:
        hi = spec.a1 + 1e4
        verdict = check_hypotheses(spec.f, spec.a1, hi, 64)
        if not (verdict.positive_on_samples and verdict.non_decreasing_on_samples):
            raise HypothesisViolation(
                f"f='{spec.f.source_text}' must be positive and non-decreasing on [{spec.a1}, {hi}]."
            )
    if spec.g is not None:
        verdict = check_hypotheses(spec.g, 1.0, 1e6, 64)
        if not (verdict.positive_on_samples and spec.g(1.0) > 0):
            raise HypothesisViolation(
                f"g='{spec.g.source_text}' must be positive on [1, 1e6]."
            )


def _checkpoint_list(
    n_max: int, checkpoint_schedule: Union[Schedule, str, List[int], None]
) -> List[int]:
    if isinstance(checkpoint_schedule, (list, tuple)):
        checkpoint_schedule = Schedule(kind="list", points=tuple(sorted(set(checkpoint_schedule))))
    return Schedule.parse(checkpoint_schedule).checkpoints(n_max)


def iterate(
    spec: RecurrenceSpec,
    n_max: int,
    checkpoint_schedule: Union[Schedule, str, List[int], None] = None,
) -> Trajectory:
    """Iterates a recurrence n_max - 1 times in a single deterministic pass.

    Values are recorded at the schedule's checkpoints together with the next value, so identities
    linking consecutive terms can be audited. Running sums use compensated accumulation.

    Args:
        spec (RecurrenceSpec): Recurrence family with its initial data.
        n_max (int): Last index to compute.
        checkpoint_schedule (Union[Schedule, str, List[int], None], optional): Checkpoint schedule. Defaults to geometric.

    Raises:
        HypothesisViolation: Raises when f is not positive and non-decreasing on sampled values.
        ExpressionDomainError: Propagated from f or g evaluation.

    Returns:
        Trajectory: Checkpointed samples. On overflow, truncated with `terminated_at` set.
    """
    n_max = int(n_max)
    checkpoints = _checkpoint_list(n_max, checkpoint_schedule)
    if isinstance(spec, TauberianGenerator):
        return generate_tauberian(spec.p, spec.q, n_max, checkpoints)
    logger.info("Iterating %s up to n=%d", describe(spec), n_max)
    if isinstance(spec, FirstOrderInverse):
        _check_first_order(spec)
        rec = _Recorder(checkpoints)
        _iterate_first_order(spec, n_max, rec)
    elif isinstance(spec, CumulativeSecondOrder):
        rec = _Recorder(checkpoints, aux=True)
        _iterate_cumulative(spec, n_max, rec)
    elif isinstance(spec, Coupled):
        rec = _Recorder(checkpoints, streams=2)
        _iterate_coupled(spec, n_max, rec)
    elif isinstance(spec, QuadraticMap):
        rec = _Recorder(checkpoints)
        _iterate_quadratic(spec, n_max, rec)
    elif isinstance(spec, DrivenSqrt):
        rec = _Recorder(checkpoints, aux=True)
        _iterate_driven(spec, n_max, rec)
    else:
        raise FamilyMismatchError(f"Unknown recurrence family {spec!r}")
    return rec.trajectory(spec)


def generate_tauberian(
    p: int,
    q: int,
    n_max: int,
    schedule: Union[Schedule, str, List[int], None] = None,
) -> Trajectory:
    """Generates a_n with a_n^p * A_n == 1 at every n, where A_n is the running sum of a_k^q.

    Each a_n is the positive root of h(a) = a^p (A_{n-1} + a^q) - 1 on [0, min(1, a_{n-1})], found by
    safeguarded Newton iteration from the right end of the bracket to relative tolerance 1e-14.

    Raises:
        RootBracketError: Raises when the bracket does not contain a root.
    """
    spec = TauberianGenerator(p=p, q=q)
    p, q = int(p), int(q)
    n_max = int(n_max)
    checkpoints = _checkpoint_list(n_max, schedule)
    logger.info("Generating %s up to n=%d", describe(spec), n_max)
    rec = _Recorder(checkpoints, aux=True)
    total = CompensatedSum()

    def solve(running: float, hi: float) -> float:
        def h(a: float):
            aq = a**q
            ap = a**p
            return ap * (running + aq) - 1.0, p * a ** (p - 1) * (running + aq) + q * ap * a ** (q - 1)

        try:
            return newton_bisect(h, 0.0, hi, x0=hi, xtol=TAUBERIAN_RTOL)
        except RootBracketError:
            if hi < 1.0:
                return newton_bisect(h, 0.0, 1.0, x0=1.0, xtol=TAUBERIAN_RTOL)
            raise

    a = solve(0.0, 1.0)
    for n in range(1, n_max + 1):
        total.add(a**q)
        running = total.value
        nxt = solve(running, min(1.0, a)) if n < n_max else None
        if n == rec.next:
            rec.record(n, a, nxt, aux=running)
        if nxt is None:
            break
        a = nxt
    return rec.trajectory(spec)


# %% Proof identities
def _relative_discrepancy(lhs: float, rhs: float, *operands: float) -> float:
    scale = max(abs(x) for x in (lhs, rhs) + operands)
    return abs(lhs - rhs) / scale if scale > 0 else 0.0


IDENTITY_THRESHOLD = 1e-12


def _identity_check(name: str, checkpoints, discrepancies, threshold=IDENTITY_THRESHOLD) -> InequalityCheck:
    violations = [n for n, d in zip(checkpoints, discrepancies) if d > threshold]
    return InequalityCheck(
        name=name,
        passed=not violations,
        checked=len(discrepancies),
        min_slack=threshold - max(discrepancies) if discrepancies else None,
        first_violation=violations[0] if violations else None,
    )


def identity_audit(traj: Trajectory) -> AuditReport:
    """Re-derives both sides of the family's exact step identity at every checkpoint.

    FirstOrderInverse(f=t) and DrivenSqrt with constant driver: a_{n+1}^2 - a_n^2 = 2 + 1/a_n^2.
    CumulativeSecondOrder: a_{n+1}^3 - a_n^3 = 3 a_n A_n + 3 A_n^2/a_n + A_n^3/a_n^3, and the
    equivalent a_{n+1}^3 - a_n^3 = 3 a_{n+1} A_n + A_n^3/a_n^3.

    Discrepancies are relative to the largest operand magnitude in the identity.

    Raises:
        FamilyMismatchError: Raises for any other family.
    """
    spec = traj.spec
    points = [
        (n, a, s, aux)
        for n, a, s, aux in zip(
            traj.checkpoints,
            traj.values,
            traj.successors,
            traj.aux_sums or [None] * len(traj.values),
        )
        if s is not None
    ]
    checkpoints = [n for n, _, _, _ in points]
    if (
        isinstance(spec, FirstOrderInverse) and spec.f.is_identity and spec.g is None
    ) or (isinstance(spec, DrivenSqrt) and spec.driver == "constant"):
        discrepancies = [
            _relative_discrepancy(s * s - a * a, 2.0 + 1.0 / (a * a), s * s, a * a)
            for _, a, s, _ in points
        ]
        checks = [_identity_check("square step identity", checkpoints, discrepancies)]
    elif isinstance(spec, CumulativeSecondOrder):
        first, second = [], []
        for _, a, s, big_a in points:
            lhs = s**3 - a**3
            terms = (3.0 * a * big_a, 3.0 * big_a**2 / a, big_a**3 / a**3)
            first.append(
                _relative_discrepancy(lhs, sum(terms), s**3, a**3, *terms)
            )
            terms = (3.0 * s * big_a, big_a**3 / a**3)
            second.append(
                _relative_discrepancy(lhs, sum(terms), s**3, a**3, *terms)
            )
        checks = [
            _identity_check("cubic step identity", checkpoints, first),
            _identity_check("cubic step identity (successor form)", checkpoints, second),
        ]
    else:
        raise FamilyMismatchError(
            f"No step identity is registered for {describe(spec)}."
        )
    max_discrepancy = max(
        (IDENTITY_THRESHOLD - c.min_slack for c in checks if c.min_slack is not None),
        default=0.0,
    )
    return AuditReport(
        family=traj.family,
        passed=all(c.passed for c in checks),
        checks=checks,
        max_discrepancy=max_discrepancy,
    )
