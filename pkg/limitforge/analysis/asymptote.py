import os
import math
import bisect
import logging
import threading
import warnings
from typing import Dict, List, Optional, Tuple

from .quadrature import adaptive_simpson
from .roots import newton_bisect
from ..engine.accumulators import CompensatedSum
from ..parsers.funcdsl import check_hypotheses, power_law, reciprocal
from ..schemas.expressions import Call, FunctionExpr, Var
from ..schemas.laws import ClosedForm, GrowthLaw, NumericLaw, SecondTerm
from ..schemas.recurrences import (
    Coupled,
    CumulativeSecondOrder,
    DrivenSqrt,
    FirstOrderInverse,
    QuadraticMap,
    RecurrenceSpec,
    TauberianGenerator,
    Trajectory,
    describe,
)
from ..schemas.reports import AuditReport, InequalityCheck
from ..exceptions import (
    ConfigurationError,
    DivergenceWarning,
    FamilyMismatchError,
    HypothesisViolation,
    InversionError,
    NoCatalogEntry,
    QuadratureError,
)

logger = logging.getLogger(__name__)

DEFAULT_PANEL_BUDGET = 1_000_000
DEFAULT_TOLERANCE = 1e-10
BRACKET_LIMIT = 1e300


def default_panel_budget() -> int:
    """
    Panel budget for adaptive quadrature, overridable with the LIMITFORGE_PANEL_BUDGET environment variable.
    """
    raw = os.environ.get("LIMITFORGE_PANEL_BUDGET")
    if raw is None:
        return DEFAULT_PANEL_BUDGET
    try:
        budget = int(float(raw))
    except ValueError:
        raise ConfigurationError(
            f"LIMITFORGE_PANEL_BUDGET must be a positive integer, got '{raw}'."
        )
    if budget < 1:
        raise ConfigurationError(
            f"LIMITFORGE_PANEL_BUDGET must be a positive integer, got '{raw}'."
        )
    return budget


def _simpson(fa: float, fm: float, fb: float, h: float) -> float:
    return h / 6.0 * (fa + 4.0 * fm + fb)


class CumulativeIntegral:
    def __init__(
        self,
        integrand: FunctionExpr,
        base_point: float = 0.0,
        offset: float = 0.0,
        tolerance: float = DEFAULT_TOLERANCE,
        panel_budget: Optional[int] = None,
    ) -> None:
        """Cumulative integral x -> offset + integral of the integrand from base_point to x.

        The range is covered by a fixed lattice of breakpoints base_point + 2^k - 1. Each lattice panel is
        integrated once by adaptive Simpson and its accepted sub-panels are cached with their running
        values, so results never depend on the order of queries. Inside a sub-panel the value is a
        three-point Simpson estimate clamped between the cached values at the sub-panel ends, which keeps
        value(x) non-decreasing for positive integrands.

        Examples:
            $ F = CumulativeIntegral(parse("t"), base_point=0.0, offset=1.0)
            $ F.value(2.0)
            3.0
            $ F.inverse(9.0)
            4.0

        Attributes:
            integrand (FunctionExpr): Positive integrand.
            base_point (float): Lower integration limit.
            offset (float): Value at base_point.
            tolerance (float): Requested accuracy, absolute error <= tolerance*max(1, |value|).
            panel_budget (int, optional): Maximum number of integrand panels. Defaults to LIMITFORGE_PANEL_BUDGET or 1e6.
        """
        assert tolerance > 0, "Quadrature tolerance must be positive."
        self.integrand = integrand
        self.base_point = float(base_point)
        self.offset = float(offset)
        self.tolerance = tolerance
        self.panel_budget = panel_budget or default_panel_budget()
        self._lock = threading.Lock()
        self._breakpoints: List[float] = [self.base_point]
        self._partials: List[float] = [0.0]
        self._prefix = CompensatedSum()
        self._leaves: Dict[int, Tuple[List[float], List[float]]] = {}
        self._panels_used = 0

    def __repr__(self) -> str:
        return (
            f"CumulativeIntegral("
            f'integrand="{self.integrand.source_text}", '
            f"base_point={self.base_point!r}, "
            f"offset={self.offset!r}, "
            f"tolerance={self.tolerance!r}, "
            f"cached_panels={len(self._breakpoints) - 1})"
        )

    @property
    def breakpoints(self) -> List[Tuple[float, float]]:
        """Cached lattice breakpoints with their values."""
        with self._lock:
            return [(b, self.offset + p) for b, p in zip(self._breakpoints, self._partials)]

    def _lattice_point(self, k: int) -> float:
        return self.base_point + (2.0**k - 1.0)

    def _integrate_panel(self, k: int) -> float:
        a, b = self._breakpoints[k], self._lattice_point(k + 1)
        f = self.integrand
        estimate = abs(_simpson(f(a), f(0.5 * (a + b)), f(b), b - a))
        panel_tol = self.tolerance * max(estimate, 2.0 ** -(k + 1))
        remaining = self.panel_budget - self._panels_used
        if remaining <= 0:
            raise QuadratureError(
                f"Panel budget of {self.panel_budget} exhausted before integrating [{a!r}, {b!r}].",
                worst_panel=(a, b, math.inf),
            )
        result = adaptive_simpson(f, a, b, tol=panel_tol, budget=remaining)
        self._panels_used += len(result.panels)
        starts = [p.a for p in result.panels] + [b]
        running = CompensatedSum()
        cumulative = [0.0]
        for p in result.panels:
            running.add(p.value)
            cumulative.append(running.value)
        self._leaves[k] = (starts, cumulative)
        logger.debug(
            "Integrated '%s' on [%g, %g] with %d sub-panels",
            f.source_text,
            a,
            b,
            len(result.panels),
        )
        return running.value

    def _panel_index(self, x: float) -> int:
        """Returns k with b_k <= x < b_{k+1}, extending the lattice as needed. Caller holds the lock."""
        while self._lattice_point(len(self._breakpoints)) <= x:
            k = len(self._breakpoints) - 1
            if k in self._leaves:
                self._prefix.add(self._leaves[k][1][-1])
            else:
                self._prefix.add(self._integrate_panel(k))
            self._breakpoints.append(self._lattice_point(k + 1))
            self._partials.append(self._prefix.value)
        k = bisect.bisect_right(self._breakpoints, x) - 1
        if k not in self._leaves:
            # Lattice panel bracketing x is integrated but not yet appended
            self._integrate_panel(k)
        return k

    def value(self, x: float) -> float:
        """Returns offset + integral from base_point to x.

        Raises:
            InversionError: Raises when x is below base_point.
            QuadratureError: Raises when the panel budget is exhausted.
        """
        x = float(x)
        if x < self.base_point:
            raise InversionError(
                f"x={x!r} is below the base point {self.base_point!r} of the cumulative integral."
            )
        if x == self.base_point:
            return self.offset
        with self._lock:
            k = self._panel_index(x)
            starts, cumulative = self._leaves[k]
            low = self._partials[k]
            high = (
                self._partials[k + 1]
                if k + 1 < len(self._partials)
                else low + cumulative[-1]
            )
        j = bisect.bisect_right(starts, x) - 1
        u = starts[j]
        c_u = low + cumulative[j] if j > 0 else low
        c_v = high if j + 2 >= len(starts) else low + cumulative[j + 1]
        c_v = max(c_v, c_u)
        f = self.integrand
        partial = _simpson(f(u), f(0.5 * (u + x)), f(x), x - u)
        return self.offset + min(max(c_u + partial, c_u), c_v)

    __call__ = value

    def inverse(self, y: float) -> float:
        """Returns x with |value(x) - y| <= tolerance*max(1, |y|).

        The bracket is expanded geometrically from base_point, then refined by safeguarded Newton
        iteration with derivative given by the integrand.

        Raises:
            InversionError: Raises when y is below the range, or the bracket exceeds 1e300.
        """
        y = float(y)
        start = self.offset
        if y < start:
            raise InversionError(
                f"y={y!r} is below the range of the cumulative integral, which starts at {start!r}."
            )
        if y == start:
            return self.base_point
        lo, width = self.base_point, 1.0
        hi = self.base_point + width
        while self.value(hi) < y:
            lo = hi
            width *= 2.0
            hi = self.base_point + width
            if hi > BRACKET_LIMIT:
                raise InversionError(
                    f"Bracket expansion for y={y!r} exceeded {BRACKET_LIMIT:g}."
                )

        def residual(x: float) -> Tuple[float, float]:
            return self.value(x) - y, self.integrand(x)

        return newton_bisect(
            residual, lo, hi, ftol=self.tolerance * max(1.0, abs(y))
        )


def build_cumulative(
    f: FunctionExpr,
    base: float = 0.0,
    offset: float = 0.0,
    tol: float = DEFAULT_TOLERANCE,
) -> CumulativeIntegral:
    """Builds x -> offset + integral of f from base to x after checking positivity of f on samples.

    Raises:
        HypothesisViolation: Raises when f is not positive on sampled points above base.
    """
    assert tol > 0, "Quadrature tolerance must be positive."
    verdict = check_hypotheses(f, base, base + 1e6, 64)
    if not verdict.positive_on_samples:
        raise HypothesisViolation(
            f"Integrand '{f.source_text}' must be positive on ({base}, {base + 1e6}]."
        )
    return CumulativeIntegral(f, base_point=base, offset=offset, tolerance=tol)


def invert(F: CumulativeIntegral, y: float) -> float:
    """Returns F^{-1}(y). See CumulativeIntegral.inverse."""
    return F.inverse(y)


def _check_predict_hypotheses(f: FunctionExpr, g: Optional[FunctionExpr]) -> None:
    verdict = check_hypotheses(f, 0.0, 1e3, 64)
    if not (verdict.positive_on_samples and verdict.non_decreasing_on_samples):
        raise HypothesisViolation(
            f"f='{f.source_text}' must be positive and non-decreasing on (0, 1e3]."
        )
    if g is not None:
        verdict = check_hypotheses(g, 1.0, 1e6, 64)
        if not (verdict.positive_on_samples and g(1.0) > 0):
            raise HypothesisViolation(f"g='{g.source_text}' must be positive on [1, 1e6].")


def numeric_law(
    f: FunctionExpr,
    g: Optional[FunctionExpr] = None,
    tol: float = DEFAULT_TOLERANCE,
    stream: str = "a",
) -> NumericLaw:
    """Returns the growth law n -> F^{-1}(G(n)) with F(x) = 1 + integral of f on [0, x] and G(n) the integral of 1/g on [1, n]."""
    _check_predict_hypotheses(f, g)
    F = build_cumulative(f, 0.0, 1.0, tol)
    G = build_cumulative(reciprocal(g), 1.0, 0.0, tol) if g is not None else None
    description = f"F^-1(n), F(x) = 1 + int_0^x {f.source_text}"
    if g is not None:
        description = f"F^-1(G(n)), F(x) = 1 + int_0^x {f.source_text}, G(n) = int_1^n dt/({g.source_text})"
    return NumericLaw(F=F, G=G, description=description, stream=stream)


def predict(
    f: FunctionExpr,
    g: Optional[FunctionExpr] = None,
    n: float = 1.0,
    tol: float = DEFAULT_TOLERANCE,
) -> float:
    """Continuous-analogue prediction F^{-1}(G(n)), with G(n) = n when g is absent.

    Issues a DivergenceWarning when G(n) - G(n/2) < 1e-3 G(n), i.e. when the integral of 1/g has not
    visibly diverged at n.

    Args:
        f (FunctionExpr): Positive non-decreasing function of the sequence value.
        g (Optional[FunctionExpr], optional): Positive function of the index. Defaults to None.
        n (float, optional): Index at which to predict. Defaults to 1.0.
        tol (float, optional): Quadrature tolerance. Defaults to 1e-10.

    Raises:
        HypothesisViolation: Raises when f or g fail their sampled hypotheses.
        InversionError: Raises when G(n) is below F(0) = 1.

    Returns:
        float: The predicted value of a_n.
    """
    if n < 1:
        raise ConfigurationError(f"predict needs n >= 1, got n={n!r}.")
    law = numeric_law(f, g, tol)
    if law.G is not None and n >= 2:
        g_n = law.G.value(n)
        if g_n - law.G.value(n / 2) < 1e-3 * g_n:
            warnings.warn(
                f"The integral of 1/({g.source_text}) has not visibly diverged at n={n:g}.",
                DivergenceWarning,
            )
    y = float(n) if law.G is None else law.G.value(n)
    return law.F.inverse(y)


# %% Closed-form catalog
def _first_order_laws(spec: FirstOrderInverse) -> List[GrowthLaw]:
    f, g = spec.f, spec.g
    if isinstance(f.root, Call) and f.root.name == "exp" and isinstance(f.root.arg, Var):
        if g is None:
            return [ClosedForm(1.0, 0.0, 1.0, "ln n")]
        raise NoCatalogEntry(f"No closed form for f=exp(t) with g='{g.source_text}'.")
    f_power = power_law(f)
    g_power = (1.0, 0.0) if g is None else power_law(g)
    if f_power is None or g_power is None or f_power[1] < 0:
        raise NoCatalogEntry(f"No closed form for {describe(spec)}.")
    (c, alpha), (d, beta) = f_power, g_power
    if beta < 1:
        k = (alpha + 1.0) / (c * d * (1.0 - beta))
        e = (1.0 - beta) / (alpha + 1.0)
        return [
            ClosedForm(
                k ** (1.0 / (alpha + 1.0)),
                e,
                0.0,
                f"({k!r} n^{1.0 - beta!r})^(1/{alpha + 1.0!r})",
            )
        ]
    if beta == 1:
        k = (alpha + 1.0) / (c * d)
        return [
            ClosedForm(
                k ** (1.0 / (alpha + 1.0)),
                0.0,
                1.0 / (alpha + 1.0),
                f"({k!r} ln n)^(1/{alpha + 1.0!r})",
            )
        ]
    raise NoCatalogEntry(
        f"The integral of 1/g converges for g='{g.source_text}'; no growth law."
    )


def catalog(spec: RecurrenceSpec) -> List[GrowthLaw]:
    """Returns the closed-form growth laws known for a recurrence, one per stream.

    Streams are 'a' (or 'x'), 'b' for the coupled system and 'A' for running sums.

    Raises:
        NoCatalogEntry: Raises when the family or its functions have no known closed form.
    """
    if isinstance(spec, FirstOrderInverse):
        return _first_order_laws(spec)
    if isinstance(spec, CumulativeSecondOrder):
        return [
            ClosedForm(1.0 / 6.0, 2.0, 0.0, "n^2/6"),
            ClosedForm(1.0 / 18.0, 3.0, 0.0, "n^3/18", stream="A"),
        ]
    if isinstance(spec, TauberianGenerator):
        p, q = spec.p, spec.q
        r = q / p + 1.0
        # A_n^r/n -> r gives A_n ~ (r n)^(p/(p+q)); with a_n = A_n^(-1/p), a_n ~ (r n)^(-1/(p+q))
        return [
            ClosedForm(
                r ** (-1.0 / (p + q)),
                -1.0 / (p + q),
                0.0,
                f"({r!r} n)^(-1/{p + q}), from A_n^{r!r}/n -> {r!r} and a_n = A_n^(-1/{p})",
            ),
            ClosedForm(
                r ** (p / (p + q)),
                p / (p + q),
                0.0,
                f"({r!r} n)^({p}/{p + q})",
                stream="A",
            ),
        ]
    if isinstance(spec, Coupled):
        c = 3.0 ** (1.0 / 3.0)
        return [
            ClosedForm(c, 1.0 / 3.0, 0.0, "(3n)^(1/3)"),
            ClosedForm(c, 1.0 / 3.0, 0.0, "(3n)^(1/3)", stream="b"),
        ]
    if isinstance(spec, QuadraticMap):
        return [
            ClosedForm(1.0, -1.0, 0.0, "1/n", stream="x"),
            SecondTerm(refined=False),
            SecondTerm(refined=True),
        ]
    if isinstance(spec, DrivenSqrt):
        if spec.driver == "constant":
            return [ClosedForm(math.sqrt(2.0), 0.5, 0.0, "sqrt(2n)")]
        return [ClosedForm(1.0, 0.5, 0.0, "sqrt(n)")]
    raise NoCatalogEntry(f"No catalog entry for {spec!r}.")


def catalog_law(spec: RecurrenceSpec, stream: str = "a") -> GrowthLaw:
    """Returns the first catalog law for a stream."""
    aliases = {"a", "x"}
    for law in catalog(spec):
        if law.stream == stream or (stream in aliases and law.stream in aliases):
            return law
    raise NoCatalogEntry(f"No catalog law for stream '{stream}' of {describe(spec)}.")


# %% Proof bounds
def proof_bounds(traj: Trajectory, tol: float = DEFAULT_TOLERANCE) -> AuditReport:
    """Checks F^{-1}(n) <= a_n <= F^{-1}(n) + c at every checkpoint, c = a_1 + 1/f(a_1).

    Both bounds are compared through F, which is increasing: F(a_n) >= n and F(a_n - c) <= n.
    With g absent the upper constant a_1 + 1/g(1) becomes a_1 + 1; the first step 1/f(a_1) is used
    instead, which is the tighter bound whenever f(a_1) >= 1.

    Raises:
        FamilyMismatchError: Raises unless the trajectory comes from FirstOrderInverse with g absent.
    """
    spec = traj.spec
    if not isinstance(spec, FirstOrderInverse) or spec.g is not None:
        raise FamilyMismatchError(
            f"Proof bounds apply to FirstOrderInverse without g, got {describe(spec)}."
        )
    F = build_cumulative(spec.f, 0.0, 1.0, tol)
    c = spec.a1 + 1.0 / spec.f(spec.a1)
    lower, upper = [], []
    for n, a in zip(traj.checkpoints, traj.values):
        scale = max(1.0, float(n))
        lower.append((n, (F.value(a) - n) / scale))
        shifted = a - c
        upper.append((n, (n - F.value(shifted)) / scale if shifted > 0 else 1.0))
    checks = []
    for name, slacks in (("F^-1(n) <= a_n", lower), ("a_n <= F^-1(n) + c", upper)):
        violations = [n for n, s in slacks if s < -tol]
        checks.append(
            InequalityCheck(
                name=name,
                passed=not violations,
                checked=len(slacks),
                min_slack=min(s for _, s in slacks),
                first_violation=violations[0] if violations else None,
            )
        )
    return AuditReport(
        family=traj.family, passed=all(ch.passed for ch in checks), checks=checks
    )
