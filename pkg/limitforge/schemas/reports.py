from abc import ABC
from dataclasses import dataclass, field
from typing import List, Optional, Sequence
from dataclasses_json import dataclass_json


@dataclass_json
class ReportABC(ABC):
    ...

    def _to_dict(self):
        """
        Wrapper around to_dict() method to remove None values from the dictionary representation.
        """
        return {k: v for k, v in self.to_dict().items() if v is not None}

    def summarize(self, excluded_properties: Sequence[str] = ()) -> dict:
        """
        Flat record for command-line summaries: None values and the excluded properties are dropped.
        """
        excluded = set(excluded_properties)
        return {k: v for k, v in self._to_dict().items() if k not in excluded}


# Function hypotheses
@dataclass
class MonotonicityVerdict(ReportABC):
    positive_on_samples: bool
    non_increasing_from: Optional[float]
    non_decreasing_on_samples: bool
    samples_used: int
    lo: float
    hi: float
    grid: List[float] = field(default_factory=list, repr=False)


# Convergence against a growth law
@dataclass
class RateFit(ReportABC):
    theta: float
    model: str  # "power" or "logarithmic"
    rss: float


@dataclass
class ConvergenceReport(ReportABC):
    checkpoints: List[int]
    ratios: List[float]
    final_ratio: float
    trend: str  # "converging", "stalled" or "diverging"
    tolerance_used: float
    fitted_rate: Optional[RateFit] = None
    law: Optional[str] = None
    stream: Optional[str] = None
    values: Optional[List[float]] = field(default=None, repr=False)
    predictions: Optional[List[float]] = field(default=None, repr=False)

    @property
    def converged(self) -> bool:
        return self.trend == "converging"


# Inequality and identity audits
@dataclass
class InequalityCheck(ReportABC):
    name: str
    passed: bool
    checked: int
    min_slack: Optional[float] = None
    first_violation: Optional[int] = None


@dataclass
class AuditReport(ReportABC):
    family: str
    passed: bool
    checks: List[InequalityCheck] = field(default_factory=list)
    max_discrepancy: Optional[float] = None

    @property
    def first_violation(self) -> Optional[int]:
        violations = [c.first_violation for c in self.checks if not c.passed]
        return min(violations) if violations else None

    @property
    def min_slack(self) -> Optional[float]:
        slacks = [c.min_slack for c in self.checks if c.min_slack is not None]
        return min(slacks) if slacks else None


# Series and constants
@dataclass
class DefectSequence(ReportABC):
    expression: str
    checkpoints: List[int]
    # sum of f(k) minus the integral on [1, n], and the same for f(2t)
    defects: List[float]
    doubled_defects: List[float]


@dataclass
class ConstantEstimate(ReportABC):
    name: str
    value: float
    n: int
    error_bound: Optional[float] = None


@dataclass
class SeriesResult(ReportABC):
    estimated_sum: float
    L_estimate: float
    bridge_integral: float
    n_used: int
    error_estimate: float
    identity_residual: float
    L_companion: Optional[float] = None
    direct_partial_sum: Optional[float] = None
    expression: Optional[str] = None


# Coupled system classification
@dataclass
class StreamVerdict(ReportABC):
    stream: str
    verdict: str  # "diverging", "apparently finite" or "undetermined"
    last_value: float
    growth_exponent: Optional[float] = None
    limit_estimate: Optional[float] = None
    normalized_value: Optional[float] = None


@dataclass
class LimitClassification(ReportABC):
    verdicts: List[StreamVerdict]
    contradiction: bool = False
    heuristic: str = "finite if successive checkpoints agree to 1e-9 or 1/n-extrapolated limits agree to 1e-6"
    reciprocal_gap: Optional[float] = None
    # b_n/n against 1/a^2 and n(a - a_n) against a^4, both normalized to 1
    linear_growth_ratio: Optional[float] = None
    approach_ratio: Optional[float] = None

    def verdict(self, stream: str) -> StreamVerdict:
        for v in self.verdicts:
            if v.stream == stream:
                return v
        raise KeyError(f"Stream '{stream}' not found")
