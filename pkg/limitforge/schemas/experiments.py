from dataclasses import dataclass, field, fields
from typing import List, Optional

from .reports import ReportABC

EXPERIMENT_KINDS = ("trajectory", "series", "constant", "classify", "tauberian", "cross_ratio")
LAW_SELECTORS = ("catalog", "closed_form", "predict", "second_term")
AUDITS = ("inequality", "identity", "both")
OUTPUT_FORMATS = ("csv", "json")
CONSTANTS = ("gamma", "stieltjes")


# Experiment declaration
@dataclass
class ExperimentConfig(ReportABC):
    name: str
    kind: str = "trajectory"
    family: Optional[str] = None
    f: Optional[str] = None
    g: Optional[str] = None
    a1: Optional[float] = None
    b1: Optional[float] = None
    x1: Optional[float] = None
    p: Optional[int] = None
    q: Optional[int] = None
    driver: Optional[str] = None
    n_max: Optional[int] = None
    schedule: str = "geometric"
    law: str = "catalog"
    stream: str = "a"
    law_c: Optional[float] = None
    law_e: Optional[float] = None
    law_l: Optional[float] = None
    min_n: int = 3
    tolerance: float = 1e-3
    audit: Optional[str] = None
    expression: Optional[str] = None
    n: Optional[int] = None
    which: Optional[str] = None
    alpha: int = 0
    target: Optional[float] = None
    output: str = "csv"

    @classmethod
    def keys(cls) -> List[str]:
        return [f.name for f in fields(cls)]


# Run results
@dataclass
class ExperimentStatus(ReportABC):
    name: str
    kind: str
    status: str  # "pass", "fail" or "error"
    wall_time: float = 0.0
    final_ratio: Optional[float] = None
    trend: Optional[str] = None
    value: Optional[float] = None
    message: Optional[str] = None
    output_path: Optional[str] = None


@dataclass
class RunManifest(ReportABC):
    tool_version: str
    config_digest: str
    created_at: str
    experiments: List[ExperimentStatus] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        statuses = {e.status for e in self.experiments}
        if "error" in statuses:
            return 2
        return 1 if "fail" in statuses else 0
