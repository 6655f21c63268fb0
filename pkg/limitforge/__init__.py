__version__ = "0.1.0"

from .core.suite import Suite
from .core.experiment import Experiment
from .parsers.funcdsl import parse, evaluate
from .parsers.config import SuiteConfig
from .engine.recurrences import iterate, generate_tauberian, identity_audit
from .analysis.asymptote import build_cumulative, invert, predict, catalog, proof_bounds
from .analysis.series import (
    defect,
    defect_sequence,
    euler_mascheroni,
    stieltjes,
    sum_alternating,
    integral_test_bounds,
)
from .analysis.verify import (
    ratio_report,
    inequality_audit,
    classify_limits,
    abelian_average,
    tauberian_chain,
    cross_ratio,
)
