import math

import pytest

from limitforge.engine.recurrences import generate_tauberian, identity_audit, iterate, sin_squared
from limitforge.parsers.funcdsl import parse
from limitforge.schemas.recurrences import (
    Coupled,
    CumulativeSecondOrder,
    DrivenSqrt,
    FirstOrderInverse,
    QuadraticMap,
    Schedule,
    TauberianGenerator,
)
from limitforge.exceptions import (
    ConfigurationError,
    FamilyMismatchError,
    HypothesisViolation,
    InvalidRecurrenceSpec,
)


@pytest.fixture
def sqrt_spec():
    return FirstOrderInverse(f=parse("t"), a1=1.0)


# %% Schedules
@pytest.mark.parametrize(
    "text, n_max, expected",
    [
        ("geometric", 100, [1, 2, 5, 10, 20, 50, 100]),
        ("geometric", 7, [1, 2, 5, 7]),
        ("all", 4, [1, 2, 3, 4]),
        ("linear:3", 10, [1, 3, 6, 9, 10]),
        ("list:5,2", 10, [1, 2, 5, 10]),
        (None, 1, [1]),
    ],
)
def test_schedule_checkpoints(text, n_max, expected):
    assert Schedule.parse(text).checkpoints(n_max) == expected


@pytest.mark.parametrize("text", ["weekly", "linear:0", "list:", "list:0,4", "geometric:2"])
def test_invalid_schedules(text):
    with pytest.raises(ConfigurationError):
        Schedule.parse(text)


def test_schedule_text_and_bounds():
    assert str(Schedule.parse("linear:3")) == "linear:3"
    assert str(Schedule.parse("list:50,5")) == "list:5,50"
    assert Schedule.parse("list:50,5").last_point == 50
    with pytest.raises(ConfigurationError):
        Schedule.parse("list:50").checkpoints(10)
    with pytest.raises(ConfigurationError):
        Schedule().checkpoints(0)


# %% Specs
@pytest.mark.parametrize(
    "build",
    [
        lambda: FirstOrderInverse(f=parse("t"), a1=-1.0),
        lambda: FirstOrderInverse(f=parse("t"), a1=math.inf),
        lambda: CumulativeSecondOrder(a1=0.0),
        lambda: TauberianGenerator(p=0, q=2),
        lambda: TauberianGenerator(p=1.5, q=2),
        lambda: Coupled(a1=1.0, b1=-2.0),
        lambda: QuadraticMap(x1=1.5),
        lambda: DrivenSqrt(driver="cos2"),
    ],
)
def test_invalid_specs(build):
    with pytest.raises(InvalidRecurrenceSpec):
        build()


# %% Iteration
def test_first_order_small_values(sqrt_spec):
    traj = iterate(sqrt_spec, 3, "all")
    assert traj.checkpoints == [1, 2, 3]
    assert traj.values == [1.0, 2.0, 2.5]
    assert traj.successors == [2.0, 2.5, None]
    assert traj.family == "first_order"
    assert traj.n_max == 3


def test_generic_path_matches_identity_path(sqrt_spec):
    fast = iterate(sqrt_spec, 10_000)
    generic = iterate(FirstOrderInverse(f=parse("1*t"), a1=1.0), 10_000)
    assert generic.values == fast.values
    assert generic.checkpoints == fast.checkpoints


def test_first_order_requires_monotone_f():
    with pytest.raises(HypothesisViolation):
        iterate(FirstOrderInverse(f=parse("1/t")), 10)
    with pytest.raises(HypothesisViolation):
        iterate(FirstOrderInverse(f=parse("t"), g=parse("t - 5")), 10)


def test_overflow_truncates_trajectory():
    traj = iterate(FirstOrderInverse(f=parse("1e-301")), 100, "all")
    assert traj.terminated_at == 2
    assert traj.termination_reason == "overflow"
    assert traj.checkpoints == [1]
    assert traj.successors == [None]


def test_cumulative_running_sum():
    traj = iterate(CumulativeSecondOrder(a1=1.0), 3, "all")
    assert traj.values == [1.0, 2.0, 3.5]
    assert traj.aux_sums == [1.0, 3.0, 6.5]
    assert traj.stream("A") == traj.aux_sums


def test_coupled_symmetric_streams_are_identical():
    traj = iterate(Coupled(a1=1.0, b1=1.0), 100_000)
    assert traj.values == traj.second_values
    assert traj.stream("b") == traj.second_values
    assert traj.successors[0] == traj.second_successors[0] == 2.0


def test_quadratic_map():
    traj = iterate(QuadraticMap(x1=0.5), 3, "all")
    assert traj.values == [0.5, 0.25, 0.1875]
    assert traj.stream("x") == traj.values
    with pytest.raises(KeyError):
        traj.stream("b")


def test_driven_constant_matches_first_order(sqrt_spec):
    driven = iterate(DrivenSqrt(driver="constant"), 10_000)
    first_order = iterate(sqrt_spec, 10_000)
    assert driven.values == first_order.values
    # aux is the total drive received before n
    assert driven.aux_sums == [float(n - 1) for n in driven.checkpoints]


def test_driven_sin_squared():
    traj = iterate(DrivenSqrt(driver="sin2"), 3, "all")
    d1 = math.sin(1.0) ** 2
    assert traj.aux_sums[1] == pytest.approx(d1, rel=1e-15)
    assert traj.values[1] == pytest.approx(1.0 + d1, rel=1e-15)
    assert sin_squared(3) == pytest.approx(math.sin(3.0) ** 2, rel=1e-15)
    assert all(0.0 <= sin_squared(n) <= 1.0 for n in range(10**9, 10**9 + 100))


def test_trajectory_rows():
    rows = iterate(Coupled(a1=1.0, b1=2.0), 5).rows()
    assert [r["n"] for r in rows] == [1, 2, 5]
    assert rows[0] == {"n": 1, "value": 1.0, "second_value": 2.0}


# %% Tauberian generator
def test_tauberian_first_terms():
    traj = generate_tauberian(1, 2, 10, "all")
    assert traj.values[0] == 1.0
    # real root of a^3 + a - 1
    assert traj.values[1] == pytest.approx(0.6823278038280193, abs=1e-14)
    assert traj.aux_sums[0] == 1.0
    assert iterate(TauberianGenerator(p=1, q=2), 10, "all").values == traj.values


@pytest.mark.parametrize("p, q", [(1, 2), (2, 1), (2, 3)])
def test_tauberian_hypothesis_is_exact(p, q):
    traj = generate_tauberian(p, q, 2000, "all")
    for a, big_a in zip(traj.values, traj.aux_sums):
        assert abs(a**p * big_a - 1.0) <= 1e-12
    assert all(b <= a for a, b in zip(traj.values, traj.values[1:]))


def _power_sum_ratio(traj) -> float:
    """A_n^r/(r n) at the last checkpoint, r = q/p + 1."""
    r = traj.spec.q / traj.spec.p + 1.0
    return traj.aux_sums[-1] ** r / (r * traj.n_max)


@pytest.mark.parametrize("p, q", [(1, 2), (2, 1), (2, 3)])
def test_tauberian_power_sum_grows_linearly(p, q):
    assert _power_sum_ratio(generate_tauberian(p, q, 10_000)) == pytest.approx(1.0, abs=1e-2)


@pytest.mark.slow
@pytest.mark.parametrize("p, q", [(1, 2), (2, 1), (2, 3)])
def test_tauberian_power_sum_at_scale(p, q):
    traj = generate_tauberian(p, q, 1_000_000)
    assert _power_sum_ratio(traj) == pytest.approx(1.0, abs=1e-3)
    if (p, q) == (1, 2):
        assert abs((3.0 * traj.n_max) ** (1.0 / 3.0) * traj.values[-1] - 1.0) <= 1e-3


# %% Identity audits
def test_identity_audit_square_step(sqrt_spec):
    report = identity_audit(iterate(sqrt_spec, 100_000))
    assert report.passed
    assert report.max_discrepancy <= 1e-12
    assert report.checks[0].checked == len(Schedule().checkpoints(100_000)) - 1


def test_identity_audit_cubic_steps():
    report = identity_audit(iterate(CumulativeSecondOrder(), 100_000))
    assert report.passed
    assert len(report.checks) == 2
    assert identity_audit(iterate(DrivenSqrt(), 1000)).passed


def test_identity_audit_unknown_family():
    with pytest.raises(FamilyMismatchError):
        identity_audit(iterate(QuadraticMap(), 10))
    with pytest.raises(FamilyMismatchError):
        identity_audit(iterate(FirstOrderInverse(f=parse("t^2")), 10))
