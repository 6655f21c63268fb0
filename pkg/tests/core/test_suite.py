import os
import json

import pytest

from limitforge import Experiment, Suite
from limitforge.analysis.series import euler_mascheroni
from limitforge.exceptions import ConfigurationError


@pytest.fixture
def suite():
    suite = Suite()
    suite.add_experiment(name="sqrt_2n", family="first_order", f="t", n_max=10_000)
    suite.add_experiment(name="sqrt_2n_driven", family="driven", n_max=10_000)
    suite.add_experiment(name="quadratic", family="quadratic", stream="x", n_max=100_000)
    suite.add_experiment(name="gamma", kind="constant", which="gamma", n=1000)
    return suite


def test_add_experiment(suite: Suite) -> None:
    assert "sqrt_2n" in suite
    assert isinstance(suite["sqrt_2n"], Experiment)
    assert "missing" not in suite
    with pytest.raises(KeyError):
        suite["missing"]


def test_add_duplicate_experiment(suite: Suite) -> None:
    with pytest.raises(KeyError):
        suite.add_experiment(name="sqrt_2n", family="first_order", f="t^2", n_max=100)
    with pytest.raises(KeyError):
        suite.add_experiment(name="run", family="first_order", f="t", n_max=100)


def test_mapping_restrictions(suite: Suite) -> None:
    with pytest.raises(NotImplementedError):
        suite["sqrt_2n"] = suite["gamma"]
    with pytest.raises(NotImplementedError):
        iter(suite)
    with pytest.raises(TypeError):
        len(suite)


def test_list_experiments(suite: Suite) -> None:
    assert [name for name, _ in suite.experiments()] == [
        "gamma",
        "quadratic",
        "sqrt_2n",
        "sqrt_2n_driven",
    ]


def test_remove_experiments(suite: Suite) -> None:
    suite.remove_experiments("gamma")
    assert "gamma" not in suite
    suite.remove_experiments("^sqrt", regex=True)
    assert [name for name, _ in suite.experiments()] == ["quadratic"]
    with pytest.raises(KeyError):
        suite.remove_experiments(["gamma"])


def test_keep_experiments(suite: Suite) -> None:
    suite.keep_experiments(["gamma", "quadratic"])
    assert [name for name, _ in suite.experiments()] == ["gamma", "quadratic"]
    suite.keep_experiments("quad", regex=True)
    assert "gamma" not in suite
    assert "quadratic" in suite


def test_filter_on_declaration_fields(suite: Suite) -> None:
    suite.keep_experiments("^(first_order|driven)$", regex=True, field="family")
    assert [name for name, _ in suite.experiments()] == ["sqrt_2n", "sqrt_2n_driven"]
    suite.remove_experiments("driven", regex=True, field="family")
    assert [name for name, _ in suite.experiments()] == ["sqrt_2n"]
    with pytest.raises(AssertionError):
        suite.keep_experiments("t", regex=True, field="colour")
    with pytest.raises(AssertionError):
        suite.keep_experiments("first_order", field="family")


def test_filter_on_kind(suite: Suite) -> None:
    suite.remove_experiments("^constant$", regex=True, field="kind")
    assert "gamma" not in suite
    assert "quadratic" in suite


def test_run_writes_outputs_and_manifest(suite: Suite, tmp_path) -> None:
    manifest = suite.run(out_dir=str(tmp_path))
    assert manifest.exit_code == 0
    assert [s.name for s in manifest.experiments] == ["gamma", "quadratic", "sqrt_2n", "sqrt_2n_driven"]
    assert sorted(os.listdir(tmp_path)) == [
        "gamma.csv",
        "manifest.json",
        "quadratic.csv",
        "sqrt_2n.csv",
        "sqrt_2n_driven.csv",
    ]
    with open(tmp_path / "manifest.json") as f:
        written = json.load(f)
    assert written["config_digest"] == suite.digest()
    assert written["tool_version"] == "0.1.0"
    assert [e["status"] for e in written["experiments"]] == ["pass"] * 4


def test_parallel_run_matches_serial(suite: Suite) -> None:
    serial = suite.run()
    parallel = suite.run(jobs=2)
    for a, b in zip(serial.experiments, parallel.experiments):
        assert (a.name, a.status, a.final_ratio, a.value) == (b.name, b.status, b.final_ratio, b.value)


def test_overrides(suite: Suite) -> None:
    manifest = suite.run(overrides={"tolerance": 1e-12})
    assert manifest.exit_code == 1
    # n_max maps to n for constants
    manifest = suite.run(overrides={"n_max": 100})
    gamma = next(s for s in manifest.experiments if s.name == "gamma")
    assert gamma.value == euler_mascheroni(100).value
    with pytest.raises(ConfigurationError):
        suite.run(overrides={"schedule": "weekly"})


def test_errors_set_exit_code() -> None:
    suite = Suite()
    suite.add_experiment(name="shifted", family="first_order", f="t + 1", n_max=100)
    manifest = suite.run()
    assert manifest.experiments[0].status == "error"
    assert manifest.exit_code == 2


def test_from_config() -> None:
    config = {
        "defaults": {"n_max": 1000},
        "experiments": [
            {"name": "sqrt_2n", "family": "first_order", "f": "t"},
            {"name": "cube_root", "family": "first_order", "f": "t^2", "tolerance": 1e-2},
        ],
    }
    suite = Suite.from_config(config)
    assert [name for name, _ in suite.experiments()] == ["cube_root", "sqrt_2n"]
    assert suite["cube_root"].config.n_max == 1000
    assert suite.digest() == Suite.from_config(json.dumps(config)).digest()
    assert len(Suite().digest()) == 64


@pytest.mark.slow
def test_bundled_suite_subset(tmp_path) -> None:
    suite = Suite.from_config("claims")
    suite.keep_experiments(
        ["sqrt_2n", "alternating_harmonic", "coupled_limits_asymmetric", "quadratic_second_term"]
    )
    manifest = suite.run(out_dir=str(tmp_path), jobs=2)
    assert manifest.exit_code == 0, manifest.experiments
