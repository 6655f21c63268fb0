from __future__ import annotations

import os
import re
import inspect
import logging
import dataclasses
from datetime import datetime, timezone
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Tuple, Union

from .. import __version__
from ..core.experiment import Experiment
from ..parsers.config import SuiteConfig, config_digest, validate_experiment
from ..parsers.table_parser import write_atomic
from ..schemas.core import ABCSuite
from ..schemas.experiments import ExperimentConfig, ExperimentStatus, RunManifest

logger = logging.getLogger(__name__)

OVERRIDABLE = ("tolerance", "n_max", "schedule", "output")


def _apply_overrides(config: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    changes = {k: v for k, v in overrides.items() if v is not None}
    if "n_max" in changes and config.kind in ("series", "constant"):
        changes["n"] = changes.pop("n_max")
    elif "n_max" in changes and config.n_max is None:
        changes.pop("n_max")
    return validate_experiment(dataclasses.replace(config, **changes))


def _run_and_write(config: ExperimentConfig, out_dir: Optional[str]) -> ExperimentStatus:
    """Process-pool entry point: runs one experiment and writes its output."""
    experiment = Experiment(config)
    status = experiment.run()
    if out_dir is not None and status.status != "error":
        try:
            status.output_path = experiment.write(out_dir)
        except OSError as e:
            status.status = "error"
            status.message = f"{type(e).__name__}: {e}"
    return status


class Suite(ABCSuite):
    def __init__(self, config: Optional[Union[str, dict, SuiteConfig]] = None) -> None:
        """Suite collection to manage Experiments.

        Examples:
            A Suite can be built experiment by experiment with add_experiment().

                $ suite = Suite()
                $ suite.add_experiment(name="sqrt", family="first_order", f="t", n_max=100000)
                $ suite["sqrt"].run()

            A Suite can also be instantiated from a configuration, including the bundled 'claims'.

                $ suite = Suite.from_config("claims")
                $ manifest = suite.run(out_dir="results", jobs=4)

        Attributes:
            config (Union[str, dict, SuiteConfig], optional): Configuration the suite was loaded from. Defaults to None.

        Methods:
            experiments() -> List[Tuple[str, Experiment]]: List all Experiments of the Suite.
            add_experiment(config: Optional[ExperimentConfig] = None, **kwargs) -> None: Add an Experiment to the Suite.
            remove_experiments(experiments: Union[list, str], regex: bool = False, field: str = "name") -> None: Remove the specified Experiments.
            keep_experiments(experiments: Union[list, str], regex: bool = False, field: str = "name") -> None: Keep only the specified Experiments.
            run(out_dir: Optional[str] = None, jobs: int = 1, overrides: Optional[dict] = None) -> RunManifest: Run every Experiment.
            from_config(config: Union[str, dict, SuiteConfig]) -> "Suite": Create a Suite from a configuration.
        """
        if config is not None and not isinstance(config, SuiteConfig):
            config = SuiteConfig(config)
        self.config = config

    def __setitem__(self, key, value) -> None:
        """
        Overwritting __setitem__ to prevent manual assignment of experiments
        """
        raise NotImplementedError(
            "Manual assignment of experiments is not allowed. Please use the add_experiment() method to add an experiment."
        )

    def _match_experiments_from_regex(self, pattern: str, field: str = "name") -> List[str]:
        assert isinstance(pattern, str), "If 'regex' is True, 'experiments' must be a string."
        assert field in ExperimentConfig.keys(), f"Unknown experiment field '{field}'."
        matched = []
        for name, experiment in self.experiments():
            value = getattr(experiment.config, field)
            if value is not None and re.search(pattern, str(value)):
                matched.append(name)
        return matched

    def _selection(self, experiments: Union[list, str], regex: bool, field: str) -> List[str]:
        assert regex or field == "name", "Filtering on a field other than 'name' needs regex=True."
        if regex:
            return self._match_experiments_from_regex(experiments, field)
        return [experiments] if isinstance(experiments, str) else list(experiments)

    def experiments(self) -> List[Tuple[str, Experiment]]:
        """List all Experiments of the Suite, sorted by name.

        Returns:
            List[Tuple[str, Experiment]]: List of all Experiments of the Suite.
        """
        return inspect.getmembers(self, lambda a: isinstance(a, Experiment))

    def add_experiment(self, config: Optional[ExperimentConfig] = None, **kwargs) -> None:
        """Add an Experiment to the Suite.

        Args:
            config (Optional[ExperimentConfig], optional): Experiment declaration. Defaults to None, in which case the keyword arguments are used as a configuration block.

        Raises:
            ConfigurationError: Raises on an invalid declaration.
            KeyError: Raises when an experiment with the same name exists.
        """
        experiment = Experiment(config if config is not None else dict(kwargs))
        if experiment.name in self.__dict__ or hasattr(type(self), experiment.name):
            raise KeyError(f"Experiment '{experiment.name}' already exists")
        super().__setitem__(experiment.name, experiment)

    def remove_experiments(
        self, experiments: Union[list, str], regex: bool = False, field: str = "name"
    ) -> None:
        """
        Remove the specified experiments. If 'regex' is True, 'experiments' is a regular expression searched in
        the given declaration field, e.g. remove_experiments("^coupled$", regex=True, field="family").

        Args:
            experiments (Union[list, str]): List of experiment names, or a pattern.
            regex (bool, optional): Treat 'experiments' as a regular expression. Defaults to False.
            field (str, optional): Declaration field the pattern is matched against. Defaults to "name".
        """
        for name in self._selection(experiments, regex, field):
            del self[name]

    def keep_experiments(
        self, experiments: Union[list, str], regex: bool = False, field: str = "name"
    ) -> None:
        """
        Keep only the specified experiments. Patterns work as in remove_experiments(); experiments whose field
        is unset never match.

        Args:
            experiments (Union[list, str]): List of experiment names, or a pattern.
            regex (bool, optional): Treat 'experiments' as a regular expression. Defaults to False.
            field (str, optional): Declaration field the pattern is matched against. Defaults to "name".
        """
        kept = set(self._selection(experiments, regex, field))
        for name, _ in self.experiments():
            if name not in kept:
                del self[name]

    def digest(self) -> str:
        """SHA-256 of the configuration, or of the experiment declarations when built by hand."""
        if self.config is not None:
            return self.config.digest
        return config_digest(
            {"experiments": [e.config._to_dict() for _, e in self.experiments()]}
        )

    def run(
        self,
        out_dir: Optional[str] = None,
        jobs: int = 1,
        overrides: Optional[dict] = None,
    ) -> RunManifest:
        """Run every Experiment and write per-experiment outputs plus a manifest.

        Experiments are independent; with jobs > 1 they run in a process pool. Each output file and the
        manifest are written atomically, and results do not depend on scheduling order.

        Args:
            out_dir (Optional[str], optional): Output directory. Defaults to None (nothing written).
            jobs (int, optional): Number of worker processes. Defaults to 1.
            overrides (Optional[dict], optional): Values of tolerance, n_max, schedule or output applied to every experiment. Defaults to None.

        Raises:
            ConfigurationError: Raises when an override makes an experiment inconsistent.

        Returns:
            RunManifest: One status per experiment, in name order.
        """
        assert jobs >= 1, "The number of jobs must be at least 1."
        overrides = {k: v for k, v in (overrides or {}).items() if k in OVERRIDABLE}
        configs = [_apply_overrides(e.config, overrides) for _, e in self.experiments()]
        logger.info("Running %d experiments with %d jobs", len(configs), jobs)
        if jobs == 1 or len(configs) == 1:
            statuses = [_run_and_write(c, out_dir) for c in configs]
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                statuses = list(pool.map(_run_and_write, configs, [out_dir] * len(configs)))
        manifest = RunManifest(
            tool_version=__version__,
            config_digest=self.digest(),
            created_at=datetime.now(timezone.utc).isoformat(),
            experiments=statuses,
        )
        if out_dir is not None:
            write_atomic(os.path.join(out_dir, "manifest.json"), manifest.to_json(indent=2) + "\n")
        return manifest

    @classmethod
    def from_config(cls, config: Union[str, dict, SuiteConfig]) -> "Suite":
        """Instantiate a Suite from a configuration.

        Args:
            config (Union[str, dict, SuiteConfig]): Dictionary, JSON or YAML string, file path or bundled configuration name.

        Raises:
            InvalidConfigFormat: Raises when the configuration is not valid JSON or YAML.
            ConfigurationError: Raises on unknown keys, duplicate names or inconsistent experiments.

        Returns:
            Suite: A Suite holding one Experiment per configured block.
        """
        if not isinstance(config, SuiteConfig):
            config = SuiteConfig(config)
        suite = cls(config=config)
        for experiment_config in config.experiments:
            suite.add_experiment(experiment_config)
        return suite
