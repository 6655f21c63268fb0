import os
import json
import hashlib
import logging
from json.decoder import JSONDecodeError
from typing import List, Optional, Union

import yaml
from yaml import YAMLError

from .funcdsl import parse
from ..schemas.experiments import (
    AUDITS,
    CONSTANTS,
    EXPERIMENT_KINDS,
    LAW_SELECTORS,
    OUTPUT_FORMATS,
    ExperimentConfig,
)
from ..schemas.recurrences import FAMILIES, Schedule
from ..exceptions import ConfigurationError, InvalidConfigFormat, LimitForgeError

logger = logging.getLogger(__name__)

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "data")
INTEGER_KEYS = ("p", "q", "n_max", "min_n", "n", "alpha")
FLOAT_KEYS = ("a1", "b1", "x1", "law_c", "law_e", "law_l", "tolerance", "target")
REQUIRED_KEYS = {
    "trajectory": ("family", "n_max"),
    "series": ("expression", "n"),
    "constant": ("which", "n"),
    "classify": ("n_max",),
    "tauberian": ("n_max",),
    "cross_ratio": ("n_max",),
}


# %% Config document loaders
def config_dict_from_str(config_str: str) -> dict:
    try:
        config = json.loads(config_str)
    except JSONDecodeError:
        try:
            config = yaml.safe_load(config_str)
        except YAMLError:
            raise InvalidConfigFormat("The configuration must be a valid JSON or YAML.")
    if not isinstance(config, dict):
        raise InvalidConfigFormat(
            "The configuration must be a mapping with an 'experiments' list."
        )
    return config


def config_dict_from_file(config_file: str) -> dict:
    with open(config_file, "r") as f:
        config_dict = config_dict_from_str(f.read())
    return config_dict


def bundled_configs() -> List[str]:
    """Names of the configurations shipped with the package."""
    return sorted(
        os.path.splitext(f)[0] for f in os.listdir(DATA_DIR) if f.endswith(".yaml")
    )


def config_digest(config_dict: dict) -> str:
    """SHA-256 of the canonical JSON form of a parsed configuration."""
    canonical = json.dumps(config_dict, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# %% Experiment blocks
def _coerce_number(name: str, key: str, value, integer: bool):
    if value is None:
        return None
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"Experiment '{name}': '{key}' must be a number, got {value!r}.")
    if integer:
        if number != int(number):
            raise ConfigurationError(f"Experiment '{name}': '{key}' must be an integer, got {value!r}.")
        return int(number)
    return number


def _check_choice(name: str, key: str, value, choices) -> None:
    if value is not None and value not in choices:
        raise ConfigurationError(
            f"Experiment '{name}': '{key}' must be one of {choices}, got {value!r}."
        )


def validate_experiment(config: ExperimentConfig) -> ExperimentConfig:
    """Checks an experiment declaration for consistency.

    Raises:
        ConfigurationError: Raises naming the experiment on any inconsistency, including expression parse errors.
    """
    name = config.name
    _check_choice(name, "kind", config.kind, EXPERIMENT_KINDS)
    _check_choice(name, "family", config.family, tuple(FAMILIES))
    _check_choice(name, "law", config.law, LAW_SELECTORS)
    _check_choice(name, "audit", config.audit, AUDITS)
    _check_choice(name, "output", config.output, OUTPUT_FORMATS)
    _check_choice(name, "which", config.which, CONSTANTS)
    for key in REQUIRED_KEYS[config.kind]:
        if getattr(config, key) is None:
            raise ConfigurationError(f"Experiment '{name}': missing required key '{key}'.")
    if config.kind == "trajectory" and config.family == "first_order" and config.f is None:
        raise ConfigurationError(f"Experiment '{name}': family 'first_order' requires 'f'.")
    if config.law == "closed_form" and (config.law_c is None or config.law_e is None):
        raise ConfigurationError(
            f"Experiment '{name}': law 'closed_form' requires 'law_c' and 'law_e'."
        )
    if config.law == "predict" and config.family != "first_order":
        raise ConfigurationError(
            f"Experiment '{name}': law 'predict' applies to family 'first_order' only."
        )
    if config.tolerance <= 0:
        raise ConfigurationError(f"Experiment '{name}': 'tolerance' must be positive.")
    for key in ("f", "g", "expression"):
        text = getattr(config, key)
        if text is not None:
            try:
                parse(text)
            except LimitForgeError as e:
                raise ConfigurationError(f"Experiment '{name}': cannot parse {key}='{text}': {e}")
    if config.n_max is not None:
        try:
            schedule = Schedule.parse(config.schedule)
        except ConfigurationError as e:
            raise ConfigurationError(f"Experiment '{name}': {e}")
        if schedule.last_point is not None and schedule.last_point > config.n_max:
            raise ConfigurationError(
                f"Experiment '{name}': n_max={config.n_max} is below the last checkpoint {schedule.last_point}."
            )
    return config


def experiment_config_from_dict(block: dict, defaults: Optional[dict] = None) -> ExperimentConfig:
    """Builds a validated ExperimentConfig from a flat block merged over the suite defaults."""
    if not isinstance(block, dict):
        raise ConfigurationError(f"Each experiment must be a mapping, got {block!r}.")
    merged = {**(defaults or {}), **block}
    name = merged.get("name")
    if not name:
        raise ConfigurationError(f"Experiment without a 'name': {block!r}.")
    unknown = sorted(set(merged) - set(ExperimentConfig.keys()))
    if unknown:
        raise ConfigurationError(f"Experiment '{name}': unknown keys {unknown}.")
    for key in INTEGER_KEYS + FLOAT_KEYS:
        if key in merged:
            merged[key] = _coerce_number(name, key, merged[key], key in INTEGER_KEYS)
    for key in ("name", "f", "g", "expression", "schedule"):
        if merged.get(key) is not None:
            merged[key] = str(merged[key])
    return validate_experiment(ExperimentConfig(**merged))


# %% Suite configuration
class SuiteConfig:
    """Parser for experiment suite configurations."""

    def __init__(self, config: Union[str, dict]) -> None:
        """
        Instantiates a SuiteConfig from a dictionary, a JSON or YAML string, a file path, or the name of a
        bundled configuration such as 'claims'.
        """
        self.json = config
        defaults = self._json.get("defaults") or {}
        if not isinstance(defaults, dict):
            raise ConfigurationError("'defaults' must be a flat mapping.")
        blocks = self._json.get("experiments")
        if not isinstance(blocks, list) or not blocks:
            raise ConfigurationError("The configuration must list at least one experiment.")
        unknown = sorted(set(self._json) - {"defaults", "experiments"})
        if unknown:
            raise ConfigurationError(f"Unknown top-level keys {unknown}.")
        self.defaults = defaults
        self.experiments = [experiment_config_from_dict(b, defaults) for b in blocks]
        names = [e.name for e in self.experiments]
        duplicated = sorted({n for n in names if names.count(n) > 1})
        if duplicated:
            raise ConfigurationError(f"Duplicate experiment names {duplicated}.")
        logger.debug("Loaded %d experiments", len(self.experiments))

    @property
    def json(self) -> dict:
        return self._json

    @json.setter
    def json(self, config: Union[str, dict]):
        """Sets the configuration as a dictionary.

        Raises:
            InvalidConfigFormat: Raises on invalid input.
        """
        if isinstance(config, dict):
            self._json = config
        elif isinstance(config, str):
            bundled = os.path.join(DATA_DIR, f"{config}.yaml")
            if os.path.isfile(config):
                self._json = config_dict_from_file(config)
            elif os.path.isfile(bundled):
                self._json = config_dict_from_file(bundled)
            else:
                self._json = config_dict_from_str(config)
        else:
            raise InvalidConfigFormat(
                "The configuration must be either a dictionary or a valid JSON or YAML source."
            )

    @property
    def digest(self) -> str:
        return config_digest(self._json)

    def __repr__(self) -> str:
        return f"SuiteConfig(experiments={[e.name for e in self.experiments]})"
