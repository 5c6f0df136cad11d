# mypy: disallow-untyped-defs
"""
Run configuration: built-in defaults, optionally overridden by a YAML file and then by
command-line flags.

Example of a configuration file:

    window_start: 2023-05-01
    locality: Rural
    k_range: 2..8
    seed: 7
    renormalize: no
"""

import os
from collections.abc import Callable
from datetime import date
from pathlib import Path
from typing import Any

import attr
import yaml

from meter_profiles.backfill import ScaleMode
from meter_profiles.backfill import VALIDATED_MISSING_MONTHS
from meter_profiles.ingest import AnalysisWindow
from meter_profiles.tariff import Locality


DOTENV_ENV_VAR = "METER_PROFILES_DOTENV"
CONFIG_ENV_VAR = "METER_PROFILES_CONFIG"
LOG_LEVEL_ENV_VAR = "METER_PROFILES_LOG_LEVEL"
DEFAULT_LOG_LEVEL = "WARNING"

DEFAULT_WINDOW_START = date(2023, 5, 1)


class UnknownConfigOption(RuntimeError):
    """
    Raised when parsing an unknown option.

    :ivar option_name:
        Name of the unknown option.
    """

    def __init__(self, option_name: str) -> None:
        self.option_name = option_name
        RuntimeError.__init__(
            self,
            f'Received unknown option "{option_name}".\n\nAvailable options are:\n'
            + "\n".join(f"- {o}" for o in sorted(PARSEABLE_OPTIONS)),
        )


class ConfigTypeError(TypeError):
    """
    Raised when an option is set to something other than a scalar.
    """

    def __init__(self, option_name: str, obtained_type: type, option_value: Any) -> None:
        self.option_name = option_name
        self.obtained_type = obtained_type
        self.option_value = option_value
        TypeError.__init__(
            self,
            f'On option "{option_name}". Expected a scalar but got "{obtained_type.__name__}". '
            f"Value:\n{option_value!r}",
        )


class ConfigValueError(ValueError):
    def __init__(self, option_name: str, option_value: Any, reason: str) -> None:
        self.option_name = option_name
        self.option_value = option_value
        self.reason = reason
        ValueError.__init__(self, f'On option "{option_name}": {reason} (value: {option_value!r})')


_TRUE_VALUES = ["TRUE", "YES", "1"]
_FALSE_VALUES = ["FALSE", "NO", "0"]
_TRUE_FALSE_VALUES = _TRUE_VALUES + _FALSE_VALUES


def Boolean(text: str) -> bool:
    """
    :returns:
        Returns a boolean represented by the given text (case insensitive).
    """
    text_upper = text.upper()
    if text_upper not in _TRUE_FALSE_VALUES:
        raise ValueError(
            f"The value does not match any known value (case insensitive): {text} "
            f"({_TRUE_FALSE_VALUES})"
        )
    return text_upper in _TRUE_VALUES


def parse_k_range(text: str) -> tuple[int, int]:
    """
    Parses an inclusive range of cluster counts: "2..8", "2-8", or a single "5".
    """
    text = text.strip()
    for separator in ("..", "-"):
        if separator in text:
            low, high = text.split(separator, 1)
            return int(low), int(high)
    value = int(text)
    return value, value


def _parse_window_start(text: str) -> date:
    return date.fromisoformat(text.strip())


def _parse_locality(text: str) -> Locality:
    for locality in Locality:
        if locality.value.lower() == text.strip().lower():
            return locality
    raise ValueError(f"expected one of {', '.join(loc.value for loc in Locality)}")


def _parse_scale_mode(text: str) -> ScaleMode:
    return ScaleMode(text.strip().lower())


# Options accepted in a configuration file, each with the converter of its text value.
#
# NOTE TO DEVELOPERS: try to keep options in alphabetical order to simplify maintenance
PARSEABLE_OPTIONS: dict[str, Callable[[str], Any]] = {
    "k": int,
    # Inclusive range of k explored by `fit`; when absent only `k` is fitted.
    "k_range": parse_k_range,
    "locality": _parse_locality,
    # Holdout evaluation removes 1 up to this many months.
    "max_removed": int,
    "model_path": Path,
    "output_dir": Path,
    # Whether truncated centroids are rescaled to sum 1 before partial assignment.
    "renormalize": Boolean,
    "restarts": int,
    "scale_mode": _parse_scale_mode,
    "seed": int,
    "tariff_path": Path,
    "window_start": _parse_window_start,
}


def _check_window_start(instance: Any, attribute: Any, value: date) -> None:
    if value.day != 1:
        raise ConfigValueError(attribute.name, value, "the window must start on the 1st")


def _check_k(instance: Any, attribute: Any, value: int) -> None:
    if value < 2:
        raise ConfigValueError(attribute.name, value, "at least 2 clusters are required")


def _check_k_range(instance: Any, attribute: Any, value: tuple[int, int] | None) -> None:
    if value is not None and not 2 <= value[0] <= value[1]:
        raise ConfigValueError(attribute.name, value, "expected 2 <= low <= high")


def _check_restarts(instance: Any, attribute: Any, value: int) -> None:
    if value < 1:
        raise ConfigValueError(attribute.name, value, "at least one restart is required")


def _check_max_removed(instance: Any, attribute: Any, value: int) -> None:
    if not 1 <= value <= VALIDATED_MISSING_MONTHS:
        raise ConfigValueError(
            attribute.name, value, f"expected a value within 1-{VALIDATED_MISSING_MONTHS}"
        )


@attr.s(auto_attribs=True, frozen=True)
class RunConfig:
    window_start: date = attr.ib(default=DEFAULT_WINDOW_START, validator=_check_window_start)
    locality: Locality = Locality.URBAN
    model_path: Path | None = None
    tariff_path: Path | None = None
    output_dir: Path = Path(".")
    seed: int = 42
    k: int = attr.ib(default=5, validator=_check_k)
    k_range: tuple[int, int] | None = attr.ib(default=None, validator=_check_k_range)
    restarts: int = attr.ib(default=10, validator=_check_restarts)
    max_removed: int = attr.ib(default=VALIDATED_MISSING_MONTHS, validator=_check_max_removed)
    scale_mode: ScaleMode = ScaleMode.JOINT
    renormalize: bool = True

    @property
    def window(self) -> AnalysisWindow:
        return AnalysisWindow.starting(self.window_start)

    @classmethod
    def from_yaml(cls, yaml_contents: str) -> "RunConfig":
        """
        Creates a configuration from the contents of a YAML file; absent options keep their
        defaults.

        :raises UnknownConfigOption:
        :raises ConfigTypeError:
        :raises ConfigValueError:
        """
        # Avoid errors with tabs at the end of file
        data = yaml.load(yaml_contents.strip(), Loader=yaml.loader.BaseLoader)
        if not data:
            return cls()
        if not isinstance(data, dict):
            raise ConfigTypeError("<document>", type(data), data)

        values = {}
        for option_name, option_value in data.items():
            if option_name not in PARSEABLE_OPTIONS:
                raise UnknownConfigOption(option_name)
            if not isinstance(option_value, str):
                raise ConfigTypeError(option_name, type(option_value), option_value)
            try:
                values[option_name] = PARSEABLE_OPTIONS[option_name](option_value)
            except ValueError as e:
                raise ConfigValueError(option_name, option_value, str(e))
        return cls(**values)

    @classmethod
    def from_file(cls, filename: Path) -> "RunConfig":
        with open(filename, encoding="utf-8") as f:
            contents = f.read()
        return cls.from_yaml(contents)

    def with_overrides(self, **values: Any) -> "RunConfig":
        """
        Copy with the given options replaced; None values (flags not given) are ignored.
        """
        for option_name in values:
            if option_name not in PARSEABLE_OPTIONS:
                raise UnknownConfigOption(option_name)
        return attr.evolve(self, **{name: v for name, v in values.items() if v is not None})


def load_run_config(filename: Path | None = None) -> RunConfig:
    """
    Reads the given configuration file, or the one named by the environment, or the defaults.
    """
    if filename is None and os.environ.get(CONFIG_ENV_VAR):
        filename = Path(os.environ[CONFIG_ENV_VAR])
    if filename is None:
        return RunConfig()
    return RunConfig.from_file(filename)
