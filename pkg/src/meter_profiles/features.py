# mypy: disallow-untyped-defs
"""
Monthly day/night/peak consumption and the 36-ratio profile vectors used for clustering.
"""

import enum
import logging
from collections.abc import Iterable
from collections.abc import Sequence
from datetime import time
from pathlib import Path
from typing import Any

import attr
import numpy as np
import pandas as pd

from meter_profiles.ingest import AnalysisWindow
from meter_profiles.ingest import MONTHS_IN_WINDOW
from meter_profiles.ingest import MonthQuality
from meter_profiles.ingest import ReadingSeries
from meter_profiles.ingest import assess_months
from meter_profiles.ingest import interval_energy
from meter_profiles.ingest import trim_window


logger = logging.getLogger(__name__)

FEATURES_COLUMNS = ("mprn", "month_index", "slot", "kwh", "ratio", "observed")
PROFILE_SIZE = MONTHS_IN_WINDOW * 3
RATIO_TOLERANCE = 1e-9


class Slot(enum.Enum):
    DAY = "day"
    NIGHT = "night"
    PEAK = "peak"

    @property
    def hours(self) -> int:
        return SLOT_HOURS[self]


# Entry order inside a month: Day, Night, Peak.
SLOTS = (Slot.DAY, Slot.NIGHT, Slot.PEAK)
SLOT_HOURS = {Slot.DAY: 13, Slot.NIGHT: 9, Slot.PEAK: 2}

_PEAK_START = time(17)
_PEAK_END = time(19)
_DAY_START = time(8)
_DAY_END = time(23)


class DegenerateProfileError(ValueError):
    """
    Raised when a profile vector cannot be normalized because consumption totals zero.
    """

    def __init__(self, total: float) -> None:
        self.total = total
        ValueError.__init__(self, f"degenerate profile: total consumption is {total} kWh")


def slot_of(interval_start: time) -> Slot:
    """
    Time-of-use slot claiming the half-hour interval starting at the given time of day.

    Windows are half-open: Peak [17:00, 19:00), Day [08:00, 17:00) and [19:00, 23:00),
    Night [23:00, 08:00).
    """
    if interval_start.minute not in (0, 30) or interval_start.second or interval_start.microsecond:
        raise ValueError(f"Interval start must fall on a half-hour, got {interval_start}")
    if _PEAK_START <= interval_start < _PEAK_END:
        return Slot.PEAK
    if _DAY_START <= interval_start < _DAY_END:
        return Slot.DAY
    return Slot.NIGHT


def _check_month_index(instance: Any, attribute: Any, value: int) -> None:
    if not 0 <= value < MONTHS_IN_WINDOW:
        raise ValueError(f"Month index must be within 0-{MONTHS_IN_WINDOW - 1}, got {value}")


def _check_kwh(instance: Any, attribute: Any, value: float) -> None:
    if not np.isfinite(value) or value < 0:
        raise ValueError(f"{attribute.name} must be a non-negative number, got {value}")


@attr.s(auto_attribs=True, frozen=True)
class SlotUsage:
    """
    kWh consumed in each time-of-use slot during one month of the analysis window.
    """

    month_index: int = attr.ib(converter=int, validator=_check_month_index)
    day_kwh: float = attr.ib(converter=float, validator=_check_kwh)
    night_kwh: float = attr.ib(converter=float, validator=_check_kwh)
    peak_kwh: float = attr.ib(converter=float, validator=_check_kwh)

    @classmethod
    def from_values(cls, month_index: int, values: Sequence[float]) -> "SlotUsage":
        day, night, peak = values
        return cls(month_index, day, night, peak)

    def as_tuple(self) -> tuple[float, float, float]:
        return self.day_kwh, self.night_kwh, self.peak_kwh

    def kwh(self, slot: Slot) -> float:
        return self.as_tuple()[SLOTS.index(slot)]

    @property
    def total(self) -> float:
        return self.day_kwh + self.night_kwh + self.peak_kwh

    def scaled(self, factor: float) -> "SlotUsage":
        return SlotUsage.from_values(self.month_index, [v * factor for v in self.as_tuple()])


def _float_tuple(values: Iterable[float]) -> tuple[float, ...]:
    return tuple(float(v) for v in values)


def _bool_tuple(values: Iterable[bool]) -> tuple[bool, ...]:
    return tuple(bool(v) for v in values)


@attr.s(auto_attribs=True, frozen=True)
class ProfileVector:
    """
    36 consumption ratios indexed by (month, slot) plus the mask of observed months.

    Entries of unobserved months are 0 and the observed entries sum to 1.
    """

    entries: tuple[float, ...] = attr.ib(converter=_float_tuple)
    observed: tuple[bool, ...] = attr.ib(converter=_bool_tuple)

    def __attrs_post_init__(self) -> None:
        if len(self.entries) != PROFILE_SIZE or len(self.observed) != MONTHS_IN_WINDOW:
            raise ValueError(
                f"Profile needs {PROFILE_SIZE} entries and {MONTHS_IN_WINDOW} observed flags, "
                f"got {len(self.entries)} and {len(self.observed)}"
            )
        matrix = self.matrix
        mask = np.asarray(self.observed)
        if np.any(matrix[~mask] != 0):
            raise ValueError("Entries of unobserved months must be 0")
        if mask.any() and abs(matrix[mask].sum() - 1.0) > RATIO_TOLERANCE:
            raise ValueError(f"Observed entries must sum to 1, got {matrix[mask].sum()}")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.entries, dtype=float)

    @property
    def matrix(self) -> np.ndarray:
        return self.array.reshape(MONTHS_IN_WINDOW, len(SLOTS))

    @property
    def observed_months(self) -> int:
        return sum(self.observed)

    @property
    def is_full(self) -> bool:
        return all(self.observed)

    @property
    def observed_positions(self) -> np.ndarray:
        """
        Entry positions belonging to observed months.
        """
        return np.flatnonzero(np.repeat(np.asarray(self.observed), len(SLOTS)))


def usage_matrix(usages: Sequence[SlotUsage]) -> np.ndarray:
    """
    12x3 matrix of kWh by (month, slot); rows of months absent from `usages` are 0.
    """
    matrix = np.zeros((MONTHS_IN_WINDOW, len(SLOTS)))
    seen = set()
    for usage in usages:
        if usage.month_index in seen:
            raise ValueError(f"Month {usage.month_index} appears more than once")
        seen.add(usage.month_index)
        matrix[usage.month_index] = usage.as_tuple()
    return matrix


def observed_mask(usages: Sequence[SlotUsage]) -> tuple[bool, ...]:
    months = {u.month_index for u in usages}
    return tuple(month in months for month in range(MONTHS_IN_WINDOW))


def aggregate_monthly(
    series: ReadingSeries, window: AnalysisWindow, quality: Sequence[MonthQuality]
) -> list[SlotUsage]:
    """
    Sums the Import energy of every non-excluded month into day/night/peak totals.

    A reading belongs to the month and slot of its interval start (timestamp - 30 min); the
    reading stamped at the window start covers the previous month and is not counted.
    """
    excluded = {q.month_index for q in quality if q.excluded}
    totals = np.zeros((MONTHS_IN_WINDOW, len(SLOTS)))
    skipped = 0
    for reading in series.imports():
        start = reading.interval_start
        if not window.contains(start):
            skipped += 1
            continue
        month = window.month_index(start)
        if month in excluded:
            continue
        totals[month, SLOTS.index(slot_of(start.time()))] += interval_energy(reading)

    if skipped:
        logger.debug(f"{series.mprn}: {skipped} readings with interval start outside the window")
    return [
        SlotUsage.from_values(month, totals[month])
        for month in range(MONTHS_IN_WINDOW)
        if month not in excluded
    ]


def ratio_vector(usages: Sequence[SlotUsage]) -> ProfileVector:
    """
    Normalizes monthly slot usage by the total over all present months.

    :raises DegenerateProfileError:
        When total consumption is zero (or no month is present).
    """
    matrix = usage_matrix(usages)
    total = matrix.sum()
    if not total > 0:
        raise DegenerateProfileError(float(total))
    return ProfileVector(entries=(matrix / total).ravel(), observed=observed_mask(usages))


@attr.s(auto_attribs=True, frozen=True)
class UserFeatures:
    """
    Monthly slot usage of one meter over the analysis window (excluded months absent).
    """

    mprn: str
    usages: tuple[SlotUsage, ...] = attr.ib(converter=tuple)

    @property
    def observed(self) -> tuple[bool, ...]:
        return observed_mask(self.usages)

    @property
    def observed_months(self) -> int:
        return len(self.usages)

    @property
    def is_full(self) -> bool:
        return self.observed_months == MONTHS_IN_WINDOW

    @property
    def total_kwh(self) -> float:
        return sum(u.total for u in self.usages)

    def profile(self) -> ProfileVector:
        return ratio_vector(self.usages)


def build_user_features(series: ReadingSeries, window: AnalysisWindow) -> UserFeatures:
    trimmed = trim_window(series, window)
    quality = assess_months(trimmed, window)
    return UserFeatures(series.mprn, aggregate_monthly(trimmed, window, quality))


def write_features_csv(users: Iterable[UserFeatures], path: Path) -> None:
    rows = []
    for user in users:
        matrix = usage_matrix(user.usages)
        total = matrix.sum()
        observed = user.observed
        for month in range(MONTHS_IN_WINDOW):
            for slot_index, slot in enumerate(SLOTS):
                kwh = float(matrix[month, slot_index])
                ratio = kwh / total if total > 0 else 0.0
                rows.append((user.mprn, month, slot.value, kwh, ratio, int(observed[month])))
    pd.DataFrame(rows, columns=list(FEATURES_COLUMNS)).to_csv(path, index=False)


def read_features_csv(path: Path) -> list[UserFeatures]:
    """
    Reads a features CSV written by `write_features_csv`, one `UserFeatures` per meter.
    """
    frame = pd.read_csv(path, dtype={"mprn": str}, float_precision="round_trip")
    users = []
    for mprn, group in frame.groupby("mprn", sort=True):
        usages = []
        observed = group[group["observed"] == 1]
        for month, rows in observed.groupby("month_index", sort=True):
            kwh = dict(zip(rows["slot"], rows["kwh"]))
            usages.append(
                SlotUsage.from_values(int(month), [kwh[slot.value] for slot in SLOTS])
            )
        users.append(UserFeatures(str(mprn), usages))
    return users
