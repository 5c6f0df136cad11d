# mypy: disallow-untyped-defs
"""
Reading of smart-meter HDF exports.

An HDF ("Harmonised Data File") is the half-hourly CSV export a customer downloads from the
network operator, e.g.:

    MPRN,Value,Read Type,Read Date and Time
    10000000000,0.007,Export (kW),30-04-2024 12:30
    10000000000,0.218,Import (kW),30-04-2024 12:30

Each value is the average power (kW) over the 30 minutes *ending* at the timestamp.
"""

import calendar
import csv
import enum
import io
import logging
from collections import Counter
from collections.abc import Iterable
from collections.abc import Mapping
from collections.abc import Sequence
from datetime import date
from datetime import datetime
from datetime import time
from datetime import timedelta
from decimal import Decimal
from decimal import InvalidOperation
from fractions import Fraction
from pathlib import Path
from typing import Any

import attr
import pandas as pd


logger = logging.getLogger(__name__)

HDF_HEADER = ("MPRN", "Value", "Read Type", "Read Date and Time")
HDF_TIMESTAMP_FORMAT = "%d-%m-%Y %H:%M"

INTERVAL = timedelta(minutes=30)
INTERVAL_HOURS = 0.5
INTERVALS_PER_DAY = 48
MONTHS_IN_WINDOW = 12

# A month is excluded when strictly more than this fraction of its intervals is missing.
MISSING_THRESHOLD = Fraction(1, 10)

READINGS_COLUMNS = ("mprn", "timestamp_iso8601", "read_type", "value_kw")
QUALITY_COLUMNS = (
    "mprn",
    "month_index",
    "month_start",
    "expected_count",
    "observed_count",
    "missing_fraction",
    "excluded",
)


class ReadType(enum.Enum):
    IMPORT = "Import"
    EXPORT = "Export"

    @property
    def hdf_literal(self) -> str:
        return f"{self.value} (kW)"

    @classmethod
    def from_hdf_literal(cls, text: str) -> "ReadType":
        for read_type in cls:
            if read_type.hdf_literal == text:
                return read_type
        raise ValueError(f"Unknown read type: {text!r}")


_READ_TYPE_ORDER = {ReadType.IMPORT: 0, ReadType.EXPORT: 1}


def is_mprn(text: str) -> bool:
    return len(text) == 11 and text.isascii() and text.isdigit()


def _check_mprn(instance: Any, attribute: Any, value: str) -> None:
    if not is_mprn(value):
        raise ValueError(f"MPRN must be 11 digits, got {value!r}")


def _check_value(instance: Any, attribute: Any, value: Decimal) -> None:
    if not value.is_finite() or value < 0:
        raise ValueError(f"Reading value must be a non-negative number, got {value}")


def _check_timestamp(instance: Any, attribute: Any, value: datetime) -> None:
    if value.minute not in (0, 30) or value.second or value.microsecond:
        raise ValueError(f"Reading timestamp must fall on a half-hour, got {value}")


@attr.s(auto_attribs=True, frozen=True)
class RawReading:
    """
    One half-hourly meter record, a single row of an HDF file.
    """

    # Meter point registration number (11 digits).
    mprn: str = attr.ib(validator=_check_mprn)
    # Average power in kW over the interval; kept as Decimal so the source text survives.
    value: Decimal = attr.ib(validator=_check_value)
    read_type: ReadType
    # Naive local wall-clock time marking the end of the interval.
    timestamp: datetime = attr.ib(validator=_check_timestamp)

    @property
    def key(self) -> tuple[datetime, int]:
        return self.timestamp, _READ_TYPE_ORDER[self.read_type]

    @property
    def interval_start(self) -> datetime:
        return self.timestamp - INTERVAL


@attr.s(auto_attribs=True, frozen=True)
class Diagnostic:
    """
    A non-fatal problem found while reading or merging meter data.
    """

    message: str
    # 1-based line in the source file, when the problem belongs to a row.
    line: int | None = None

    def __str__(self) -> str:
        if self.line is None:
            return self.message
        return f"line {self.line}: {self.message}"


@attr.s(auto_attribs=True, frozen=True)
class ParsedHdf:
    readings: tuple[RawReading, ...]
    diagnostics: tuple[Diagnostic, ...]


class HdfFormatError(ValueError):
    """
    Raised when a file is not an HDF export at all (missing or unexpected header).

    :ivar source:
        Name of the file (or other source) being parsed.

    :ivar header:
        The first row found, or None for empty input.
    """

    def __init__(self, source: str, header: Sequence[str] | None) -> None:
        self.source = source
        self.header = header
        if header is None:
            found = "empty input"
        else:
            found = "header " + ",".join(header)
        ValueError.__init__(
            self,
            f'{source}: expected HDF header "{",".join(HDF_HEADER)}", found {found}',
        )


class MixedMeterError(ValueError):
    """
    Raised when readings from different meters are merged into one series.
    """

    def __init__(self, mprns: Iterable[str]) -> None:
        self.mprns = sorted(mprns)
        ValueError.__init__(
            self, f"Cannot merge readings from different meters: {', '.join(self.mprns)}"
        )


class _RowError(Exception):
    pass


def parse_hdf(text: str, *, source: str = "<text>") -> ParsedHdf:
    """
    Parses the contents of an HDF file.

    Every well-formed row yields one reading; every malformed row yields one diagnostic with
    its line number. A missing header is fatal.

    :raises HdfFormatError:
    """
    reader = csv.reader(io.StringIO(text.lstrip("\ufeff")))
    header = next(reader, None)
    if header is None or tuple(cell.strip() for cell in header) != HDF_HEADER:
        raise HdfFormatError(source, header)

    readings = []
    diagnostics = []
    for row in reader:
        if not any(cell.strip() for cell in row):
            continue
        try:
            readings.append(_parse_row(row))
        except _RowError as e:
            diagnostics.append(Diagnostic(str(e), line=reader.line_num))

    for diagnostic in diagnostics:
        logger.debug(f"{source}: {diagnostic}")
    return ParsedHdf(tuple(readings), tuple(diagnostics))


def _parse_row(row: Sequence[str]) -> RawReading:
    if len(row) != len(HDF_HEADER):
        raise _RowError(f"expected {len(HDF_HEADER)} fields, got {len(row)}")
    mprn, value_text, read_type_text, timestamp_text = (cell.strip() for cell in row)

    if not is_mprn(mprn):
        raise _RowError(f"bad mprn {mprn!r}")
    try:
        value = Decimal(value_text)
    except InvalidOperation:
        raise _RowError(f"bad value {value_text!r}")
    if not value.is_finite():
        raise _RowError(f"bad value {value_text!r}")
    if value < 0:
        raise _RowError(f"negative value {value_text!r}")
    try:
        read_type = ReadType.from_hdf_literal(read_type_text)
    except ValueError:
        raise _RowError(f"bad read type {read_type_text!r}")
    try:
        timestamp = datetime.strptime(timestamp_text, HDF_TIMESTAMP_FORMAT)
    except ValueError:
        raise _RowError(f"bad timestamp {timestamp_text!r}")
    if timestamp.minute not in (0, 30):
        raise _RowError(f"bad timestamp {timestamp_text!r} (not on a half-hour)")

    return RawReading(mprn=mprn, value=value, read_type=read_type, timestamp=timestamp)


def format_hdf(readings: Iterable[RawReading]) -> str:
    """
    Writes readings back in HDF format; the inverse of `parse_hdf` for well-formed rows.
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(HDF_HEADER)
    for reading in readings:
        writer.writerow(
            [
                reading.mprn,
                str(reading.value),
                reading.read_type.hdf_literal,
                reading.timestamp.strftime(HDF_TIMESTAMP_FORMAT),
            ]
        )
    return buffer.getvalue()


@attr.s(auto_attribs=True, frozen=True)
class ReadingSeries:
    """
    All readings of one meter, ordered by (timestamp, read type) without duplicates.
    """

    mprn: str
    readings: tuple[RawReading, ...] = attr.ib(converter=tuple)

    @readings.validator
    def _check_readings(self, attribute: Any, value: tuple[RawReading, ...]) -> None:
        others = {r.mprn for r in value} - {self.mprn}
        if others:
            raise MixedMeterError(others | {self.mprn})
        keys = [r.key for r in value]
        if any(a >= b for a, b in zip(keys, keys[1:])):
            raise ValueError("Readings must have strictly increasing (timestamp, read type) keys")

    def imports(self) -> list[RawReading]:
        return [r for r in self.readings if r.read_type is ReadType.IMPORT]


def group_by_meter(readings: Iterable[RawReading]) -> dict[str, list[RawReading]]:
    """
    Splits a batch of readings by MPRN, keeping the order of appearance within each meter.
    """
    grouped: dict[str, list[RawReading]] = {}
    for reading in readings:
        grouped.setdefault(reading.mprn, []).append(reading)
    return dict(sorted(grouped.items()))


def merge_series(
    parts: Sequence[Sequence[RawReading]], *, mprn: str | None = None
) -> tuple[ReadingSeries, tuple[Diagnostic, ...]]:
    """
    Combines several uploads of the same meter into one series.

    When the same (timestamp, read type) appears more than once the value from the latest
    part wins; a diagnostic is produced when the replaced value differs.

    :param parts:
        Readings of each upload, in upload order.

    :param mprn:
        Meter of the series; required only when every part is empty.

    :raises MixedMeterError:
    """
    mprns = {r.mprn for part in parts for r in part}
    if mprn is not None:
        mprns.add(mprn)
    if len(mprns) > 1:
        raise MixedMeterError(mprns)
    if not mprns:
        raise ValueError("Cannot merge empty uploads without an MPRN")
    (series_mprn,) = mprns

    merged: dict[tuple[datetime, int], RawReading] = {}
    diagnostics = []
    repeated = 0
    for part in parts:
        for reading in part:
            previous = merged.get(reading.key)
            if previous is not None:
                repeated += 1
                if previous.value != reading.value:
                    diagnostics.append(
                        Diagnostic(
                            f"duplicate {reading.read_type.value} reading at "
                            f"{reading.timestamp.isoformat(sep=' ')}: "
                            f"{previous.value} replaced by {reading.value}"
                        )
                    )
            merged[reading.key] = reading

    if repeated:
        logger.info(
            f"{series_mprn}: {repeated} repeated readings merged, {len(diagnostics)} conflicting"
        )
    series = ReadingSeries(series_mprn, (merged[key] for key in sorted(merged)))
    return series, tuple(diagnostics)


def _check_month_start(instance: Any, attribute: Any, value: datetime) -> None:
    if value.day != 1 or value.time() != time(0):
        raise ValueError(f"Analysis window must start at midnight on the 1st, got {value}")


@attr.s(auto_attribs=True, frozen=True)
class AnalysisWindow:
    """
    Twelve calendar months starting at local midnight on the first of a month.
    """

    start: datetime = attr.ib(validator=_check_month_start)

    @classmethod
    def starting(cls, day: date) -> "AnalysisWindow":
        return cls(datetime.combine(day, time(0)))

    @property
    def end(self) -> datetime:
        return self.month_start(MONTHS_IN_WINDOW)

    def month_start(self, month_index: int) -> datetime:
        years, month = divmod(self.start.month - 1 + month_index, 12)
        return self.start.replace(year=self.start.year + years, month=month + 1)

    def days_in_month(self, month_index: int) -> int:
        start = self.month_start(month_index)
        return calendar.monthrange(start.year, start.month)[1]

    def expected_count(self, month_index: int) -> int:
        return self.days_in_month(month_index) * INTERVALS_PER_DAY

    def contains(self, moment: datetime) -> bool:
        return self.start <= moment < self.end

    def month_index(self, moment: datetime) -> int:
        if not self.contains(moment):
            raise ValueError(f"{moment} is outside the window {self.start} - {self.end}")
        return (moment.year - self.start.year) * 12 + moment.month - self.start.month


def trim_window(series: ReadingSeries, window: AnalysisWindow) -> ReadingSeries:
    """
    Keeps only the readings with window.start <= timestamp < window.end.
    """
    return ReadingSeries(series.mprn, (r for r in series.readings if window.contains(r.timestamp)))


@attr.s(auto_attribs=True, frozen=True)
class MonthQuality:
    """
    Completeness of the Import readings of one month of the analysis window.
    """

    month_index: int
    expected_count: int
    observed_count: int

    @property
    def missing(self) -> Fraction:
        # Clamped at 0: the autumn DST day carries 50 intervals.
        missing = Fraction(self.expected_count - self.observed_count, self.expected_count)
        return max(missing, Fraction(0))

    @property
    def missing_fraction(self) -> float:
        return float(self.missing)

    @property
    def excluded(self) -> bool:
        return self.missing > MISSING_THRESHOLD


def assess_months(series: ReadingSeries, window: AnalysisWindow) -> list[MonthQuality]:
    """
    Counts the Import readings of each month of the window and applies the 10% rule.
    """
    counts = Counter(
        window.month_index(r.timestamp) for r in series.imports() if window.contains(r.timestamp)
    )
    return [
        MonthQuality(month, window.expected_count(month), counts[month])
        for month in range(MONTHS_IN_WINDOW)
    ]


def interval_energy(reading: RawReading) -> float:
    """
    Energy in kWh of one half-hourly reading.
    """
    return float(reading.value) * INTERVAL_HOURS


def write_readings_csv(series: Iterable[ReadingSeries], path: Path) -> None:
    rows = [
        (
            r.mprn,
            r.timestamp.isoformat(timespec="minutes"),
            r.read_type.value,
            str(r.value),
        )
        for s in series
        for r in s.readings
    ]
    pd.DataFrame(rows, columns=list(READINGS_COLUMNS)).to_csv(path, index=False)


def read_readings_csv(path: Path) -> dict[str, ReadingSeries]:
    """
    Reads a canonical readings CSV written by `write_readings_csv`.
    """
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    grouped: dict[str, list[RawReading]] = {}
    for mprn, timestamp, read_type, value in frame[list(READINGS_COLUMNS)].itertuples(
        index=False, name=None
    ):
        reading = RawReading(
            mprn=mprn,
            value=Decimal(value),
            read_type=ReadType(read_type),
            timestamp=datetime.fromisoformat(timestamp),
        )
        grouped.setdefault(mprn, []).append(reading)
    return {
        mprn: ReadingSeries(mprn, sorted(readings, key=lambda r: r.key))
        for mprn, readings in sorted(grouped.items())
    }


def write_quality_csv(
    qualities: Mapping[str, Sequence[MonthQuality]], window: AnalysisWindow, path: Path
) -> None:
    rows = [
        (
            mprn,
            q.month_index,
            window.month_start(q.month_index).date().isoformat(),
            q.expected_count,
            q.observed_count,
            q.missing_fraction,
            int(q.excluded),
        )
        for mprn, months in qualities.items()
        for q in months
    ]
    pd.DataFrame(rows, columns=list(QUALITY_COLUMNS)).to_csv(path, index=False)
