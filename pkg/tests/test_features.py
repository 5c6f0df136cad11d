from datetime import datetime
from datetime import time
from datetime import timedelta
from decimal import Decimal

import numpy as np
import pytest
from sample_data import synthetic_readings

from meter_profiles.features import DegenerateProfileError
from meter_profiles.features import ProfileVector
from meter_profiles.features import SLOT_HOURS
from meter_profiles.features import Slot
from meter_profiles.features import SlotUsage
from meter_profiles.features import UserFeatures
from meter_profiles.features import aggregate_monthly
from meter_profiles.features import build_user_features
from meter_profiles.features import ratio_vector
from meter_profiles.features import read_features_csv
from meter_profiles.features import slot_of
from meter_profiles.features import usage_matrix
from meter_profiles.features import write_features_csv
from meter_profiles.ingest import AnalysisWindow
from meter_profiles.ingest import MonthQuality
from meter_profiles.ingest import RawReading
from meter_profiles.ingest import ReadType
from meter_profiles.ingest import ReadingSeries
from meter_profiles.ingest import assess_months
from meter_profiles.ingest import interval_energy
from meter_profiles.ingest import trim_window


MPRN = "10000000000"
WINDOW = AnalysisWindow(datetime(2023, 5, 1))


def _complete_quality():
    return [MonthQuality(m, WINDOW.expected_count(m), WINDOW.expected_count(m)) for m in range(12)]


@pytest.mark.parametrize(
    "start, slot",
    [
        (time(17, 0), Slot.PEAK),
        (time(18, 30), Slot.PEAK),
        (time(19, 0), Slot.DAY),
        (time(22, 30), Slot.DAY),
        (time(23, 0), Slot.NIGHT),
        (time(0, 0), Slot.NIGHT),
        (time(7, 30), Slot.NIGHT),
        (time(8, 0), Slot.DAY),
        (time(16, 30), Slot.DAY),
    ],
)
def testSlotOf(start, slot):
    assert slot_of(start) is slot


def testSlotsPartitionTheDay():
    starts = [time(h, m) for h in range(24) for m in (0, 30)]
    counts = {slot: sum(slot_of(t) is slot for t in starts) for slot in Slot}
    assert counts == {slot: 2 * hours for slot, hours in SLOT_HOURS.items()}
    assert sum(SLOT_HOURS.values()) == 24


def testSlotOfRejectsOffGrid():
    with pytest.raises(ValueError):
        slot_of(time(12, 15))


def testSlotUsageInvariants():
    with pytest.raises(ValueError):
        SlotUsage(0, -1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        SlotUsage(12, 1.0, 0.0, 0.0)
    usage = SlotUsage(3, 1.0, 2.0, 3.0)
    assert usage.total == 6.0
    assert usage.kwh(Slot.NIGHT) == 2.0
    assert usage.scaled(2.0) == SlotUsage(3, 2.0, 4.0, 6.0)


def testAggregateMonthlySingleReading():
    reading = RawReading(MPRN, Decimal("0.218"), ReadType.IMPORT, datetime(2023, 5, 10, 12, 30))
    usages = aggregate_monthly(ReadingSeries(MPRN, [reading]), WINDOW, _complete_quality())
    assert len(usages) == 12
    assert usages[0].as_tuple() == pytest.approx((0.109, 0.0, 0.0))
    assert all(u.total == 0 for u in usages[1:])


def testAggregateMonthlyUsesIntervalStart():
    # Stamped 17:00 covers 16:30-17:00 (Day); stamped 17:30 covers 17:00-17:30 (Peak); stamped
    # at midnight on June 1st covers the end of May.
    readings = [
        RawReading(MPRN, Decimal("1"), ReadType.IMPORT, datetime(2023, 5, 10, 17, 0)),
        RawReading(MPRN, Decimal("1"), ReadType.IMPORT, datetime(2023, 5, 10, 17, 30)),
        RawReading(MPRN, Decimal("1"), ReadType.IMPORT, datetime(2023, 6, 1, 0, 0)),
    ]
    usages = aggregate_monthly(ReadingSeries(MPRN, readings), WINDOW, _complete_quality())
    assert usages[0].as_tuple() == (0.5, 0.5, 0.5)
    assert usages[1].total == 0


def testAggregateMonthlyIgnoresExportAndWindowStart():
    readings = [
        RawReading(MPRN, Decimal("1"), ReadType.IMPORT, datetime(2023, 5, 1, 0, 0)),
        RawReading(MPRN, Decimal("1"), ReadType.IMPORT, datetime(2023, 5, 1, 0, 30)),
        RawReading(MPRN, Decimal("5"), ReadType.EXPORT, datetime(2023, 5, 1, 0, 30)),
    ]
    usages = aggregate_monthly(ReadingSeries(MPRN, readings), WINDOW, _complete_quality())
    assert usages[0].as_tuple() == (0.0, 0.5, 0.0)


def testWindowEdgeIntervals():
    # Stamps from 2023-05-01 00:00 to 2024-05-01 00:00 inclusive.
    readings = synthetic_readings(MPRN, datetime(2023, 4, 30, 23, 30), 366 * 48 + 1, seed=5)
    series = trim_window(ReadingSeries(MPRN, readings), WINDOW)
    assert series.readings[0].timestamp == datetime(2023, 5, 1, 0, 0)
    assert series.readings[-1].timestamp == datetime(2024, 4, 30, 23, 30)

    # The stamp at the window start counts towards May completeness...
    quality = assess_months(series, WINDOW)
    assert [q.observed_count for q in quality] == [q.expected_count for q in quality]

    def energy(first, last):
        return sum(interval_energy(r) for r in readings if first <= r.timestamp <= last)

    # ... but its energy belongs to April 2023, and the last April 2024 interval is trimmed.
    usages = build_user_features(ReadingSeries(MPRN, readings), WINDOW).usages
    assert usages[0].total == pytest.approx(
        energy(datetime(2023, 5, 1, 0, 30), datetime(2023, 6, 1, 0, 0)), rel=1e-9
    )
    assert usages[11].total == pytest.approx(
        energy(datetime(2024, 4, 1, 0, 30), datetime(2024, 4, 30, 23, 30)), rel=1e-9
    )


def testAggregateMonthlySkipsExcluded():
    quality = _complete_quality()
    quality[3] = MonthQuality(3, quality[3].expected_count, 0)
    readings = synthetic_readings(MPRN, datetime(2023, 5, 1), 48 * 366)
    usages = aggregate_monthly(ReadingSeries(MPRN, readings), WINDOW, quality)
    assert [u.month_index for u in usages] == [0, 1, 2, 4, 5, 6, 7, 8, 9, 10, 11]


def testAggregateMonthlyConservation():
    readings = synthetic_readings(MPRN, datetime(2023, 5, 1), 48 * 366, seed=3)
    series = ReadingSeries(MPRN, readings)
    usages = aggregate_monthly(series, WINDOW, _complete_quality())
    counted = [r for r in readings if WINDOW.contains(r.interval_start)]
    assert len(counted) == 48 * 366
    expected = sum(interval_energy(r) for r in counted)
    assert sum(u.total for u in usages) == pytest.approx(expected, rel=1e-9)


def testRatioVectorSingleMonth():
    vector = ratio_vector([SlotUsage(4, 60, 30, 10)])
    assert vector.matrix[4] == pytest.approx([0.6, 0.3, 0.1])
    assert vector.array.sum() == pytest.approx(1.0)
    assert vector.observed == tuple(m == 4 for m in range(12))
    assert vector.observed_months == 1
    assert not vector.is_full
    assert list(vector.observed_positions) == [12, 13, 14]


def testRatioVectorIdenticalMonths():
    vector = ratio_vector([SlotUsage(m, 10, 10, 4) for m in range(12)])
    assert vector.is_full
    assert vector.matrix[:, 0] == pytest.approx([10 / 288] * 12)
    assert vector.entries[0] == pytest.approx(0.034722, abs=1e-6)


def testRatioVectorDegenerate():
    with pytest.raises(DegenerateProfileError, match="degenerate profile"):
        ratio_vector([SlotUsage(m, 0, 0, 0) for m in range(12)])
    with pytest.raises(DegenerateProfileError):
        ratio_vector([])


def testRatioVectorScaleInvariance():
    rng = np.random.default_rng(5)
    usages = [SlotUsage.from_values(m, rng.uniform(0, 100, 3)) for m in range(0, 12, 2)]
    scaled = [u.scaled(37.5) for u in usages]
    assert ratio_vector(scaled).array == pytest.approx(ratio_vector(usages).array, abs=1e-12)


def testProfileVectorInvariants():
    entries = np.zeros(36)
    entries[0] = 1.0
    observed = [True] + [False] * 11
    ProfileVector(entries, observed)

    with pytest.raises(ValueError, match="sum to 1"):
        ProfileVector(entries * 0.5, observed)
    entries[3] = 0.1
    with pytest.raises(ValueError, match="unobserved"):
        ProfileVector(entries, observed)
    with pytest.raises(ValueError):
        ProfileVector(np.zeros(35), observed)


def testUsageMatrixRejectsRepeatedMonth():
    with pytest.raises(ValueError, match="more than once"):
        usage_matrix([SlotUsage(1, 1, 1, 1), SlotUsage(1, 2, 2, 2)])


def testBuildUserFeatures():
    # Two days short of a full year: April 29th-30th are missing, April is still kept.
    readings = synthetic_readings(MPRN, datetime(2023, 5, 1), 48 * 364)
    user = build_user_features(ReadingSeries(MPRN, readings), WINDOW)
    assert user.mprn == MPRN
    assert user.is_full
    assert user.total_kwh == pytest.approx(sum(interval_energy(r) for r in readings))

    # Dropping June entirely excludes it.
    june = WINDOW.month_start(1), WINDOW.month_start(2)
    kept = [r for r in readings if not june[0] <= r.timestamp < june[1] + timedelta(minutes=30)]
    user = build_user_features(ReadingSeries(MPRN, kept), WINDOW)
    assert user.observed_months == 11
    assert 1 not in [u.month_index for u in user.usages]
    assert user.profile().observed[1] is False


def testFeaturesCsvRoundTrip(tmp_path):
    users = [
        UserFeatures(MPRN, [SlotUsage(m, 10.25 + m, 7.5, 1 / 3) for m in range(12)]),
        UserFeatures("10000000001", [SlotUsage(m, 5.0, 2.0, 0.1) for m in (0, 5, 11)]),
        UserFeatures("10000000002", [SlotUsage(m, 0.0, 0.0, 0.0) for m in (2,)]),
    ]
    write_features_csv(users, tmp_path / "features.csv")
    lines = (tmp_path / "features.csv").read_text().splitlines()
    assert lines[0] == "mprn,month_index,slot,kwh,ratio,observed"
    assert len(lines) == 1 + 36 * 3
    assert read_features_csv(tmp_path / "features.csv") == users
