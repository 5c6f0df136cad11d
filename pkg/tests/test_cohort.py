import math
from datetime import datetime

import numpy as np
import pytest

from meter_profiles.cohort import AnnualSummary
from meter_profiles.cohort import annual_summary
from meter_profiles.cohort import describe_profile
from meter_profiles.cohort import duration_distribution
from meter_profiles.cohort import monthly_average
from meter_profiles.cohort import profile_summary
from meter_profiles.cohort import slot_shares
from meter_profiles.cohort import write_annual_csv
from meter_profiles.cohort import write_durations_csv
from meter_profiles.cohort import write_monthly_csv
from meter_profiles.cohort import write_profiles_csv
from meter_profiles.features import DegenerateProfileError
from meter_profiles.features import SlotUsage
from meter_profiles.features import UserFeatures
from meter_profiles.ingest import AnalysisWindow


def testDurationDistribution():
    rows = duration_distribution([12, 12, 11, 7, 6, 3, 1, 0])
    assert [(r.label, r.count) for r in rows] == [
        ("12 months", 2),
        ("> 9 months", 3),
        ("> 6 months", 4),
        ("> 2 months", 6),
        (">= 1 month", 7),
    ]
    assert rows[0].percent == pytest.approx(25.0)
    assert [r.count for r in duration_distribution([])] == [0] * 5


def testAnnualSummary():
    summary = annual_summary([1000, 3000, 4200, 5000, 9000])
    assert summary == AnnualSummary(
        count=5,
        mean=4440.0,
        minimum=1000.0,
        q1=3000.0,
        median=4200.0,
        q3=5000.0,
        maximum=9000.0,
        above_typical=2,
    )
    with pytest.raises(ValueError):
        annual_summary([])


def testSlotShares():
    usages = [SlotUsage(0, 60, 30, 10), SlotUsage(1, 60, 30, 10)]
    assert slot_shares(usages) == pytest.approx((0.6, 0.3, 0.1))
    with pytest.raises(DegenerateProfileError):
        slot_shares([SlotUsage(0, 0, 0, 0)])


def testMonthlyAverage():
    users = [
        UserFeatures("10000000000", [SlotUsage(0, 10, 10, 0), SlotUsage(1, 5, 5, 0)]),
        UserFeatures("10000000001", [SlotUsage(0, 30, 10, 0)]),
    ]
    averages = monthly_average(users)
    assert len(averages) == 12
    assert averages[0] == (30.0, 2)
    assert averages[1] == (10.0, 1)
    assert math.isnan(averages[2][0])
    assert averages[2][1] == 0


@pytest.mark.parametrize(
    "shares, label",
    [
        ((0.65, 0.25, 0.10), "day"),
        ((0.25, 0.70, 0.05), "night"),
        ((0.48, 0.44, 0.08), "balanced"),
    ],
)
def testDescribeProfile(shares, label):
    centroid = np.tile(np.asarray(shares) / 12, 12)
    assert describe_profile(centroid) == label


def testProfileSummary(cohort_model):
    summaries = profile_summary(cohort_model)
    assert [s.profile_id for s in summaries] == [1, 2, 3, 4, 5]
    assert [s.members for s in summaries] == list(cohort_model.member_counts)
    assert sum(s.share_pct for s in summaries) == pytest.approx(100.0)
    for s in summaries:
        assert s.day_share + s.night_share + s.peak_share == pytest.approx(1.0)
    assert [s.label for s in summaries].count("night") >= 3


def testWriteReports(tmp_path, cohort_model):
    write_durations_csv(duration_distribution([12, 6]), tmp_path / "durations.csv")
    assert (tmp_path / "durations.csv").read_text().splitlines()[:3] == [
        "duration,users,percent",
        "12 months,1,50.0",
        "> 9 months,1,50.0",
    ]

    write_annual_csv(annual_summary([4000.0, 5000.0]), tmp_path / "annual.csv")
    lines = (tmp_path / "annual.csv").read_text().splitlines()
    assert lines[0] == "statistic,value"
    assert lines[1] == "count,2"
    assert lines[-1] == "above_typical,1"

    averages = [(float(m), 1) for m in range(12)]
    write_monthly_csv(averages, AnalysisWindow(datetime(2023, 5, 1)), tmp_path / "monthly.csv")
    lines = (tmp_path / "monthly.csv").read_text().splitlines()
    assert lines[0] == "month_index,month_start,mean_kwh,users"
    assert lines[1] == "0,2023-05-01,0.0,1"
    assert lines[12] == "11,2024-04-01,11.0,1"

    write_profiles_csv(profile_summary(cohort_model), tmp_path / "profiles.csv")
    lines = (tmp_path / "profiles.csv").read_text().splitlines()
    assert lines[0] == "profile_id,members,share_pct,day_share,night_share,peak_share,label"
    assert len(lines) == 6
