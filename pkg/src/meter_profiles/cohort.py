# mypy: disallow-untyped-defs
"""
Descriptive statistics of a cohort of meters, for the `report` command.
"""

import logging
from collections.abc import Sequence
from pathlib import Path

import attr
import numpy as np
import pandas as pd

from meter_profiles.clustering import ClusterModel
from meter_profiles.features import DegenerateProfileError
from meter_profiles.features import SLOTS
from meter_profiles.features import SlotUsage
from meter_profiles.features import UserFeatures
from meter_profiles.features import usage_matrix
from meter_profiles.ingest import AnalysisWindow
from meter_profiles.ingest import MONTHS_IN_WINDOW


logger = logging.getLogger(__name__)

# Typical annual consumption of an Irish household, in kWh.
TYPICAL_ANNUAL_KWH = 4200.0
# Night and day shares closer than this describe a balanced profile.
BALANCED_MARGIN = 0.05

_DURATION_BUCKETS = (
    ("12 months", lambda months: months == MONTHS_IN_WINDOW),
    ("> 9 months", lambda months: months > 9),
    ("> 6 months", lambda months: months > 6),
    ("> 2 months", lambda months: months > 2),
    (">= 1 month", lambda months: months >= 1),
)


@attr.s(auto_attribs=True, frozen=True)
class DurationRow:
    label: str
    count: int
    percent: float


def duration_distribution(observed_months: Sequence[int]) -> list[DurationRow]:
    """
    How many users have at least a given number of usable months; buckets are cumulative.
    """
    users = len(observed_months)
    rows = []
    for label, predicate in _DURATION_BUCKETS:
        count = sum(1 for months in observed_months if predicate(months))
        rows.append(DurationRow(label, count, 100.0 * count / users if users else 0.0))
    return rows


@attr.s(auto_attribs=True, frozen=True)
class AnnualSummary:
    count: int
    mean: float
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    # Users consuming more than the typical annual figure.
    above_typical: int


def annual_summary(totals: Sequence[float]) -> AnnualSummary:
    if not totals:
        raise ValueError("Cannot summarize an empty cohort")
    values = np.asarray(totals, dtype=float)
    q1, median, q3 = np.percentile(values, [25, 50, 75])
    return AnnualSummary(
        count=len(values),
        mean=float(values.mean()),
        minimum=float(values.min()),
        q1=float(q1),
        median=float(median),
        q3=float(q3),
        maximum=float(values.max()),
        above_typical=int((values > TYPICAL_ANNUAL_KWH).sum()),
    )


def slot_shares(usages: Sequence[SlotUsage]) -> tuple[float, float, float]:
    """
    Day, night and peak fractions of a user's consumption.
    """
    per_slot = usage_matrix(usages).sum(axis=0)
    total = per_slot.sum()
    if not total > 0:
        raise DegenerateProfileError(float(total))
    day, night, peak = per_slot / total
    return float(day), float(night), float(peak)


def monthly_average(users: Sequence[UserFeatures]) -> list[tuple[float, int]]:
    """
    Mean monthly consumption over the users observing each month, with their number.

    The mean is NaN for a month no user observed.
    """
    sums = np.zeros(MONTHS_IN_WINDOW)
    counts = np.zeros(MONTHS_IN_WINDOW, dtype=int)
    for user in users:
        for usage in user.usages:
            sums[usage.month_index] += usage.total
            counts[usage.month_index] += 1
    means = np.divide(sums, counts, out=np.full(MONTHS_IN_WINDOW, np.nan), where=counts > 0)
    return [(float(mean), int(count)) for mean, count in zip(means, counts)]


def _centroid_shares(centroid: Sequence[float]) -> np.ndarray:
    matrix = np.asarray(centroid, dtype=float).reshape(MONTHS_IN_WINDOW, len(SLOTS))
    per_slot = matrix.sum(axis=0)
    return per_slot / per_slot.sum()


def describe_profile(centroid: Sequence[float]) -> str:
    """
    "day", "night" or "balanced", from the centroid's share of day and night consumption.
    """
    day, night, _ = _centroid_shares(centroid)
    if abs(night - day) <= BALANCED_MARGIN:
        return "balanced"
    return "night" if night > day else "day"


@attr.s(auto_attribs=True, frozen=True)
class ProfileSummary:
    # 1-based, as shown to users.
    profile_id: int
    members: int
    share_pct: float
    day_share: float
    night_share: float
    peak_share: float
    label: str


def profile_summary(model: ClusterModel) -> list[ProfileSummary]:
    training_size = model.training_size
    summaries = []
    for cluster_id, (centroid, members) in enumerate(zip(model.centroids, model.member_counts)):
        day, night, peak = _centroid_shares(centroid)
        summaries.append(
            ProfileSummary(
                profile_id=cluster_id + 1,
                members=members,
                share_pct=100.0 * members / training_size if training_size else 0.0,
                day_share=float(day),
                night_share=float(night),
                peak_share=float(peak),
                label=describe_profile(centroid),
            )
        )
    return summaries


def write_durations_csv(rows: Sequence[DurationRow], path: Path) -> None:
    frame = pd.DataFrame([attr.astuple(r) for r in rows], columns=["duration", "users", "percent"])
    frame.to_csv(path, index=False)


def write_annual_csv(summary: AnnualSummary, path: Path) -> None:
    # object dtype keeps the counts integral next to the float statistics.
    frame = pd.DataFrame(
        list(attr.asdict(summary).items()), columns=["statistic", "value"], dtype=object
    )
    frame.to_csv(path, index=False)


def write_monthly_csv(
    averages: Sequence[tuple[float, int]], window: AnalysisWindow, path: Path
) -> None:
    rows = [
        (month, window.month_start(month).date().isoformat(), mean, users)
        for month, (mean, users) in enumerate(averages)
    ]
    frame = pd.DataFrame(rows, columns=["month_index", "month_start", "mean_kwh", "users"])
    frame.to_csv(path, index=False)


def write_profiles_csv(summaries: Sequence[ProfileSummary], path: Path) -> None:
    columns = [f.name for f in attr.fields(ProfileSummary)]
    pd.DataFrame([attr.astuple(s) for s in summaries], columns=columns).to_csv(path, index=False)
