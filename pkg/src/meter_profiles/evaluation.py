# mypy: disallow-untyped-defs
"""
Accuracy of back-filling: SMAPE, duration-weighted SMAPE and the month-removal holdout.
"""

import logging
import math
from collections.abc import Mapping
from collections.abc import Sequence
from pathlib import Path

import attr
import numpy as np
import pandas as pd

from meter_profiles.backfill import BackfillError
from meter_profiles.backfill import ScaleMode
from meter_profiles.backfill import VALIDATED_MISSING_MONTHS
from meter_profiles.backfill import backfill
from meter_profiles.clustering import ClusterModel
from meter_profiles.clustering import assign_partial
from meter_profiles.features import SLOT_HOURS
from meter_profiles.features import SLOTS
from meter_profiles.features import Slot
from meter_profiles.features import SlotUsage
from meter_profiles.features import ratio_vector
from meter_profiles.features import usage_matrix
from meter_profiles.ingest import MONTHS_IN_WINDOW


logger = logging.getLogger(__name__)

HOLDOUT_COLUMNS = ("user", "profile_id", "removed_months", "weighted_smape_pct", "assigned")
HOURS_PER_DAY = sum(SLOT_HOURS.values())


class SmapeInputError(ValueError):
    """
    Raised when SMAPE operands are empty, of different lengths or negative.
    """


class NotFullyObservedError(ValueError):
    def __init__(self, observed_months: Sequence[int]) -> None:
        self.observed_months = list(observed_months)
        ValueError.__init__(
            self,
            f"The holdout needs all 12 months observed, got {len(self.observed_months)}: "
            f"{self.observed_months}",
        )


def smape(forecast: Sequence[float] | np.ndarray, actual: Sequence[float] | np.ndarray) -> float:
    """
    Symmetric mean absolute percentage error, in percent within [0, 100]:

        100/n * sum(|F - A| / (|A| + |F|))

    A point where forecast and actual are both 0 contributes 0.

    :raises SmapeInputError:
    """
    f = np.asarray(forecast, dtype=float)
    a = np.asarray(actual, dtype=float)
    if f.size == 0 or a.size == 0:
        raise SmapeInputError("SMAPE needs at least one point")
    if f.shape != a.shape:
        raise SmapeInputError(f"SMAPE operands differ in length: {f.size} and {a.size}")
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(a))):
        raise SmapeInputError("SMAPE operands must be finite")
    if np.any(f < 0) or np.any(a < 0):
        raise SmapeInputError("SMAPE operands must be non-negative")

    denominator = np.abs(a) + np.abs(f)
    terms = np.divide(
        np.abs(f - a), denominator, out=np.zeros_like(denominator), where=denominator > 0
    )
    return float(100.0 * terms.mean())


def weighted_smape(day: float, night: float, peak: float) -> float:
    """
    Combines slot SMAPEs weighted by the hours of each slot in a day (13, 9 and 2).
    """
    by_slot = {Slot.DAY: day, Slot.NIGHT: night, Slot.PEAK: peak}
    return sum(SLOT_HOURS[slot] * by_slot[slot] for slot in SLOTS) / HOURS_PER_DAY


@attr.s(auto_attribs=True, frozen=True)
class SmapeReport:
    per_slot: Mapping[Slot, float]
    weighted: float
    # Points compared in each slot.
    n_points: int


def smape_report(forecast: Sequence[SlotUsage], actual: Sequence[SlotUsage]) -> SmapeReport:
    """
    Per-slot and weighted SMAPE over the (month, slot) cells of the given months.

    :raises SmapeInputError:
        When forecast and actual do not cover the same months.
    """
    months = [u.month_index for u in actual]
    if sorted(u.month_index for u in forecast) != sorted(months):
        raise SmapeInputError(
            f"Forecast months {[u.month_index for u in forecast]} differ from actual {months}"
        )
    if not months:
        raise SmapeInputError("SMAPE needs at least one month")
    f = usage_matrix(forecast)[months]
    a = usage_matrix(actual)[months]
    per_slot = {slot: smape(f[:, index], a[:, index]) for index, slot in enumerate(SLOTS)}
    return SmapeReport(
        per_slot=per_slot,
        weighted=weighted_smape(per_slot[Slot.DAY], per_slot[Slot.NIGHT], per_slot[Slot.PEAK]),
        n_points=len(months),
    )


def _cells_tuple(rows: Sequence[Sequence[float]]) -> tuple[tuple[float, ...], ...]:
    return tuple(tuple(float(v) for v in row) for row in rows)


@attr.s(auto_attribs=True, frozen=True)
class HoldoutMatrix:
    """
    Weighted SMAPE of back-filling one user from every profile, for 1..N removed months.

    `cells[profile][removed - 1]` is NaN when back-filling from that profile was impossible.
    """

    user: str
    cells: tuple[tuple[float, ...], ...] = attr.ib(converter=_cells_tuple, eq=False)
    # Freely assigned profile for each number of removed months.
    assigned: tuple[int, ...] = attr.ib(converter=tuple)

    @property
    def k(self) -> int:
        return len(self.cells)

    @property
    def max_removed(self) -> int:
        return len(self.assigned)

    def cell(self, profile: int, removed: int) -> float:
        return self.cells[profile][removed - 1]

    def column(self, removed: int) -> np.ndarray:
        return np.asarray([row[removed - 1] for row in self.cells])

    def assigned_smape(self, removed: int) -> float:
        return self.cell(self.assigned[removed - 1], removed)

    def best_profile(self, removed: int) -> int:
        return int(np.nanargmin(self.column(removed)))

    def assigned_is_best(self, removed: int) -> bool:
        value = self.assigned_smape(removed)
        return not math.isnan(value) and bool(value <= np.nanmin(self.column(removed)))


def holdout_eval(
    full_user: Sequence[SlotUsage],
    model: ClusterModel,
    max_removed: int = VALIDATED_MISSING_MONTHS,
    *,
    user: str = "",
    scale_mode: ScaleMode = ScaleMode.JOINT,
    renormalize: bool = True,
) -> HoldoutMatrix:
    """
    Removes the 1..max_removed oldest months of a fully observed user and back-fills them
    from every profile, scoring the imputed months against the actual ones.

    :raises NotFullyObservedError:
    :raises DegenerateProfileError:
        When the months kept after a removal hold no consumption at all.
    """
    months = sorted(u.month_index for u in full_user)
    if months != list(range(MONTHS_IN_WINDOW)):
        raise NotFullyObservedError(months)
    if not 1 <= max_removed <= VALIDATED_MISSING_MONTHS:
        raise ValueError(
            f"Removed months must be within 1-{VALIDATED_MISSING_MONTHS}, got {max_removed}"
        )

    ordered = sorted(full_user, key=lambda u: u.month_index)
    cells = np.full((model.k, max_removed), np.nan)
    assigned = []
    for removed in range(1, max_removed + 1):
        held_out = ordered[:removed]
        kept = ordered[removed:]
        assigned.append(assign_partial(ratio_vector(kept), model, renormalize=renormalize))
        for profile in range(model.k):
            try:
                result = backfill(kept, model, scale_mode=scale_mode, cluster_id=profile)
            except BackfillError as e:
                logger.debug(f"{user}: profile {profile + 1}, {removed} removed: {e}")
                continue
            cells[profile, removed - 1] = smape_report(result.imputed, held_out).weighted
    return HoldoutMatrix(user=user, cells=cells, assigned=assigned)


def assignment_accuracy(matrices: Sequence[HoldoutMatrix]) -> float:
    """
    Fraction of (user, removed months) cells where the assigned profile scores best.
    """
    outcomes = [m.assigned_is_best(d) for m in matrices for d in range(1, m.max_removed + 1)]
    if not outcomes:
        raise ValueError("No holdout cells to score")
    return sum(outcomes) / len(outcomes)


def mean_assigned_smape(matrices: Sequence[HoldoutMatrix]) -> dict[int, float]:
    """
    Mean weighted SMAPE of the assigned profile over users, per number of removed months.
    """
    if not matrices:
        return {}
    durations = min(m.max_removed for m in matrices)
    return {
        removed: float(np.nanmean([m.assigned_smape(removed) for m in matrices]))
        for removed in range(1, durations + 1)
    }


def user_average(matrix: HoldoutMatrix) -> float:
    return float(
        np.nanmean([matrix.assigned_smape(d) for d in range(1, matrix.max_removed + 1)])
    )


def write_holdout_csv(matrices: Sequence[HoldoutMatrix], path: Path) -> None:
    rows = [
        (
            matrix.user,
            profile + 1,
            removed,
            matrix.cell(profile, removed),
            int(matrix.assigned[removed - 1] == profile),
        )
        for matrix in matrices
        for profile in range(matrix.k)
        for removed in range(1, matrix.max_removed + 1)
    ]
    pd.DataFrame(rows, columns=list(HOLDOUT_COLUMNS)).to_csv(path, index=False)
