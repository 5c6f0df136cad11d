# mypy: disallow-untyped-defs
"""
Back-filling of missing months from the nearest consumption profile.

The user is matched to the closest profile over the months it observed, the missing months
take that profile's ratios, and the ratios are scaled by the user's actual consumption.
"""

import enum
import logging
from collections.abc import Iterable
from collections.abc import Mapping
from collections.abc import Sequence
from pathlib import Path

import attr
import numpy as np
import pandas as pd

from meter_profiles.clustering import ClusterModel
from meter_profiles.clustering import assign_partial
from meter_profiles.features import SLOTS
from meter_profiles.features import SlotUsage
from meter_profiles.features import observed_mask
from meter_profiles.features import ratio_vector
from meter_profiles.features import usage_matrix
from meter_profiles.ingest import MONTHS_IN_WINDOW


logger = logging.getLogger(__name__)

# Below this centroid mass over the observed months the scale estimate is meaningless.
MIN_CENTROID_MASS = 1e-9
# Back-filling accuracy was only assessed up to this many missing months.
VALIDATED_MISSING_MONTHS = 6

COMPLETED_COLUMNS = ("mprn", "month_index", "slot", "kwh", "imputed", "cluster_id", "scale_kwh")


class ScaleMode(enum.Enum):
    # One annual-total estimate over all observed (month, slot) cells.
    JOINT = "joint"
    # One estimate per slot.
    PER_SLOT = "per_slot"


class BackfillError(ValueError):
    """
    Raised when a user's missing months cannot be estimated.
    """


@attr.s(auto_attribs=True, frozen=True)
class BackfillResult:
    """
    Twelve months of slot usage where the missing months were imputed from a profile.
    """

    completed: tuple[SlotUsage, ...] = attr.ib(converter=tuple)
    # True where the month was imputed.
    filled_mask: tuple[bool, ...] = attr.ib(converter=tuple)
    cluster_id: int
    # Estimated annual consumption, the observed kWh over the profile's mass on those months.
    scale_kwh: float
    scale_mode: ScaleMode = ScaleMode.JOINT
    # Day, night and peak estimates when scaling per slot.
    slot_scales: tuple[float, float, float] | None = None

    def __attrs_post_init__(self) -> None:
        if len(self.completed) != MONTHS_IN_WINDOW or len(self.filled_mask) != MONTHS_IN_WINDOW:
            raise ValueError("A back-fill result covers exactly 12 months")
        if [u.month_index for u in self.completed] != list(range(MONTHS_IN_WINDOW)):
            raise ValueError("Completed usage must be ordered by month")
        if not self.scale_kwh > 0:
            raise ValueError(f"Scale must be positive, got {self.scale_kwh}")

    @property
    def missing_months(self) -> int:
        return sum(self.filled_mask)

    @property
    def annual_kwh(self) -> float:
        return sum(u.total for u in self.completed)

    @property
    def imputed(self) -> list[SlotUsage]:
        return [u for u, filled in zip(self.completed, self.filled_mask) if filled]


def backfill(
    usages: Sequence[SlotUsage],
    model: ClusterModel,
    *,
    scale_mode: ScaleMode = ScaleMode.JOINT,
    cluster_id: int | None = None,
    renormalize: bool = True,
) -> BackfillResult:
    """
    Completes a user's observed months to the full window.

    :param usages:
        Slot usage of the observed months (at least one).

    :param cluster_id:
        Profile to back-fill from; by default the nearest profile over the observed months.

    :param renormalize:
        Passed to `assign_partial` when choosing the profile.

    :raises BackfillError:
        With no observed month, no observed consumption, or a profile with no mass over the
        observed months.
    """
    if not usages:
        raise BackfillError("Cannot back-fill a user with no observed months")
    matrix = usage_matrix(usages)
    observed = np.asarray(observed_mask(usages))
    total = float(matrix.sum())
    if not total > 0:
        raise BackfillError("Cannot back-fill a user with zero observed consumption")

    if cluster_id is None:
        cluster_id = assign_partial(ratio_vector(usages), model, renormalize=renormalize)
    elif not 0 <= cluster_id < model.k:
        raise BackfillError(f"Profile {cluster_id} does not exist in a model with k={model.k}")

    centroid = model.centroid_array[cluster_id].reshape(MONTHS_IN_WINDOW, len(SLOTS))
    mass = float(centroid[observed].sum())
    if mass < MIN_CENTROID_MASS:
        raise BackfillError(
            f"Profile {cluster_id} has no consumption over the observed months (mass {mass})"
        )
    scale = total / mass

    slot_scales = None
    scales = np.full(len(SLOTS), scale)
    if scale_mode is ScaleMode.PER_SLOT:
        slot_mass = centroid[observed].sum(axis=0)
        slot_total = matrix[observed].sum(axis=0)
        for index, slot in enumerate(SLOTS):
            if slot_mass[index] < MIN_CENTROID_MASS:
                logger.debug(f"profile {cluster_id}: no {slot.value} mass, using the joint scale")
            else:
                scales[index] = slot_total[index] / slot_mass[index]
        slot_scales = (float(scales[0]), float(scales[1]), float(scales[2]))

    by_month = {u.month_index: u for u in usages}
    completed = []
    for month in range(MONTHS_IN_WINDOW):
        if month in by_month:
            completed.append(by_month[month])
        else:
            completed.append(SlotUsage.from_values(month, centroid[month] * scales))

    missing = MONTHS_IN_WINDOW - len(by_month)
    if missing > VALIDATED_MISSING_MONTHS:
        logger.info(f"{missing} missing months exceed the {VALIDATED_MISSING_MONTHS} validated")
    return BackfillResult(
        completed=completed,
        filled_mask=(not flag for flag in observed),
        cluster_id=cluster_id,
        scale_kwh=scale,
        scale_mode=scale_mode,
        slot_scales=slot_scales,
    )


def write_completed_csv(results: Mapping[str, BackfillResult], path: Path) -> None:
    rows = []
    for mprn, result in results.items():
        for usage, filled in zip(result.completed, result.filled_mask):
            for slot in SLOTS:
                rows.append(
                    (
                        mprn,
                        usage.month_index,
                        slot.value,
                        usage.kwh(slot),
                        int(filled),
                        result.cluster_id,
                        result.scale_kwh,
                    )
                )
    pd.DataFrame(rows, columns=list(COMPLETED_COLUMNS)).to_csv(path, index=False)


def read_completed_csv(path: Path) -> dict[str, list[SlotUsage]]:
    """
    Reads the monthly slot usage of each meter from a completed-usage CSV.
    """
    frame = pd.read_csv(path, dtype={"mprn": str}, float_precision="round_trip")
    completed = {}
    for mprn, group in frame.groupby("mprn", sort=True):
        completed[str(mprn)] = _usages_from_rows(
            zip(group["month_index"], group["slot"], group["kwh"])
        )
    return completed


def _usages_from_rows(rows: Iterable[tuple[int, str, float]]) -> list[SlotUsage]:
    values: dict[int, dict[str, float]] = {}
    for month, slot, kwh in rows:
        values.setdefault(int(month), {})[slot] = float(kwh)
    return [
        SlotUsage.from_values(month, [values[month][slot.value] for slot in SLOTS])
        for month in sorted(values)
    ]
