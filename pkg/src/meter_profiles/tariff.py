# mypy: disallow-untyped-defs
"""
Fixed and Time-of-Use tariff plans and the annual bills they produce.

Tariffs are read from a curated CSV:

    supplier,plan_name,kind,rate_day,rate_night,rate_peak,standing_urban,standing_rural
    Acme,Std,Fixed,0.35,0.35,0.35,300,320
    Acme,NightSaver,DayNight,0.38,0.21,0.38,300,320

Rates are tax-inclusive EUR/kWh, standing charges EUR/year.
"""

import csv
import enum
import io
import logging
from collections.abc import Sequence
from decimal import Decimal
from decimal import InvalidOperation
from decimal import ROUND_HALF_UP
from pathlib import Path

import attr
import pandas as pd

from meter_profiles.features import SLOTS
from meter_profiles.features import Slot
from meter_profiles.features import SlotUsage
from meter_profiles.features import usage_matrix
from meter_profiles.ingest import Diagnostic
from meter_profiles.ingest import MONTHS_IN_WINDOW


logger = logging.getLogger(__name__)

TARIFF_HEADER = (
    "supplier",
    "plan_name",
    "kind",
    "rate_day",
    "rate_night",
    "rate_peak",
    "standing_urban",
    "standing_rural",
)
BILL_COLUMNS = (
    "supplier",
    "plan_name",
    "kind",
    "locality",
    "energy_eur",
    "standing_eur",
    "total_eur",
)
CENT = Decimal("0.01")


class PlanKind(enum.Enum):
    FIXED = "Fixed"
    DAY_NIGHT = "DayNight"
    SMART_TOU = "SmartToU"

    @property
    def is_time_of_use(self) -> bool:
        return self is not PlanKind.FIXED


class Locality(enum.Enum):
    URBAN = "Urban"
    RURAL = "Rural"


class TariffPlanError(ValueError):
    """
    Raised when a plan's rates break the rules of its kind.
    """

    def __init__(self, plan_name: str, reason: str) -> None:
        self.plan_name = plan_name
        self.reason = reason
        ValueError.__init__(self, f'Plan "{plan_name}": {reason}')


class TariffParseError(ValueError):
    """
    Raised when a tariff file has problems; collects every problem found.

    :ivar source:
        Name of the file being parsed.

    :ivar errors:
        One diagnostic per problem, with its line number.
    """

    def __init__(self, source: str, errors: Sequence[Diagnostic]) -> None:
        self.source = source
        self.errors = list(errors)
        ValueError.__init__(
            self,
            f"{source}: {len(self.errors)} tariff error(s):\n"
            + "\n".join(f"- {e}" for e in self.errors),
        )


class IncompleteUsageError(ValueError):
    def __init__(self, months: Sequence[int]) -> None:
        self.months = list(months)
        ValueError.__init__(
            self, f"Annual bills need all 12 months of usage, got months {self.months}"
        )


class NoTariffPlansError(ValueError):
    def __init__(self) -> None:
        ValueError.__init__(self, "No tariff plans to compare")


@attr.s(auto_attribs=True, frozen=True)
class TariffPlan:
    supplier: str
    plan_name: str
    kind: PlanKind
    rate_day: Decimal
    rate_night: Decimal
    rate_peak: Decimal
    standing_urban: Decimal
    standing_rural: Decimal

    def __attrs_post_init__(self) -> None:
        rates = (self.rate_day, self.rate_night, self.rate_peak)
        if any(rate <= 0 for rate in rates):
            raise TariffPlanError(self.plan_name, "rates must be positive")
        if self.standing_urban < 0 or self.standing_rural < 0:
            raise TariffPlanError(self.plan_name, "standing charges must not be negative")
        if self.kind is PlanKind.FIXED and len(set(rates)) != 1:
            raise TariffPlanError(self.plan_name, "a Fixed plan has a single rate for every slot")
        if self.kind is PlanKind.DAY_NIGHT and self.rate_peak != self.rate_day:
            raise TariffPlanError(self.plan_name, "a DayNight plan bills peak at the day rate")

    def rate(self, slot: Slot) -> Decimal:
        rates = {Slot.DAY: self.rate_day, Slot.NIGHT: self.rate_night, Slot.PEAK: self.rate_peak}
        return rates[slot]

    def standing(self, locality: Locality) -> Decimal:
        if locality is Locality.URBAN:
            return self.standing_urban
        return self.standing_rural


def parse_tariffs(text: str, *, source: str = "<text>") -> list[TariffPlan]:
    """
    Parses a tariff CSV; a file with only the header yields no plans.

    :raises TariffParseError:
        Listing every malformed row, invalid plan and duplicated plan with its line number.
    """
    reader = csv.reader(io.StringIO(text.lstrip("\ufeff")))
    header = next(reader, None)
    if header is None or tuple(cell.strip() for cell in header) != TARIFF_HEADER:
        raise TariffParseError(
            source, [Diagnostic(f'expected header "{",".join(TARIFF_HEADER)}"', line=1)]
        )

    plans = []
    errors = []
    seen: dict[tuple[str, str], int] = {}
    for row in reader:
        if not any(cell.strip() for cell in row):
            continue
        line = reader.line_num
        try:
            plan = _parse_plan(row)
        except (TariffPlanError, _PlanRowError) as e:
            errors.append(Diagnostic(str(e), line=line))
            continue
        key = (plan.supplier, plan.plan_name)
        if key in seen:
            errors.append(
                Diagnostic(f"duplicate plan {plan.supplier}/{plan.plan_name}", line=line)
            )
            continue
        seen[key] = line
        plans.append(plan)

    if errors:
        raise TariffParseError(source, errors)
    logger.info(f"{source}: {len(plans)} tariff plans")
    return plans


class _PlanRowError(Exception):
    pass


def _parse_plan(row: Sequence[str]) -> TariffPlan:
    if len(row) != len(TARIFF_HEADER):
        raise _PlanRowError(f"expected {len(TARIFF_HEADER)} fields, got {len(row)}")
    cells = [cell.strip() for cell in row]
    supplier, plan_name, kind_text = cells[:3]
    if not supplier or not plan_name:
        raise _PlanRowError("supplier and plan_name are required")
    try:
        kind = PlanKind(kind_text)
    except ValueError:
        raise _PlanRowError(
            f"bad kind {kind_text!r}, expected one of {', '.join(k.value for k in PlanKind)}"
        )
    amounts = []
    for name, cell in zip(TARIFF_HEADER[3:], cells[3:]):
        try:
            amount = Decimal(cell)
        except InvalidOperation:
            raise _PlanRowError(f"bad {name} {cell!r}")
        if not amount.is_finite():
            raise _PlanRowError(f"bad {name} {cell!r}")
        amounts.append(amount)
    return TariffPlan(supplier, plan_name, kind, *amounts)


@attr.s(auto_attribs=True, frozen=True)
class BillEstimate:
    plan: TariffPlan
    locality: Locality
    energy_cost: Decimal
    standing_cost: Decimal
    # Annual day, night and peak kWh the bill was computed from.
    per_slot_kwh: tuple[float, float, float]

    @property
    def total(self) -> Decimal:
        return (self.energy_cost + self.standing_cost).quantize(CENT, rounding=ROUND_HALF_UP)

    @property
    def sort_key(self) -> tuple[Decimal, str, str]:
        return self.total, self.plan.supplier, self.plan.plan_name


def _kwh_decimal(kwh: float) -> Decimal:
    # repr() is the shortest text that reads back to the float.
    return Decimal(repr(float(kwh)))


def annual_bill(
    completed: Sequence[SlotUsage], plan: TariffPlan, locality: Locality
) -> BillEstimate:
    """
    Estimates a year of bills from 12 months of (possibly back-filled) usage.

    Amounts are exact decimals; only the total is rounded, half-up to the cent.

    :raises IncompleteUsageError:
    """
    months = sorted(u.month_index for u in completed)
    if months != list(range(MONTHS_IN_WINDOW)):
        raise IncompleteUsageError(months)
    slot_kwh = usage_matrix(completed).sum(axis=0)
    per_slot = (float(slot_kwh[0]), float(slot_kwh[1]), float(slot_kwh[2]))
    energy = sum(
        (plan.rate(slot) * _kwh_decimal(kwh) for slot, kwh in zip(SLOTS, per_slot)), Decimal(0)
    )
    return BillEstimate(
        plan=plan,
        locality=locality,
        energy_cost=energy,
        standing_cost=plan.standing(locality),
        per_slot_kwh=per_slot,
    )


def rank_plans(
    completed: Sequence[SlotUsage], plans: Sequence[TariffPlan], locality: Locality
) -> list[BillEstimate]:
    """
    Bills for every plan, cheapest first; equal totals are ordered by supplier and plan name.

    :raises NoTariffPlansError:
    """
    if not plans:
        raise NoTariffPlansError()
    return sorted(
        (annual_bill(completed, plan, locality) for plan in plans), key=lambda e: e.sort_key
    )


def cheapest_by_kind(estimates: Sequence[BillEstimate]) -> dict[PlanKind, BillEstimate]:
    cheapest: dict[PlanKind, BillEstimate] = {}
    for estimate in sorted(estimates, key=lambda e: e.sort_key):
        cheapest.setdefault(estimate.plan.kind, estimate)
    return cheapest


def tou_saving(estimates: Sequence[BillEstimate]) -> Decimal | None:
    """
    EUR saved per year by the cheapest Time-of-Use plan over the cheapest Fixed plan.

    Negative when a Fixed plan is cheaper; None when either kind is missing.
    """
    fixed = [e.total for e in estimates if e.plan.kind is PlanKind.FIXED]
    tou = [e.total for e in estimates if e.plan.kind.is_time_of_use]
    if not fixed or not tou:
        return None
    return min(fixed) - min(tou)


def write_bill_report(estimates: Sequence[BillEstimate], path: Path) -> None:
    rows = [
        (
            e.plan.supplier,
            e.plan.plan_name,
            e.plan.kind.value,
            e.locality.value,
            str(e.energy_cost.quantize(CENT, rounding=ROUND_HALF_UP)),
            str(e.standing_cost.quantize(CENT, rounding=ROUND_HALF_UP)),
            str(e.total),
        )
        for e in estimates
    ]
    pd.DataFrame(rows, columns=list(BILL_COLUMNS)).to_csv(path, index=False)
