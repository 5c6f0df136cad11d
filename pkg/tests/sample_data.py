"""
Synthetic cohorts and half-hourly readings shared by the tests.
"""

from datetime import datetime
from decimal import Decimal

import attr
import numpy as np

from meter_profiles.features import SlotUsage
from meter_profiles.features import UserFeatures
from meter_profiles.ingest import INTERVAL
from meter_profiles.ingest import RawReading
from meter_profiles.ingest import ReadType
from meter_profiles.ingest import format_hdf


# Slot shares (day, night, peak) and seasonal amplitudes of each archetype; month 0 is May and
# a positive amplitude peaks in January.
ARCHETYPES = {
    "day_winter": ((0.65, 0.25, 0.10), (0.6, 0.6, 0.6)),
    "night_flat": ((0.25, 0.70, 0.05), (0.0, 0.0, 0.0)),
    "night_winter": ((0.25, 0.70, 0.05), (0.9, 0.9, 0.9)),
    "night_summer": ((0.25, 0.70, 0.05), (-0.9, -0.9, -0.9)),
    "balanced": ((0.48, 0.44, 0.08), (0.0, 0.0, 0.0)),
}
USERS_PER_ARCHETYPE = 20
NOISE_SIGMA = 0.1
COHORT_SEED = 1234


def archetype_ratios(name):
    """
    12x3 ratios of an archetype, summing to 1.
    """
    shares, amplitudes = ARCHETYPES[name]
    season = np.cos(2 * np.pi * (np.arange(12) - 8) / 12)
    return (
        np.asarray(shares)[np.newaxis, :]
        * (1 + np.asarray(amplitudes)[np.newaxis, :] * season[:, np.newaxis])
        / 12
    )


def usages_from_matrix(matrix, months=range(12)):
    return [SlotUsage.from_values(m, matrix[m]) for m in months]


@attr.s(auto_attribs=True, frozen=True)
class Cohort:
    users: list
    # Index of the generating archetype of each user.
    labels: list

    def of_archetype(self, label):
        return [u for u, lbl in zip(self.users, self.labels) if lbl == label]


def make_cohort(seed=COHORT_SEED):
    rng = np.random.default_rng(seed)
    users = []
    labels = []
    for label, name in enumerate(ARCHETYPES):
        ratios = archetype_ratios(name)
        for i in range(USERS_PER_ARCHETYPE):
            annual_kwh = rng.uniform(3000, 9000)
            noise = rng.lognormal(0.0, NOISE_SIGMA, size=ratios.shape)
            mprn = str(10000000000 + label * 100 + i)
            users.append(UserFeatures(mprn, usages_from_matrix(ratios * annual_kwh * noise)))
            labels.append(label)
    return Cohort(users, labels)


def synthetic_readings(mprn, start, intervals, *, seed=7, export=False):
    """
    Half-hourly Import readings (and optionally Export) stamped at the end of each interval
    following `start`.
    """
    rng = np.random.default_rng(seed)
    readings = []
    for i in range(intervals):
        timestamp = start + INTERVAL * (i + 1)
        value = Decimal(f"{rng.uniform(0.05, 2.5):.3f}")
        readings.append(RawReading(mprn, value, ReadType.IMPORT, timestamp))
        if export:
            readings.append(RawReading(mprn, Decimal("0.000"), ReadType.EXPORT, timestamp))
    return readings


def synthetic_hdf(mprn="10000000000", start=datetime(2023, 5, 1), days=365, **kwargs):
    return format_hdf(synthetic_readings(mprn, start, days * 48, **kwargs))
