import numpy as np
import pytest
from sample_data import ARCHETYPES
from sample_data import Cohort
from sample_data import make_cohort

from meter_profiles.clustering import ClusterModel
from meter_profiles.clustering import assign_full
from meter_profiles.clustering import kmeans_fit


@pytest.fixture(name="cohort", scope="session")
def cohort_() -> Cohort:
    return make_cohort()


@pytest.fixture(name="cohort_model", scope="session")
def cohort_model_(cohort: Cohort) -> ClusterModel:
    return kmeans_fit([u.profile() for u in cohort.users], 5, seed=42, restarts=10)


@pytest.fixture(name="archetype_clusters", scope="session")
def archetype_clusters_(cohort: Cohort, cohort_model: ClusterModel) -> dict[int, int]:
    """
    Cluster id holding most users of each archetype.
    """
    clusters = {}
    for label in range(len(ARCHETYPES)):
        assigned = [assign_full(u.profile(), cohort_model) for u in cohort.of_archetype(label)]
        clusters[label] = max(set(assigned), key=assigned.count)
    return clusters


@pytest.fixture(name="simple_model")
def simple_model_() -> ClusterModel:
    """
    Two flat profiles: one day-only, one night-only.
    """
    day = np.zeros((12, 3))
    day[:, 0] = 1 / 12
    night = np.zeros((12, 3))
    night[:, 1] = 1 / 12
    return ClusterModel(
        k=2,
        centroids=[day.ravel(), night.ravel()],
        seed=42,
        restarts=10,
        inertia=0.0,
        silhouette=0.0,
        member_counts=[1, 1],
    )
