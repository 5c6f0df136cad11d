# mypy: disallow-untyped-defs
"""
K-means clustering of 36-ratio profile vectors into consumption profiles.

Cluster ids are 0-based and canonical: after fitting, clusters are ordered by descending
member count (ties broken by the lexicographic order of the centroids), so cluster 0 is the
most prevalent profile.
"""

import json
import logging
from collections.abc import Iterable
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import attr
import numpy as np
import pandas as pd
from sklearn.cluster import KMeans
from sklearn.metrics import silhouette_samples

from meter_profiles.features import PROFILE_SIZE
from meter_profiles.features import ProfileVector


logger = logging.getLogger(__name__)

DEFAULT_SEED = 42
DEFAULT_RESTARTS = 10
MAX_ITERATIONS = 300
CENTROID_SUM_TOLERANCE = 1e-6
SILHOUETTE_TOLERANCE = 0.01

ELBOW_COLUMNS = ("k", "inertia", "silhouette", "selected")


class DimensionMismatchError(ValueError):
    def __init__(self, expected: int, obtained: int) -> None:
        self.expected = expected
        self.obtained = obtained
        ValueError.__init__(self, f"Dimension mismatch: expected {expected}, got {obtained}")


class NotEnoughProfilesError(ValueError):
    """
    Raised when fitting more clusters than there are profiles, or distinct profiles.
    """

    def __init__(self, count: int, k: int, *, distinct: bool = False) -> None:
        self.count = count
        self.k = k
        self.distinct = distinct
        noun = "distinct profiles" if distinct else "profiles"
        ValueError.__init__(self, f"Cannot fit {k} clusters to {count} {noun}")


class PartialProfileError(ValueError):
    """
    Raised when an operation that needs 12 observed months receives a partial profile.
    """

    def __init__(self, observed_months: int, index: int | None = None) -> None:
        self.observed_months = observed_months
        self.index = index
        where = "" if index is None else f" (profile #{index})"
        ValueError.__init__(
            self, f"Expected a fully observed profile{where}, got {observed_months}/12 months"
        )


class SingleClusterError(ValueError):
    def __init__(self, clusters: int) -> None:
        self.clusters = clusters
        ValueError.__init__(self, f"At least 2 clusters are required, got {clusters}")


class InvalidKRangeError(ValueError):
    """
    Raised when a k range is empty or does not fit in [2, profiles - 1].
    """

    def __init__(self, k_range: tuple[int, int], count: int | None = None) -> None:
        self.k_range = k_range
        self.count = count
        low, high = k_range
        if count is None:
            bounds = "k >= 2"
        else:
            bounds = f"2 <= k <= {count - 1} for {count} profiles"
        ValueError.__init__(self, f"Invalid k range {low}..{high}: expected {bounds}")


class EmptyObservationError(ValueError):
    def __init__(self) -> None:
        ValueError.__init__(self, "Cannot assign a profile with no observed months")


def _centroid_tuple(rows: Iterable[Iterable[float]]) -> tuple[tuple[float, ...], ...]:
    return tuple(tuple(float(v) for v in row) for row in rows)


def _int_tuple(values: Iterable[int]) -> tuple[int, ...]:
    return tuple(int(v) for v in values)


@attr.s(auto_attribs=True, frozen=True)
class ClusterModel:
    """
    k centroids over the 36-ratio profile space plus the diagnostics of the fit.
    """

    k: int
    centroids: tuple[tuple[float, ...], ...] = attr.ib(converter=_centroid_tuple)
    seed: int
    restarts: int
    # Within-cluster sum of squared distances to the centroids.
    inertia: float = attr.ib(converter=float)
    silhouette: float = attr.ib(converter=float)
    member_counts: tuple[int, ...] = attr.ib(converter=_int_tuple)

    def __attrs_post_init__(self) -> None:
        if self.k < 2:
            raise SingleClusterError(self.k)
        if len(self.centroids) != self.k or len(self.member_counts) != self.k:
            raise ValueError(
                f"Expected {self.k} centroids and member counts, "
                f"got {len(self.centroids)} and {len(self.member_counts)}"
            )
        for centroid in self.centroids:
            if len(centroid) != PROFILE_SIZE:
                raise DimensionMismatchError(PROFILE_SIZE, len(centroid))
            if abs(sum(centroid) - 1.0) > CENTROID_SUM_TOLERANCE:
                raise ValueError(f"Centroid entries must sum to 1, got {sum(centroid)}")
        if self.inertia < 0:
            raise ValueError(f"Inertia must be non-negative, got {self.inertia}")
        if not -1.0 <= self.silhouette <= 1.0:
            raise ValueError(f"Silhouette must be within [-1, 1], got {self.silhouette}")
        if any(c < 0 for c in self.member_counts):
            raise ValueError(f"Member counts must be non-negative, got {self.member_counts}")

    @property
    def centroid_array(self) -> np.ndarray:
        return np.asarray(self.centroids, dtype=float)

    @property
    def training_size(self) -> int:
        return sum(self.member_counts)

    def to_json(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "seed": self.seed,
            "restarts": self.restarts,
            "inertia": self.inertia,
            "silhouette": self.silhouette,
            "centroids": [list(c) for c in self.centroids],
            "member_counts": list(self.member_counts),
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "ClusterModel":
        return cls(
            k=int(data["k"]),
            centroids=data["centroids"],
            seed=int(data["seed"]),
            restarts=int(data["restarts"]),
            inertia=data["inertia"],
            silhouette=data["silhouette"],
            member_counts=data["member_counts"],
        )


def save_model(model: ClusterModel, path: Path) -> None:
    # json writes floats with repr(), the shortest text that reads back to the same value.
    path.write_text(json.dumps(model.to_json(), indent=2) + "\n", encoding="utf-8")


def load_model(path: Path) -> ClusterModel:
    return ClusterModel.from_json(json.loads(path.read_text(encoding="utf-8")))


@attr.s(auto_attribs=True, frozen=True)
class KMeansFit:
    centroids: np.ndarray = attr.ib(eq=False)
    labels: np.ndarray = attr.ib(eq=False)
    inertia: float


def euclidean_distance(p: Sequence[float] | np.ndarray, q: Sequence[float] | np.ndarray) -> float:
    p_array = np.asarray(p, dtype=float)
    q_array = np.asarray(q, dtype=float)
    if p_array.shape != q_array.shape:
        raise DimensionMismatchError(len(p_array), len(q_array))
    return float(np.sqrt(np.sum((p_array - q_array) ** 2)))


def _pairwise_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return np.sqrt(((points[:, np.newaxis, :] - centroids[np.newaxis, :, :]) ** 2).sum(axis=2))


def _nearest(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # argmin returns the first minimum: ties go to the lowest cluster id.
    return np.argmin(_pairwise_distances(points, centroids), axis=1)


def fit_kmeans(
    points: np.ndarray,
    k: int,
    *,
    seed: int = DEFAULT_SEED,
    restarts: int = DEFAULT_RESTARTS,
    init: np.ndarray | None = None,
) -> KMeansFit:
    """
    Best-of-restarts Lloyd k-means over arbitrary points, canonically relabeled.

    :param init:
        Initial centroids; when given a single run starts from them instead of "++" seeding.
    """
    points = np.asarray(points, dtype=float)
    if init is None:
        estimator = KMeans(
            n_clusters=k,
            init="k-means++",
            n_init=restarts,
            max_iter=MAX_ITERATIONS,
            tol=0.0,
            random_state=seed,
            algorithm="lloyd",
        )
    else:
        estimator = KMeans(
            n_clusters=k,
            init=np.asarray(init, dtype=float),
            n_init=1,
            max_iter=MAX_ITERATIONS,
            tol=0.0,
            random_state=seed,
            algorithm="lloyd",
        )
    estimator.fit(points)

    centroids = np.asarray(estimator.cluster_centers_, dtype=float)
    counts = np.bincount(estimator.labels_, minlength=k)
    order = sorted(range(k), key=lambda c: (-counts[c], tuple(centroids[c])))
    centroids = centroids[order]
    labels = _nearest(points, centroids)
    inertia = float(((points - centroids[labels]) ** 2).sum())
    return KMeansFit(centroids=centroids, labels=labels, inertia=inertia)


def _as_points(vectors: Sequence[ProfileVector] | np.ndarray) -> np.ndarray:
    if isinstance(vectors, np.ndarray):
        return vectors.astype(float)
    return np.vstack([v.array for v in vectors])


def silhouette_score(vectors: Sequence[ProfileVector] | np.ndarray, labels: Sequence[int]) -> float:
    """
    Mean silhouette over all points; points in singleton clusters contribute 0.

    :raises SingleClusterError:
        When the labels name fewer than 2 clusters.
    """
    points = _as_points(vectors)
    labels_array = np.asarray(labels)
    clusters = len(np.unique(labels_array))
    if clusters < 2:
        raise SingleClusterError(clusters)
    if clusters == len(points):
        return 0.0
    return float(np.mean(silhouette_samples(points, labels_array, metric="euclidean")))


def _check_full(vectors: Sequence[ProfileVector]) -> None:
    for index, vector in enumerate(vectors):
        if not vector.is_full:
            raise PartialProfileError(vector.observed_months, index)


def _check_distinct(points: np.ndarray, k: int) -> None:
    # Fewer distinct rows than k leaves at least one cluster empty.
    distinct = len(np.unique(points, axis=0))
    if distinct < k:
        raise NotEnoughProfilesError(distinct, k, distinct=True)


def _model_from_fit(
    points: np.ndarray, k: int, *, seed: int, restarts: int, init: np.ndarray | None = None
) -> ClusterModel:
    fit = fit_kmeans(points, k, seed=seed, restarts=restarts, init=init)
    return ClusterModel(
        k=k,
        centroids=fit.centroids,
        seed=seed,
        restarts=restarts,
        inertia=fit.inertia,
        silhouette=silhouette_score(points, fit.labels),
        member_counts=np.bincount(fit.labels, minlength=k),
    )


def kmeans_fit(
    vectors: Sequence[ProfileVector],
    k: int,
    *,
    seed: int = DEFAULT_SEED,
    restarts: int = DEFAULT_RESTARTS,
) -> ClusterModel:
    """
    Clusters fully observed profile vectors into k profiles.

    Deterministic given (vectors, k, seed, restarts).

    :raises PartialProfileError:
    :raises NotEnoughProfilesError:
        When there are fewer than k profiles, or fewer than k distinct ones.
    """
    if k < 2:
        raise SingleClusterError(k)
    _check_full(vectors)
    if len(vectors) < k:
        raise NotEnoughProfilesError(len(vectors), k)
    points = _as_points(vectors)
    _check_distinct(points, k)
    model = _model_from_fit(points, k, seed=seed, restarts=restarts)
    logger.info(
        f"k={k}: inertia {model.inertia:.6g}, silhouette {model.silhouette:.4f}, "
        f"members {list(model.member_counts)}"
    )
    return model


@attr.s(auto_attribs=True, frozen=True)
class KSelectionRow:
    k: int
    inertia: float
    silhouette: float
    model: ClusterModel = attr.ib(eq=False, repr=False)


def _farthest_point(points: np.ndarray, centroids: np.ndarray) -> int:
    return int(np.argmax(_pairwise_distances(points, centroids).min(axis=1)))


def select_k(
    vectors: Sequence[ProfileVector],
    k_range: tuple[int, int],
    *,
    seed: int = DEFAULT_SEED,
    restarts: int = DEFAULT_RESTARTS,
) -> list[KSelectionRow]:
    """
    Fits one model per k in the inclusive range, for elbow and silhouette inspection.

    Every k after the first is also fitted starting from the previous centroids plus the point
    farthest from them, and the lower-inertia fit is kept; inertia is then non-increasing in k.

    :raises InvalidKRangeError:
        When the range is empty or not within [2, profiles - 1].
    :raises NotEnoughProfilesError:
        When there are fewer distinct profiles than the top of the range.
    """
    low, high = k_range
    _check_full(vectors)
    if low < 2 or low > high or high > len(vectors) - 1:
        raise InvalidKRangeError(k_range, len(vectors))

    points = _as_points(vectors)
    _check_distinct(points, high)
    rows = []
    previous: ClusterModel | None = None
    for k in range(low, high + 1):
        model = _model_from_fit(points, k, seed=seed, restarts=restarts)
        if previous is not None:
            centroids = previous.centroid_array
            init = np.vstack([centroids, points[_farthest_point(points, centroids)]])
            warm = _model_from_fit(points, k, seed=seed, restarts=restarts, init=init)
            if warm.inertia < model.inertia:
                logger.debug(f"k={k}: warm start lowered inertia to {warm.inertia}")
                model = warm
        logger.info(f"k={k}: inertia {model.inertia:.6g}, silhouette {model.silhouette:.4f}")
        rows.append(KSelectionRow(k, model.inertia, model.silhouette, model))
        previous = model
    return rows


def choose_k(rows: Sequence[KSelectionRow], tolerance: float = SILHOUETTE_TOLERANCE) -> int:
    """
    Smallest k whose silhouette is within `tolerance` of the best one.
    """
    if not rows:
        raise ValueError("Cannot choose k from an empty table")
    best = max(row.silhouette for row in rows)
    return min(row.k for row in rows if row.silhouette >= best - tolerance)


def write_elbow_csv(rows: Sequence[KSelectionRow], selected: int, path: Path) -> None:
    frame = pd.DataFrame(
        [(row.k, row.inertia, row.silhouette, int(row.k == selected)) for row in rows],
        columns=list(ELBOW_COLUMNS),
    )
    frame.to_csv(path, index=False)


def _check_dimension(vector: ProfileVector, model: ClusterModel) -> None:
    dimension = len(model.centroids[0])
    if len(vector.entries) != dimension:
        raise DimensionMismatchError(dimension, len(vector.entries))


def assign_full(vector: ProfileVector, model: ClusterModel) -> int:
    """
    Nearest centroid of a fully observed vector; ties go to the lowest cluster id.
    """
    if not vector.is_full:
        raise PartialProfileError(vector.observed_months)
    _check_dimension(vector, model)
    return int(_nearest(vector.array[np.newaxis, :], model.centroid_array)[0])


def partial_distances(
    vector: ProfileVector, model: ClusterModel, *, renormalize: bool = True
) -> np.ndarray:
    """
    Distance from a (possibly partial) vector to each centroid truncated to its observed months.

    With `renormalize` the truncated centroids are rescaled to sum 1, like the vector; a
    centroid with no mass over the observed months is infinitely far.

    :raises EmptyObservationError:
    """
    _check_dimension(vector, model)
    positions = vector.observed_positions
    if positions.size == 0:
        raise EmptyObservationError()
    user = vector.array[positions]
    truncated = model.centroid_array[:, positions]
    masses = truncated.sum(axis=1)
    if renormalize:
        has_mass = masses > 0
        truncated = np.divide(
            truncated,
            masses[:, np.newaxis],
            out=np.zeros_like(truncated),
            where=has_mass[:, np.newaxis],
        )
        distances = np.sqrt(((truncated - user) ** 2).sum(axis=1))
        return np.where(has_mass, distances, np.inf)
    return np.sqrt(((truncated - user) ** 2).sum(axis=1))


def assign_partial(vector: ProfileVector, model: ClusterModel, *, renormalize: bool = True) -> int:
    """
    Nearest centroid of a vector observed over 1-12 months; ties go to the lowest cluster id.
    """
    return int(np.argmin(partial_distances(vector, model, renormalize=renormalize)))


def centroid_distances(
    vector: ProfileVector, model: ClusterModel, *, renormalize: bool = True
) -> np.ndarray:
    """
    Distance to each centroid, over the full vector or the observed months of a partial one.
    """
    if vector.is_full:
        _check_dimension(vector, model)
        return _pairwise_distances(vector.array[np.newaxis, :], model.centroid_array)[0]
    return partial_distances(vector, model, renormalize=renormalize)
