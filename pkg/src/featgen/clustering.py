"""Feature clustering: the agents' coarse decision units.

Each feature is represented by its z-scored column (so exact duplicates
and rescaled copies coincide) and the columns are partitioned by k-means
with k-means++ seeding. The partition is recomputed every step because the
feature set changes every step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import DataTable

_MAX_ITER = 100


@dataclass(frozen=True)
class ClusterAssignment:
    k: int
    labels: np.ndarray
    members: tuple

    def __post_init__(self):
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.intp))
        if sorted(i for group in self.members for i in group) != list(range(len(self.labels))):
            raise ValueError("members must partition the feature indices")
        if any(len(group) == 0 for group in self.members):
            raise ValueError("no cluster may be empty")


def _zscore_points(table: DataTable) -> np.ndarray:
    X = table.X.T.copy()  # one row per feature
    with np.errstate(over="ignore"):  # extreme columns saturate, then zero out
        mu = X.mean(axis=1, keepdims=True)
        sigma = X.std(axis=1, keepdims=True)
    sigma[sigma == 0.0] = 1.0
    points = (X - mu) / sigma
    return np.nan_to_num(points, nan=0.0, posinf=0.0, neginf=0.0)


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = points[first]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # Every point coincides with a chosen center (duplicate-heavy
            # data); any pick works, the empty-cluster repair sorts it out.
            centers[c] = points[0]
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
            centers[c] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centers[c]) ** 2, axis=1))
    return centers


def _assign(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # argmin breaks distance ties by lowest cluster id
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def _repair_empty(points: np.ndarray, centers: np.ndarray, labels: np.ndarray) -> np.ndarray:
    k = centers.shape[0]
    labels = labels.copy()
    while True:
        sizes = np.bincount(labels, minlength=k)
        empties = np.flatnonzero(sizes == 0)
        if empties.size == 0:
            return labels
        empty = int(empties[0])
        donor = int(np.argmax(sizes))
        donor_idx = np.flatnonzero(labels == donor)
        centroid = points[donor_idx].mean(axis=0)
        far = donor_idx[int(np.argmax(((points[donor_idx] - centroid) ** 2).sum(axis=1)))]
        labels[far] = empty


def cluster_features(table: DataTable, k_config: int, seed: int) -> ClusterAssignment:
    """Partition the features into k = min(k_config, m) clusters.

    Deterministic given the seed. Empty clusters are repaired by moving
    the largest cluster's farthest member into them.
    """
    m = table.n_features
    if m < 1:
        raise ValueError("table has no features")
    k = min(int(k_config), m)
    points = _zscore_points(table)
    if k == 1:
        labels = np.zeros(m, dtype=np.intp)
    else:
        rng = np.random.default_rng(seed)
        centers = _kmeans_pp_init(points, k, rng)
        labels = _assign(points, centers)
        labels = _repair_empty(points, centers, labels)
        for _ in range(_MAX_ITER):
            for c in range(k):
                centers[c] = points[labels == c].mean(axis=0)
            new_labels = _assign(points, centers)
            new_labels = _repair_empty(points, centers, new_labels)
            if np.array_equal(new_labels, labels):
                break
            labels = new_labels
    members = tuple(tuple(np.flatnonzero(labels == c)) for c in range(k))
    return ClusterAssignment(k=k, labels=labels, members=members)
