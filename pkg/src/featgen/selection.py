"""Feature-space control: ranking, pruning, and utilization metrics.

When the table outgrows its cap, features are ranked by the configured
selector and only the best generated ones are kept; ingested base
features are always protected. The default selector scores each feature
by histogram mutual information with the target (plug-in estimate over
equal-frequency bins), which is deterministic and dependency-light.

Utilization summarizes how much of the current top-k importance mass
belongs to generated features:

    proportion = |{f in top_k : f not a base}| / (|top_k| + eps)
    weighted   = proportion * sigmoid(reward)
"""

from __future__ import annotations

import math
import warnings
from enum import Enum

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.ensemble import (
    ExtraTreesClassifier,
    ExtraTreesRegressor,
    RandomForestClassifier,
    RandomForestRegressor,
)
from sklearn.linear_model import lasso_path

from .dataset import DataTable, TaskKind
from .errors import DegenerateTarget

DEFAULT_BINS = 10
UTILIZATION_EPS = 1e-8

_FOREST_SPEC = dict(n_estimators=10, max_depth=8, bootstrap=True, min_samples_leaf=2)


class SelectorKind(Enum):
    KBEST_MI = "kbest"
    EXTRA_TREES = "extratrees"
    LASSO_PATH = "lasso"
    RF_IMPORTANCE = "rf"
    RFE = "rfe"
    NONE = "none"


def _equal_frequency_bins(x: np.ndarray, bins: int) -> np.ndarray:
    edges = np.quantile(x, np.linspace(0.0, 1.0, bins + 1)[1:-1])
    return np.searchsorted(edges, x, side="right")


def mutual_information(feature, target, task: TaskKind, bins: int = DEFAULT_BINS, seed: int = 0) -> float:
    """Plug-in mutual information (nats) over a binned contingency table.

    The feature is discretized into equal-frequency bins; regression
    targets are binned the same way, class and anomaly labels are used
    as-is. A constant feature scores exactly 0. The seed is accepted for
    interface symmetry with the other selectors; the estimate itself is
    deterministic.
    """
    x = np.asarray(feature, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if x.shape != y.shape or x.size < 10:
        raise ValueError("feature and target must be equal lengths >= 10")
    if x.max() == x.min():
        return 0.0
    xb = _equal_frequency_bins(x, bins)
    if task is TaskKind.REGRESSION:
        yb = _equal_frequency_bins(y, bins)
    else:
        _, yb = np.unique(y, return_inverse=True)
    n = x.size
    joint = np.zeros((xb.max() + 1, yb.max() + 1), dtype=np.float64)
    np.add.at(joint, (xb, yb), 1.0)
    joint /= n
    px = joint.sum(axis=1)
    py = joint.sum(axis=0)
    nz = joint > 0
    outer = np.outer(px, py)
    mi = float(np.sum(joint[nz] * np.log(joint[nz] / outer[nz])))
    return max(mi, 0.0)


def _normalize(scores: np.ndarray) -> np.ndarray:
    scores = np.maximum(np.asarray(scores, dtype=np.float64), 0.0)
    total = scores.sum()
    if total <= 0.0:
        return np.zeros_like(scores)
    return scores / total


def _forest_importances(table: DataTable, seed: int, extra: bool) -> np.ndarray:
    max_features = max(1, math.ceil(math.sqrt(table.n_features)))
    kw = dict(max_features=max_features, random_state=int(seed) % (2**31 - 1), **_FOREST_SPEC)
    if table.task is TaskKind.REGRESSION:
        model = (ExtraTreesRegressor if extra else RandomForestRegressor)(**kw)
        model.fit(table.X, table.y)
    else:
        model = (ExtraTreesClassifier if extra else RandomForestClassifier)(**kw)
        model.fit(table.X, table.y.astype(np.int64))
    return model.feature_importances_


def _lasso_importances(table: DataTable, cap: int) -> np.ndarray:
    # L1 penalties are scale-sensitive: z-score inside the selector only.
    X = table.X
    mu = X.mean(axis=0)
    sigma = X.std(axis=0)
    sigma[sigma == 0.0] = 1.0
    Xz = (X - mu) / sigma
    y = table.y
    target_nnz = max(1, min(cap, table.n_features) // 2)
    with warnings.catch_warnings():
        # Only the coefficient ordering matters for ranking; loose
        # convergence at the weakest penalties is fine.
        warnings.simplefilter("ignore", ConvergenceWarning)
        alphas, coefs, _ = lasso_path(Xz, y, n_alphas=100, max_iter=5000)
    # alphas come ordered strongest-first; take the strongest penalty that
    # still keeps enough nonzero coefficients.
    for a_idx in range(len(alphas)):
        if np.count_nonzero(coefs[:, a_idx]) >= target_nnz:
            return np.abs(coefs[:, a_idx])
    return np.abs(coefs[:, -1])


def _rfe_importances(table: DataTable, seed: int) -> np.ndarray:
    """Recursive elimination, 10% per round; score = inverse elimination order."""
    remaining = list(range(table.n_features))
    order: list[int] = []  # global indices, eliminated-first
    while len(remaining) > 1:
        sub = table.select([table.feature_names[j] for j in remaining])
        imp = _forest_importances(sub, seed, extra=False)
        n_drop = min(max(1, math.ceil(0.1 * len(remaining))), len(remaining) - 1)
        worst_local = list(np.argsort(imp, kind="stable")[:n_drop])
        order.extend(remaining[lw] for lw in worst_local)
        drop_set = set(worst_local)
        remaining = [g for li, g in enumerate(remaining) if li not in drop_set]
    order.extend(remaining)
    scores = np.empty(table.n_features, dtype=np.float64)
    for rank, feat in enumerate(order):
        scores[feat] = rank + 1  # survivors rank highest
    return scores


def rank_features(table: DataTable, kind: SelectorKind, seed: int, cap=None) -> np.ndarray:
    """Nonnegative per-feature importances normalized to sum to 1.

    `cap` only matters for the lasso selector, whose penalty is chosen as
    the strongest one retaining at least min(cap, m)/2 nonzero
    coefficients; it defaults to the feature count.
    """
    if table.task is TaskKind.REGRESSION:
        if np.all(table.y == table.y[0]):
            raise DegenerateTarget("constant regression target")
    elif np.unique(table.y).size < 2:
        raise DegenerateTarget("single-class target")

    m = table.n_features
    if kind is SelectorKind.NONE:
        return np.full(m, 1.0 / m)
    if kind is SelectorKind.KBEST_MI:
        scores = np.array(
            [
                mutual_information(table.column(j), table.y, table.task, seed=seed)
                for j in range(m)
            ]
        )
    elif kind is SelectorKind.EXTRA_TREES:
        scores = _forest_importances(table, seed, extra=True)
    elif kind is SelectorKind.RF_IMPORTANCE:
        scores = _forest_importances(table, seed, extra=False)
    elif kind is SelectorKind.LASSO_PATH:
        scores = _lasso_importances(table, cap if cap is not None else m)
    elif kind is SelectorKind.RFE:
        scores = _rfe_importances(table, seed)
    else:
        raise ValueError(f"unknown selector {kind}")
    return _normalize(scores)


def top_k_features(table: DataTable, importances: np.ndarray, k: int) -> list[str]:
    """Names of the k most important features; ties keep table order."""
    order = np.argsort(-np.asarray(importances), kind="stable")
    return [table.feature_names[j] for j in order[:k]]


def prune(table: DataTable, kind: SelectorKind, cap: int, protected, seed: int) -> DataTable:
    """Cut the table back to `cap` features, never touching protected ones.

    No-op below the cap or with the null selector (that arm runs uncapped
    by design). Generated features are kept by descending importance; ties
    fall to the older (earlier-appended) column, then to the
    lexicographically smaller name.
    """
    protected = set(protected)
    if cap < len(protected):
        raise ValueError("cap must be at least the protected feature count")
    if kind is SelectorKind.NONE or table.n_features <= cap:
        return table
    importances = rank_features(table, kind, seed, cap=cap)
    generated = [
        (j, name) for j, name in enumerate(table.feature_names) if name not in protected
    ]
    generated.sort(key=lambda it: (-importances[it[0]], it[0], it[1]))
    budget = cap - len(protected)
    keep = protected | {name for _, name in generated[:budget]}
    return table.select(keep)


def utilization(top_k, base_names, reward: float, eps: float = UTILIZATION_EPS) -> tuple[float, float]:
    """(proportion, reward-weighted proportion) of generated features in top-k."""
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    top_k = list(top_k)
    if not top_k:
        raise ValueError("top_k must be nonempty")
    base = set(base_names)
    n_generated = sum(1 for name in top_k if name not in base)
    proportion = n_generated / (len(top_k) + eps)
    if reward >= 0:
        sigma = 1.0 / (1.0 + math.exp(-reward))
    else:
        e = math.exp(reward)
        sigma = e / (1.0 + e)
    return proportion, proportion * sigma
