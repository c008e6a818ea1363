"""Downstream-task scoring and the reward signal.

A candidate table is scored by 5-fold cross-validation with a
task-matched model/metric pair:

    regression     -> random-forest regressor,  mean over folds of 1 - RAE
    classification -> random-forest classifier, mean weighted F1
    anomaly        -> k-nearest-neighbor distance scorer, mean ROC-AUC

The reward handed to every agent is the scaled improvement
``eta * (p_new - p_old)`` of that primary metric.

Forests are deliberately small (10 trees, depth 8, ceil(sqrt(m)) features
per split, bootstrap, leaf min 2) so a fold evaluates in milliseconds and
the whole search stays interactive; every random draw derives from the
run seed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import rankdata
from sklearn.ensemble import RandomForestClassifier, RandomForestRegressor

from .dataset import DataTable, TaskKind
from .errors import DegenerateTarget, SingleClass, TooFewSamples

logger = logging.getLogger(__name__)

N_FOLDS = 5
_FOREST_SPEC = dict(n_estimators=10, max_depth=8, bootstrap=True, min_samples_leaf=2)
_KNN_K = 5


@dataclass(frozen=True)
class EvalReport:
    task: TaskKind
    per_fold: tuple
    primary_metric: float
    mae: Optional[float] = None
    rmse: Optional[float] = None


@dataclass(frozen=True)
class RewardSignal:
    value: float
    p_new: float
    p_old: float
    eta: float


def reward(p_new: float, p_old: float, eta: float = 1.0) -> RewardSignal:
    """Scaled performance delta, shared by all three agents."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    return RewardSignal(value=eta * (p_new - p_old), p_new=p_new, p_old=p_old, eta=eta)


def kfold_split(n: int, task: TaskKind, labels=None, seed: int = 0) -> list[np.ndarray]:
    """Five disjoint index folds covering range(n), sizes differing by <= 1.

    Classification folds are stratified per class; a class with fewer than
    5 members forces an unstratified fallback (logged). Regression and
    anomaly folds are a seeded random partition.
    """
    if n < 2 * N_FOLDS:
        raise TooFewSamples(f"need at least {2 * N_FOLDS} rows, got {n}")
    rng = np.random.default_rng(seed)

    stratify = task is TaskKind.CLASSIFICATION and labels is not None
    if stratify:
        y = np.asarray(labels)
        counts = {c: int((y == c).sum()) for c in np.unique(y)}
        small = {c: k for c, k in counts.items() if k < N_FOLDS}
        if small:
            logger.warning("classes too small for stratification (%s); falling back", small)
            stratify = False

    folds: list[list[int]] = [[] for _ in range(N_FOLDS)]
    if stratify:
        # Deal each class round-robin so per-class counts differ by <= 1,
        # rotating the starting fold so overall sizes stay balanced.
        offset = 0
        for c in np.unique(np.asarray(labels)):
            idx = np.flatnonzero(np.asarray(labels) == c)
            idx = rng.permutation(idx)
            for i, row in enumerate(idx):
                folds[(offset + i) % N_FOLDS].append(int(row))
            offset = (offset + len(idx)) % N_FOLDS
    else:
        perm = rng.permutation(n)
        base, extra = divmod(n, N_FOLDS)
        start = 0
        for f in range(N_FOLDS):
            size = base + (1 if f < extra else 0)
            folds[f] = [int(i) for i in perm[start : start + size]]
            start += size
    return [np.array(sorted(f), dtype=np.intp) for f in folds]


def rae(y_true, y_pred, train_mean: float) -> float:
    """Relative absolute error against the training-mean baseline."""
    yt = np.asarray(y_true, dtype=np.float64)
    yp = np.asarray(y_pred, dtype=np.float64)
    if yt.shape != yp.shape or yt.size == 0:
        raise ValueError("y_true and y_pred must be equal nonzero lengths")
    denom = np.abs(yt - train_mean).sum()
    if denom <= 0.0:
        raise DegenerateTarget("test targets all equal the training mean")
    return float(np.abs(yt - yp).sum() / denom)


def weighted_f1(y_true, y_pred) -> float:
    """Per-class F1 weighted by true-class counts; empty denominators give 0."""
    yt = np.asarray(y_true)
    yp = np.asarray(y_pred)
    if yt.shape != yp.shape:
        raise ValueError("label vectors must be equal lengths")
    total = 0.0
    for c in np.unique(yt):
        tp = int(((yt == c) & (yp == c)).sum())
        fp = int(((yt != c) & (yp == c)).sum())
        fn = int(((yt == c) & (yp != c)).sum())
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        total += f1 * int((yt == c).sum())
    return float(total / yt.size)


def roc_auc(y_true, scores) -> float:
    """P(score+ > score-) + half credit for ties, via the rank identity."""
    y = np.asarray(y_true)
    s = np.asarray(scores, dtype=np.float64)
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("ROC-AUC needs both classes in the fold")
    ranks = rankdata(s, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _fold_seed(seed: int, fold: int) -> int:
    return (int(seed) * N_FOLDS + fold) % (2**31 - 1)


def _make_forest(task: TaskKind, n_features: int, seed: int):
    max_features = max(1, math.ceil(math.sqrt(n_features)))
    if task is TaskKind.REGRESSION:
        return RandomForestRegressor(
            criterion="squared_error",
            max_features=max_features,
            random_state=seed,
            **_FOREST_SPEC,
        )
    return RandomForestClassifier(
        criterion="gini", max_features=max_features, random_state=seed, **_FOREST_SPEC
    )


def _knn_scores(train: np.ndarray, test: np.ndarray) -> np.ndarray:
    """Mean Euclidean distance to the 5 nearest training points (higher = odder)."""
    # huge generated columns may saturate to inf (and inf - inf to nan,
    # mapped below to "maximally far")
    with np.errstate(over="ignore", invalid="ignore"):
        d2 = (
            np.sum(test**2, axis=1)[:, None]
            + np.sum(train**2, axis=1)[None, :]
            - 2.0 * test @ train.T
        )
        np.maximum(d2, 0.0, out=d2)
        d2 = np.nan_to_num(d2, nan=np.inf)
        k = min(_KNN_K, train.shape[0])
        nearest = np.partition(np.sqrt(d2), k - 1, axis=1)[:, :k]
        return nearest.mean(axis=1)


def evaluate(table: DataTable, seed: int) -> EvalReport:
    """Cross-validated downstream score of the table, deterministic per seed."""
    y = table.y
    if table.task is TaskKind.REGRESSION:
        if np.all(y == y[0]):
            raise DegenerateTarget("constant regression target")
    else:
        if np.unique(y).size < 2:
            raise DegenerateTarget("single-class target")

    folds = kfold_split(table.n_rows, table.task, labels=y, seed=seed)
    per_fold: list[float] = []
    maes: list[float] = []
    rmses: list[float] = []
    for f, test_idx in enumerate(folds):
        train_mask = np.ones(table.n_rows, dtype=bool)
        train_mask[test_idx] = False
        X_tr, X_te = table.X[train_mask], table.X[test_idx]
        y_tr, y_te = y[train_mask], y[test_idx]

        if table.task is TaskKind.REGRESSION:
            model = _make_forest(table.task, table.n_features, _fold_seed(seed, f))
            model.fit(X_tr, y_tr)
            pred = model.predict(X_te)
            per_fold.append(1.0 - rae(y_te, pred, float(y_tr.mean())))
            err = y_te - pred
            maes.append(float(np.abs(err).mean()))
            rmses.append(float(np.sqrt(np.mean(err**2))))
        elif table.task is TaskKind.CLASSIFICATION:
            model = _make_forest(table.task, table.n_features, _fold_seed(seed, f))
            model.fit(X_tr, y_tr.astype(np.int64))
            pred = model.predict(X_te)
            per_fold.append(weighted_f1(y_te.astype(np.int64), pred))
        else:
            scores = _knn_scores(X_tr, X_te)
            per_fold.append(roc_auc(y_te.astype(np.int64), scores))

    primary = float(np.mean(per_fold))
    if table.task is TaskKind.REGRESSION:
        return EvalReport(
            task=table.task,
            per_fold=tuple(per_fold),
            primary_metric=primary,
            mae=float(np.mean(maes)),
            rmse=float(np.mean(rmses)),
        )
    return EvalReport(task=table.task, per_fold=tuple(per_fold), primary_metric=primary)
