"""Independent brute-force references the library implementations are checked against.

These deliberately avoid the library's code paths: metrics come from
direct confusion-matrix enumeration and pairwise counting, expression
trees from a standalone random generator.
"""

from __future__ import annotations

import numpy as np

from featgen.transform import (
    BINARY_OPS,
    PREPROCESS_OPS,
    UNARY_OPS,
    Apply,
    BaseFeature,
)


def brute_weighted_f1(y_true, y_pred) -> float:
    y_true = list(y_true)
    y_pred = list(y_pred)
    n = len(y_true)
    total = 0.0
    for c in sorted(set(y_true)):
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == c and p != c)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        total += f1 * sum(1 for t in y_true if t == c)
    return total / n


def brute_rae(y_true, y_pred, train_mean) -> float:
    num = sum(abs(t - p) for t, p in zip(y_true, y_pred))
    den = sum(abs(t - train_mean) for t in y_true)
    return num / den


def brute_roc_auc(y_true, scores) -> float:
    pos = [s for y, s in zip(y_true, scores) if y == 1]
    neg = [s for y, s in zip(y_true, scores) if y != 1]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def random_expr(rng: np.random.Generator, bases, max_depth: int):
    """Standalone random expression-tree generator for round-trip checks."""
    if max_depth <= 1 or rng.random() < 0.3:
        return BaseFeature(bases[int(rng.integers(len(bases)))])
    roll = rng.random()
    if roll < 0.4:
        op = BINARY_OPS[int(rng.integers(len(BINARY_OPS)))]
        return Apply(
            op,
            (random_expr(rng, bases, max_depth - 1), random_expr(rng, bases, max_depth - 1)),
        )
    pool = UNARY_OPS + PREPROCESS_OPS
    op = pool[int(rng.integers(len(pool)))]
    return Apply(op, (random_expr(rng, bases, max_depth - 1),))


def multiplies_bases(expr, a: str, b: str) -> bool:
    """True if some mul node has `a` in one subtree and `b` in the other."""
    from featgen.transform import base_names

    if not isinstance(expr, Apply):
        return False
    if expr.op.symbol == "mul":
        left, right = (base_names(c) for c in expr.children)
        if (a in left and b in right) or (b in left and a in right):
            return True
    return any(multiplies_bases(c, a, b) for c in expr.children)
