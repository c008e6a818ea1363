"""Operator algebra and the expression-tree naming layer.

Fifteen operators are available to the agents: eight element-wise unary
maps, three column-wise preprocessing rescalers (treated as unary), and
four binary combinators. Every generated column carries a canonical
expression string built from this grammar:

    expr      := base | unary_sym "(" expr ")" | "(" expr bin_sym expr ")"
    unary_sym := sqrt|square|sin|cos|tanh|sigmoid|log|reciprocal
               | stand_scaler|minmax_scaler|quan_trans
    bin_sym   := "+"|"-"|"*"|"/"

Names round-trip through `parse_name`, which is what makes every feature's
lineage auditable long after a run finishes.

All numeric kernels are total: singular points (zero denominators,
negative sqrt/log arguments) are absorbed by guards instead of raising, so
the search loop never sees an exception from arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from .dataset import DataTable
from .errors import ExprSyntaxError, LengthMismatch, UnknownBase

# Guard thresholds: denominators smaller than DIV_EPS in magnitude are
# replaced by DIV_EPS with the denominator's sign (sign(0) = +1); log sees
# |x| + LOG_EPS.
DIV_EPS = 1e-6
LOG_EPS = 1e-10


class OpKind(Enum):
    UNARY = "unary"
    BINARY = "binary"
    PREPROCESS = "preprocess"


@dataclass(frozen=True)
class Operator:
    symbol: str
    kind: OpKind

    @property
    def arity(self) -> int:
        return 2 if self.kind is OpKind.BINARY else 1


UNARY_OPS = tuple(
    Operator(s, OpKind.UNARY)
    for s in ("sqrt", "square", "sin", "cos", "tanh", "sigmoid", "log", "reciprocal")
)
PREPROCESS_OPS = tuple(
    Operator(s, OpKind.PREPROCESS) for s in ("stand_scaler", "minmax_scaler", "quan_trans")
)
BINARY_OPS = tuple(Operator(s, OpKind.BINARY) for s in ("add", "sub", "mul", "div"))

# Action roster order: unary, preprocess, binary. Agents index into this.
OPERATORS = UNARY_OPS + PREPROCESS_OPS + BINARY_OPS
OPERATOR_INDEX = {op.symbol: i for i, op in enumerate(OPERATORS)}
N_OPERATORS = len(OPERATORS)

_BIN_GLYPH = {"add": "+", "sub": "-", "mul": "*", "div": "/"}
_GLYPH_BIN = {v: k for k, v in _BIN_GLYPH.items()}
_UNARY_SYMBOLS = {op.symbol for op in UNARY_OPS + PREPROCESS_OPS}


@dataclass(frozen=True)
class BaseFeature:
    name: str


@dataclass(frozen=True)
class Apply:
    op: Operator
    children: tuple

    def __post_init__(self):
        if len(self.children) != self.op.arity:
            raise ValueError(f"{self.op.symbol} expects {self.op.arity} children")


FeatureExpr = Union[BaseFeature, Apply]


def depth(expr: FeatureExpr) -> int:
    if isinstance(expr, BaseFeature):
        return 1
    return 1 + max(depth(c) for c in expr.children)


def base_names(expr: FeatureExpr) -> set:
    if isinstance(expr, BaseFeature):
        return {expr.name}
    out: set = set()
    for c in expr.children:
        out |= base_names(c)
    return out


def render_name(expr: FeatureExpr) -> str:
    """Canonical, deterministic string for an expression tree."""
    if isinstance(expr, BaseFeature):
        return expr.name
    if expr.op.kind is OpKind.BINARY:
        left, right = expr.children
        return f"({render_name(left)}{_BIN_GLYPH[expr.op.symbol]}{render_name(right)})"
    (child,) = expr.children
    return f"{expr.op.symbol}({render_name(child)})"


def parse_name(name: str, known_bases=None) -> FeatureExpr:
    """Inverse of `render_name`.

    `known_bases` restricts leaf tokens; pass None to accept any leaf
    (useful when only the tree shape matters). Raises `ExprSyntaxError`
    with the offending offset, or `UnknownBase`.
    """
    bases = None if known_bases is None else set(known_bases)
    pos = 0

    def fail(msg: str, at: int):
        raise ExprSyntaxError(msg, at)

    def parse_expr() -> FeatureExpr:
        nonlocal pos
        if pos >= len(name):
            fail("unexpected end of input", pos)
        if name[pos] == "(":
            open_at = pos
            pos += 1
            left = parse_expr()
            if pos >= len(name) or name[pos] not in _GLYPH_BIN:
                fail("expected binary operator", pos)
            op = Operator(_GLYPH_BIN[name[pos]], OpKind.BINARY)
            pos += 1
            right = parse_expr()
            if pos >= len(name) or name[pos] != ")":
                fail(f"unbalanced parenthesis opened at {open_at}", pos)
            pos += 1
            return Apply(op, (left, right))
        start = pos
        while pos < len(name) and name[pos] not in "()+-*/,":
            pos += 1
        token = name[start:pos]
        if not token:
            fail(f"unexpected character {name[pos]!r}", pos)
        if pos < len(name) and name[pos] == "(":
            if token not in _UNARY_SYMBOLS:
                fail(f"unknown operator {token!r}", start)
            pos += 1
            child = parse_expr()
            if pos >= len(name) or name[pos] != ")":
                fail(f"unbalanced parenthesis opened at {start + len(token)}", pos)
            pos += 1
            op = next(o for o in UNARY_OPS + PREPROCESS_OPS if o.symbol == token)
            return Apply(op, (child,))
        if bases is not None and token not in bases:
            raise UnknownBase(f"{token!r} is not an ingested feature")
        return BaseFeature(token)

    expr = parse_expr()
    if pos != len(name):
        fail(f"trailing input {name[pos:]!r}", pos)
    return expr


def _guard_denominator(d: np.ndarray) -> np.ndarray:
    sign = np.where(d < 0, -1.0, 1.0)
    return np.where(np.abs(d) < DIV_EPS, sign * DIV_EPS, d)


def stand_scaler(column: np.ndarray) -> np.ndarray:
    """Center on the mean and divide by the population std (zeros if constant)."""
    c = np.asarray(column, dtype=np.float64)
    sigma = c.std()
    if sigma < DIV_EPS:
        return np.zeros_like(c)
    return (c - c.mean()) / sigma


def minmax_scaler(column: np.ndarray) -> np.ndarray:
    """Rescale onto [0, 1]; a constant column maps to the midpoint 0.5."""
    c = np.asarray(column, dtype=np.float64)
    lo, hi = c.min(), c.max()
    if hi == lo:
        return np.full_like(c, 0.5)
    return (c - lo) / (hi - lo)


def quan_trans(column: np.ndarray) -> np.ndarray:
    """Empirical-distribution map to (0, 1): value -> rank/(n+1), ties averaged."""
    c = np.asarray(column, dtype=np.float64)
    return rankdata(c, method="average") / (c.size + 1)


_UNARY_FUNCS = {
    "sqrt": lambda c: np.sqrt(np.abs(c)),
    "square": np.square,
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "sigmoid": expit,
    "log": lambda c: np.log(np.abs(c) + LOG_EPS),
    "reciprocal": lambda c: 1.0 / _guard_denominator(c),
    "stand_scaler": stand_scaler,
    "minmax_scaler": minmax_scaler,
    "quan_trans": quan_trans,
}


def apply_unary(op: Operator, column) -> np.ndarray:
    if op.kind is OpKind.BINARY:
        raise ValueError(f"{op.symbol} is not unary")
    c = np.asarray(column, dtype=np.float64)
    return _UNARY_FUNCS[op.symbol](c)


def apply_binary(op: Operator, left, right) -> np.ndarray:
    if op.kind is not OpKind.BINARY:
        raise ValueError(f"{op.symbol} is not binary")
    a = np.asarray(left, dtype=np.float64)
    b = np.asarray(right, dtype=np.float64)
    if a.shape != b.shape:
        raise LengthMismatch(f"operand lengths differ: {a.shape} vs {b.shape}")
    if op.symbol == "add":
        return a + b
    if op.symbol == "sub":
        return a - b
    if op.symbol == "mul":
        return a * b
    return a / _guard_denominator(b)


def eval_expr(expr: FeatureExpr, table: DataTable) -> np.ndarray:
    """Recompute an expression's column from the table's base features."""
    if isinstance(expr, BaseFeature):
        return table.column(table.index_of(expr.name))
    if expr.op.kind is OpKind.BINARY:
        left, right = expr.children
        return apply_binary(expr.op, eval_expr(left, table), eval_expr(right, table))
    (child,) = expr.children
    return apply_unary(expr.op, eval_expr(child, table))


def _column_expr(table: DataTable, index: int) -> FeatureExpr:
    # Feature names are canonical expression strings, so lineage is
    # recoverable by parsing the name itself.
    return parse_name(table.feature_names[index], None)


def generate_features(
    table: DataTable,
    op: Operator,
    cluster1,
    cluster2=None,
    cap: int = 64,
) -> list[tuple[FeatureExpr, np.ndarray]]:
    """Candidate columns from applying `op` over one or two feature clusters.

    Unary/preprocess ops yield one candidate per cluster1 member. Binary
    ops yield one per ordered (cluster1 x cluster2) pair, skipping the
    self-pairs of sub and div (identically constant). Candidates that are
    constant, non-finite, or name-collide with an existing column are
    discarded; at most `cap` survivors are returned, in index-lexicographic
    order.
    """
    if op.kind is OpKind.BINARY and cluster2 is None:
        raise ValueError("binary operators need a second cluster")
    if op.kind is not OpKind.BINARY and cluster2 is not None:
        raise ValueError("unary operators take a single cluster")
    existing = set(table.feature_names)
    out: list[tuple[FeatureExpr, np.ndarray]] = []

    def consider(expr: FeatureExpr, column: np.ndarray) -> bool:
        name = render_name(expr)
        if name in existing:
            return False
        if not np.all(np.isfinite(column)):
            return False
        if column.max() == column.min():
            return False
        existing.add(name)
        out.append((expr, column))
        return len(out) >= cap

    # overflow to inf is fine here: non-finite candidates get discarded
    with np.errstate(over="ignore", invalid="ignore"):
        if op.kind is OpKind.BINARY:
            for i in sorted(cluster1):
                for j in sorted(cluster2):
                    if i == j and op.symbol in ("sub", "div"):
                        continue
                    expr = Apply(op, (_column_expr(table, i), _column_expr(table, j)))
                    col = apply_binary(op, table.column(i), table.column(j))
                    if consider(expr, col):
                        return out
        else:
            for i in sorted(cluster1):
                expr = Apply(op, (_column_expr(table, i),))
                col = apply_unary(op, table.column(i))
                if consider(expr, col):
                    return out
    return out
