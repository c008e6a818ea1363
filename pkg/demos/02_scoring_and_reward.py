"""How candidate tables are scored and turned into a reward signal.

Regression tables are scored by 5-fold cross-validated 1-RAE (1 means
perfect, 0 means no better than predicting the training mean); the reward
is simply the scaled metric delta between consecutive steps.
"""

import numpy as np

from featgen.cli import make_synthetic
from featgen.dataset import DataTable, TaskKind, normalize
from featgen.evaluator import evaluate, reward

names, X, y = make_synthetic("product", 400, 0.1, seed=7)
table = DataTable(names, X, y, TaskKind.REGRESSION, target_name="y")
table, _ = normalize(table, -1.0, 1.0)

before = evaluate(table, seed=0)
print("baseline per-fold 1-RAE:", [round(v, 3) for v in before.per_fold])
print(f"baseline: {before.primary_metric:.4f}  MAE {before.mae:.3f}  RMSE {before.rmse:.3f}")

# hand the evaluator the interaction the target is made of
richer = table.with_new_columns(("(x1*x2)",), (table.column(0) * table.column(1),))
after = evaluate(richer, seed=0)
print(f"with (x1*x2): {after.primary_metric:.4f}  MAE {after.mae:.3f}  RMSE {after.rmse:.3f}")

signal = reward(after.primary_metric, before.primary_metric, eta=1.0)
print(f"reward delivered to every agent: {signal.value:.4f}")
