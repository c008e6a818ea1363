"""Compare the six feature-selection arms on one seed.

The null arm never prunes, so its tables keep growing and the evaluator
does strictly more work; the capped arms trade a little best-metric for a
bounded table. Utilization tracks how much of the top-10 importance mass
is generated (rather than ingested) features.
"""

import time

import numpy as np

from featgen.cli import make_synthetic
from featgen.dataset import DataTable, TaskKind, normalize
from featgen.orchestrator import RunConfig, run
from featgen.selection import SelectorKind

names, X, y = make_synthetic("product", 300, 0.1, seed=7)
table = DataTable(names, X, y, TaskKind.REGRESSION, target_name="y")
table, _ = normalize(table, -1.0, 1.0)

print(f"{'selector':12s} {'best':>8s} {'seconds':>8s} {'prop':>7s} {'wprop':>7s} {'evals':>6s}")
for kind in SelectorKind:
    config = RunConfig(
        task=TaskKind.REGRESSION, episodes=2, steps=8, cap=14, selector=kind, seed=4
    )
    started = time.perf_counter()
    state, _ = run(config, table)
    elapsed = time.perf_counter() - started
    prop = float(np.mean([r["proportion"] for r in state.records]))
    wprop = float(np.mean([r["weighted_proportion"] for r in state.records]))
    print(
        f"{kind.value:12s} {state.best_metric:8.4f} {elapsed:8.2f} "
        f"{prop:7.3f} {wprop:7.3f} {state.candidate_evals:6d}"
    )
