"""End-to-end search on a synthetic interaction benchmark.

The target is y = x1*x2 + noise, which no single base feature explains.
Three cooperating agents pick (cluster, operator, cluster) each step; the
table is pruned back to the cap by mutual information; every metric jump
past the running best is recorded as a breakthrough with full lineage.
"""

from featgen.cli import make_synthetic
from featgen.dataset import DataTable, TaskKind, normalize
from featgen.orchestrator import RunConfig, run
from featgen.selection import SelectorKind

names, X, y = make_synthetic("product", 500, 0.1, seed=7)
table = DataTable(names, X, y, TaskKind.REGRESSION, target_name="y")
table, _ = normalize(table, -1.0, 1.0)

config = RunConfig(
    task=TaskKind.REGRESSION,
    episodes=3,
    steps=10,
    cap=30,
    selector=SelectorKind.KBEST_MI,
    seed=1,
    explain_mode="stub",
)
state, breakthroughs = run(config, table)

print(f"baseline 1-RAE: {state.baseline_report.primary_metric:.4f}")
print(f"best 1-RAE:     {state.best_metric:.4f}")
print(f"steps: {state.step_counter}, candidate columns evaluated: {state.candidate_evals}")

print("\nbreakthroughs (episode/step, jump, new features):")
for event in breakthroughs:
    jump = f"{event.p_old:.3f} -> {event.p_new:.3f}"
    print(f"  E{event.episode},S{event.step}  {jump}  {list(event.expressions)[:3]}")

kept = [n for n in state.current.feature_names if n not in table.feature_names]
print(f"\ngenerated features surviving pruning + interpretability filter: {len(kept)}")
for name in kept[:8]:
    print(" ", name)
