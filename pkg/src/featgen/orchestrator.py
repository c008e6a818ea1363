"""The episode/step loop that drives generation, scoring, and learning.

Each step: re-cluster the current features, let C1 pick a cluster, Op pick
an operator, and (for binary operators) C2 pick a second cluster; apply
the operator over the cluster(s); prune if the table outgrew its cap;
re-evaluate; convert the metric delta into the shared reward; store one
transition per participating agent and train each once. The best table
and metric are tracked monotonically, and any step that jumps the metric
by at least `delta` past the previous best is recorded as a breakthrough.

Episodes reset the working table to the normalized base table while
networks, buffers, and the best snapshot persist, so later episodes
explore from scratch with better policies.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .agents import (
    DESCRIPTOR_SIZE,
    Agent,
    AgentConfig,
    Role,
    Transition,
    Variant,
    encode_state,
    operator_onehot,
)
from .clustering import cluster_features
from .dataset import DataTable, TaskKind
from .evaluator import EvalReport, evaluate, reward
from .selection import SelectorKind, prune, rank_features, top_k_features, utilization
from .transform import N_OPERATORS, OPERATORS, OpKind, generate_features, render_name
from . import explain as explain_mod


@dataclass
class RunConfig:
    task: TaskKind
    episodes: int = 5
    steps: int = 10
    k_config: int = 5
    cap: int = 30
    candidate_cap: int = 64
    selector: SelectorKind = SelectorKind.KBEST_MI
    variant: Variant = Variant.DQN
    eta: float = 1.0
    delta: float = 0.01
    top_k: int = 10
    seed: int = 0
    out_dir: Optional[Path] = None
    explain_mode: str = "off"
    gamma: float = 0.9
    lr: float = 1e-3
    batch_size: int = 32
    buffer_capacity: int = 512
    target_sync: int = 10
    hidden: tuple = (64, 64)

    def __post_init__(self):
        if self.episodes < 1 or self.steps < 0:
            raise ValueError("episodes must be >= 1 and steps >= 0")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.explain_mode not in ("off", "stub", "live"):
            raise ValueError("explain_mode must be off, stub, or live")
        if self.out_dir is not None:
            self.out_dir = Path(self.out_dir)

    def agent_config(self) -> AgentConfig:
        total = self.episodes * self.steps
        return AgentConfig(
            variant=self.variant,
            gamma=self.gamma,
            epsilon_decay_steps=max(1, math.ceil(0.6 * total)),
            lr=self.lr,
            batch_size=self.batch_size,
            buffer_capacity=self.buffer_capacity,
            target_sync=self.target_sync,
            hidden=self.hidden,
            seed=self.seed,
        )


@dataclass
class RunState:
    current: DataTable
    best_table: DataTable
    best_metric: float
    p_old: float
    step_counter: int = 0
    candidate_evals: int = 0
    records: list = field(default_factory=list)
    last_report: Optional[EvalReport] = None
    baseline_report: Optional[EvalReport] = None


@dataclass(frozen=True)
class BreakthroughEvent:
    episode: int
    step: int
    expressions: tuple
    columns: tuple
    importances: dict
    p_old: float
    p_new: float
    reward: float


@dataclass
class AgentTeam:
    """The three agents plus the run-constant context they act against."""

    c1: Agent
    op: Agent
    c2: Agent
    base_table: DataTable
    protected: frozenset
    baseline: EvalReport
    total_steps: int

    def participants(self, binary: bool) -> tuple:
        return (self.c1, self.op, self.c2) if binary else (self.c1, self.op)


def build_team(config: RunConfig, table: DataTable) -> AgentTeam:
    agent_cfg = config.agent_config()
    baseline = evaluate(table, config.seed)
    return AgentTeam(
        c1=Agent.build(Role.C1, DESCRIPTOR_SIZE, config.k_config, agent_cfg),
        op=Agent.build(Role.OP, 2 * DESCRIPTOR_SIZE, N_OPERATORS, agent_cfg),
        c2=Agent.build(Role.C2, 2 * DESCRIPTOR_SIZE + N_OPERATORS, config.k_config, agent_cfg),
        base_table=table,
        protected=frozenset(table.feature_names),
        baseline=baseline,
        total_steps=config.episodes * config.steps,
    )


def epsilon_at(global_step: int, config: RunConfig) -> float:
    cfg = config.agent_config()
    frac = min(1.0, global_step / cfg.epsilon_decay_steps)
    return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac


def detect_breakthrough(p_old: float, p_new: float, delta: float, best_so_far=None) -> bool:
    """True when the step's jump clears `delta` and sets a new best."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    best = p_old if best_so_far is None else best_so_far
    return (p_new - p_old) >= delta and p_new > best


def episode_reset(state: RunState, base_table: DataTable) -> RunState:
    """Restore the working table; learning artifacts and best persist."""
    state.current = base_table
    return state


def _surviving_indices(names: list, table: DataTable) -> list:
    present = set(table.feature_names)
    return [table.index_of(n) for n in names if n in present]


def step_once(state: RunState, team: AgentTeam, config: RunConfig):
    """One generate/score/learn iteration; returns (reward, kept expressions)."""
    table = state.current
    episode = state.step_counter // config.steps + 1
    step_in_episode = state.step_counter % config.steps + 1
    eps = epsilon_at(state.step_counter, config)

    assignment = cluster_features(table, config.k_config, config.seed)
    cluster_mask = np.zeros(config.k_config, dtype=bool)
    cluster_mask[: assignment.k] = True

    s1 = encode_state(table, Role.C1)
    a1 = team.c1.act(s1, cluster_mask, eps)
    cluster1 = assignment.members[a1]
    cluster1_names = [table.feature_names[i] for i in cluster1]

    s_op = encode_state(table, Role.OP, cluster1)
    a_op = team.op.act(s_op, np.ones(N_OPERATORS, dtype=bool), eps)
    operator = OPERATORS[a_op]
    binary = operator.kind is OpKind.BINARY

    a2 = None
    s2 = None
    cluster2 = None
    if binary:
        onehot = operator_onehot(a_op)
        s2 = encode_state(table, Role.C2, cluster1, onehot)
        a2 = team.c2.act(s2, cluster_mask, eps)
        cluster2 = assignment.members[a2]

    candidates = generate_features(
        table, operator, cluster1, cluster2, cap=config.candidate_cap
    )
    new_names = [render_name(e) for e, _ in candidates]
    appended = table.with_new_columns(new_names, [c for _, c in candidates])
    pruned = prune(appended, config.selector, config.cap, team.protected, config.seed)

    pruned_names = set(pruned.feature_names)
    kept = [(e, c) for (e, c), n in zip(candidates, new_names) if n in pruned_names]
    kept_names = [render_name(e) for e, _ in kept]
    dropped = [n for n in appended.feature_names if n not in pruned_names]

    if pruned is table and state.last_report is not None:
        report = state.last_report  # nothing changed; skip the re-evaluation
    else:
        report = evaluate(pruned, config.seed)
        state.candidate_evals += pruned.n_features
    p_new = report.primary_metric
    signal = reward(p_new, state.p_old, config.eta)

    importances = rank_features(pruned, config.selector, config.seed, cap=config.cap)
    top = top_k_features(pruned, importances, config.top_k)
    proportion, weighted = utilization(top, team.protected, signal.value)

    breakthrough = detect_breakthrough(
        state.p_old, p_new, config.delta, best_so_far=state.best_metric
    )
    event = None
    if breakthrough:
        event = BreakthroughEvent(
            episode=episode,
            step=step_in_episode,
            expressions=tuple(kept_names),
            columns=tuple(np.array(c) for _, c in kept),
            importances={
                n: float(importances[pruned.index_of(n)]) for n in kept_names
            },
            p_old=state.p_old,
            p_new=p_new,
            reward=signal.value,
        )
    if p_new > state.best_metric:
        state.best_metric = p_new
        state.best_table = pruned

    terminal = step_in_episode == config.steps
    ns1 = encode_state(pruned, Role.C1)
    surviving = _surviving_indices(cluster1_names, pruned)
    ns_op = encode_state(pruned, Role.OP, surviving)
    team.c1.observe(Transition(s1, a1, signal.value, ns1, terminal))
    team.op.observe(Transition(s_op, a_op, signal.value, ns_op, terminal))
    if binary:
        ns2 = encode_state(pruned, Role.C2, surviving, operator_onehot(a_op))
        team.c2.observe(Transition(s2, a2, signal.value, ns2, terminal))
    for agent in team.participants(binary):
        agent.learn()

    record = {
        "episode": episode,
        "step": step_in_episode,
        "chosen_cluster_1": a1,
        "operator": operator.symbol,
        "n_candidates": len(candidates),
        "n_kept": len(kept_names),
        "per_fold_metrics": list(report.per_fold),
        "primary_metric": p_new,
        "reward": signal.value,
        "proportion": proportion,
        "weighted_proportion": weighted,
        "n_features": pruned.n_features,
        "epsilon": eps,
        "clusters": {
            str(c): [table.feature_names[i] for i in group]
            for c, group in enumerate(assignment.members)
        },
        "selector": config.selector.value,
        "kept": kept_names,
        "dropped": dropped,
        "importances": {
            name: float(importances[j]) for j, name in enumerate(pruned.feature_names)
        },
    }
    if binary:
        record["chosen_cluster_2"] = a2
    if report.mae is not None:
        record["mae"] = report.mae
        record["rmse"] = report.rmse
    if breakthrough:
        record["breakthrough"] = True

    state.records.append(record)
    state.current = pruned
    state.p_old = p_new
    state.last_report = report
    state.step_counter += 1
    return signal.value, [e for e, _ in kept], event


def run(config: RunConfig, table: DataTable, log_prelude=()):
    """Execute the full search; returns (final state, breakthrough events).

    When `config.out_dir` is set, writes runlog.jsonl (one JSON object per
    step, after any prelude lines), best_table.csv, breakthroughs.json,
    agent checkpoints, and a config echo. With explanation enabled, the
    recorded breakthroughs are judged after the loop finishes and the
    filtered working table is written alongside per-event reports.
    """
    team = build_team(config, table)
    state = RunState(
        current=table,
        best_table=table,
        best_metric=team.baseline.primary_metric,
        p_old=team.baseline.primary_metric,
        last_report=team.baseline,
        baseline_report=team.baseline,
    )
    state.candidate_evals += table.n_features

    log_fh = None
    if config.out_dir is not None:
        config.out_dir.mkdir(parents=True, exist_ok=True)
        log_fh = open(config.out_dir / "runlog.jsonl", "w", encoding="utf-8")
        for line in log_prelude:
            log_fh.write(json.dumps(line) + "\n")
        baseline_line = {
            "baseline": {
                "primary_metric": team.baseline.primary_metric,
                "per_fold": list(team.baseline.per_fold),
            }
        }
        if team.baseline.mae is not None:
            baseline_line["baseline"]["mae"] = team.baseline.mae
            baseline_line["baseline"]["rmse"] = team.baseline.rmse
        log_fh.write(json.dumps(baseline_line) + "\n")

    breakthroughs: list[BreakthroughEvent] = []
    try:
        for ep in range(config.episodes):
            if ep > 0:
                episode_reset(state, team.base_table)
                state.p_old = team.baseline.primary_metric
                state.last_report = team.baseline
            for _ in range(config.steps):
                _, _, event = step_once(state, team, config)
                if event is not None:
                    breakthroughs.append(event)
                if log_fh is not None:
                    log_fh.write(json.dumps(state.records[-1]) + "\n")
    finally:
        if log_fh is not None:
            log_fh.close()

    if config.out_dir is not None:
        _write_artifacts(config, state, team, breakthroughs)
    if config.explain_mode != "off":
        _explain_phase(config, state, team, breakthroughs)
    return state, breakthroughs


def _fmt(value: float) -> str:
    return repr(float(value))


def write_table_csv(table: DataTable, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        header = list(table.feature_names) + [table.target_name]
        fh.write(",".join(f'"{h}"' if "," in h else h for h in header) + "\n")
        for i in range(table.n_rows):
            cells = [_fmt(table.X[i, j]) for j in range(table.n_features)]
            cells.append(_fmt(table.y[i]))
            fh.write(",".join(cells) + "\n")


def config_echo(config: RunConfig) -> dict:
    return {
        "task": config.task.value,
        "episodes": config.episodes,
        "steps": config.steps,
        "k_config": config.k_config,
        "cap": config.cap,
        "candidate_cap": config.candidate_cap,
        "selector": config.selector.value,
        "variant": config.variant.value,
        "eta": config.eta,
        "delta": config.delta,
        "top_k": config.top_k,
        "seed": config.seed,
        "explain_mode": config.explain_mode,
        "gamma": config.gamma,
        "lr": config.lr,
        "batch_size": config.batch_size,
        "buffer_capacity": config.buffer_capacity,
        "target_sync": config.target_sync,
        "hidden": list(config.hidden),
    }


def _write_artifacts(config: RunConfig, state: RunState, team: AgentTeam, breakthroughs) -> None:
    out = config.out_dir
    write_table_csv(state.best_table, out / "best_table.csv")
    payload = [
        {
            "episode": b.episode,
            "step": b.step,
            "expressions": list(b.expressions),
            "importances": b.importances,
            "p_old": b.p_old,
            "p_new": b.p_new,
            "reward": b.reward,
        }
        for b in breakthroughs
    ]
    (out / "breakthroughs.json").write_text(json.dumps(payload, indent=2) + "\n")
    (out / "config.json").write_text(json.dumps(config_echo(config), indent=2) + "\n")
    from .agents import save_checkpoint

    ckpt = out / "checkpoints"
    save_checkpoint(team.c1.net, ckpt / "c1", config.variant)
    save_checkpoint(team.op.net, ckpt / "op", config.variant)
    save_checkpoint(team.c2.net, ckpt / "c2", config.variant)


def _event_history(state: RunState, event: BreakthroughEvent, window: int = 5) -> tuple:
    rows = []
    for rec in state.records:
        if (rec["episode"], rec["step"]) > (event.episode, event.step):
            break
        action = f"cluster {rec['chosen_cluster_1']} -> {rec['operator']}"
        if "chosen_cluster_2" in rec:
            action += f" -> cluster {rec['chosen_cluster_2']}"
        rows.append(
            (
                f"E{rec['episode']},S{rec['step']} metric={rec['primary_metric']:.4f}",
                action,
                rec["reward"],
            )
        )
    return tuple(rows[-window:])


def _explain_phase(config: RunConfig, state: RunState, team: AgentTeam, breakthroughs) -> None:
    endpoint = explain_mod.EndpointConfig.from_env(mode=config.explain_mode)
    final_table = state.current
    reports = []
    for i, event in enumerate(breakthroughs):
        if not event.expressions:
            continue
        request = explain_mod.ExplanationRequest(
            dataset_description=(
                f"{team.base_table.n_rows} rows, {team.base_table.n_features} base features"
            ),
            task_description=f"{config.task.value} scored by cross-validated downstream models",
            history=_event_history(state, event),
            features=tuple(
                (name, event.importances.get(name, 0.0), event.reward)
                for name in event.expressions
            ),
        )
        prompt = explain_mod.build_prompt(request)
        raw = explain_mod.query_endpoint(prompt, endpoint)
        verdict = explain_mod.parse_verdict(raw, event.expressions)
        before = set(final_table.feature_names)
        final_table = explain_mod.filter_features(final_table, verdict, team.protected)
        removed = sorted(before - set(final_table.feature_names))
        reports.append(
            {
                "episode": event.episode,
                "step": event.step,
                "prompt": prompt,
                "response": raw,
                "verdicts": {
                    name: {
                        "interpretable": v.interpretable,
                        "rationale": v.rationale,
                        "confidence": v.confidence,
                    }
                    for name, v in verdict.per_feature.items()
                },
                "removed": removed,
            }
        )
    state.current = final_table
    if config.out_dir is not None:
        explain_dir = config.out_dir / "explain"
        explain_dir.mkdir(parents=True, exist_ok=True)
        for i, rep in enumerate(reports):
            (explain_dir / f"breakthrough_{i:03d}.json").write_text(
                json.dumps(rep, indent=2) + "\n"
            )
        write_table_csv(final_table, config.out_dir / "final_table.csv")
