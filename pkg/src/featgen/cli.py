"""Command-line surface.

Subcommands:

    run                full generation pipeline on a CSV
    baseline           score a CSV without generating anything
    compare-agents     the four Q-learning variants on identical seeds
    compare-selectors  the six selector arms on identical seeds
    report             turn a run log into plot-ready CSVs and a summary
    synth              write a synthetic benchmark CSV

Exit codes: 0 success, 2 configuration error, 3 data error, 4 endpoint
error (live explanation mode). Every flag mirrors a config-file key; a
flag beats the file, the file beats the default.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .agents import Variant
from .dataset import TaskKind, normalize, read_csv
from .errors import (
    AuthFailure,
    DegenerateTarget,
    DuplicateHeader,
    EmptyAfterCleaning,
    EndpointUnreachable,
    FeatgenError,
    MissingTarget,
    TooFewSamples,
)
from .orchestrator import RunConfig, run
from .selection import SelectorKind

METRIC_NAMES = {
    TaskKind.REGRESSION: "1-RAE",
    TaskKind.CLASSIFICATION: "weighted-F1",
    TaskKind.ANOMALY: "ROC-AUC",
}

_TASKS = {t.value: t for t in TaskKind}
_AGENTS = {v.value: v for v in Variant}
_SELECTORS = {s.value: s for s in SelectorKind}

_DEFAULTS = {
    "episodes": 5,
    "steps": 10,
    "agent": "dqn",
    "selector": "kbest",
    "clusters": 5,
    "cap": 30,
    "eta": 1.0,
    "delta": 0.01,
    "topk": 10,
    "seed": 0,
    "explain": None,  # flag > config file > EXPLAIN_MODE env > off
}


def format_change(old: float, new: float) -> str:
    """Signed relative change, one decimal place ('+18.5%')."""
    if old == 0:
        return "n/a"
    return f"{100.0 * (new - old) / old:+.1f}%"


def make_synthetic(kind: str, n: int, noise: float, seed: int):
    """Eight standard-normal base features and a target per benchmark kind."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 8))
    eps = rng.standard_normal(n)
    if kind == "product":
        y = X[:, 0] * X[:, 1] + noise * eps
    elif kind == "ratio":
        y = X[:, 0] / (np.abs(X[:, 1]) + 1.0) + noise * eps
    elif kind == "quadratic":
        y = X[:, 0] ** 2 - X[:, 2] + noise * eps
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    names = tuple(f"x{j + 1}" for j in range(8))
    return names, X, y


def write_synthetic_csv(path, kind: str, n: int, noise: float, seed: int) -> None:
    names, X, y = make_synthetic(kind, n, noise, seed)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(names) + ",y\n")
        for i in range(n):
            fh.write(",".join(repr(float(v)) for v in X[i]) + f",{float(y[i])!r}\n")


# -- argument plumbing --------------------------------------------------------


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="input CSV path")
    p.add_argument("--target", help="target column name")
    p.add_argument("--task", choices=sorted(_TASKS))
    p.add_argument("--episodes", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--agent", choices=sorted(_AGENTS))
    p.add_argument("--selector", choices=sorted(_SELECTORS))
    p.add_argument("--clusters", type=int)
    p.add_argument("--cap", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--topk", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--explain", choices=["off", "stub", "live"])
    p.add_argument("--config", help="flat JSON config file (flag beats file)")


def _merge_options(args: argparse.Namespace) -> dict:
    merged = dict(_DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise _ConfigError(f"cannot read config file: {exc}") from exc
        if not isinstance(loaded, dict):
            raise _ConfigError("config file must hold a flat JSON object")
        merged.update(loaded)
    for key, value in vars(args).items():
        if key in ("command", "config", "parallel"):
            continue
        if value is not None:
            merged[key] = value
    if merged.get("explain") is None:
        merged["explain"] = os.environ.get("EXPLAIN_MODE", "off")
    return merged


class _ConfigError(FeatgenError):
    pass


def _require(merged: dict, *keys) -> None:
    missing = [k for k in keys if not merged.get(k)]
    if missing:
        raise _ConfigError(f"missing required option(s): {', '.join('--' + k for k in missing)}")


def _build_config(merged: dict, out_dir) -> RunConfig:
    try:
        return RunConfig(
            task=_TASKS[merged["task"]],
            episodes=int(merged["episodes"]),
            steps=int(merged["steps"]),
            k_config=int(merged["clusters"]),
            cap=int(merged["cap"]),
            selector=_SELECTORS[merged["selector"]],
            variant=_AGENTS[merged["agent"]],
            eta=float(merged["eta"]),
            delta=float(merged["delta"]),
            top_k=int(merged["topk"]),
            seed=int(merged["seed"]),
            out_dir=out_dir,
            explain_mode=merged["explain"],
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise _ConfigError(f"invalid configuration: {exc}") from exc


def _load_normalized(merged: dict):
    table, cleaning = read_csv(merged["data"], merged["target"], _TASKS[merged["task"]])
    normalized, params = normalize(table, -1.0, 1.0)
    prelude = [
        {"cleaning": cleaning.as_dict()},
        {"note": "target column left unscaled; features mapped onto [-1, 1]"},
    ]
    return normalized, prelude


def _print_run_summary(config: RunConfig, baseline: float, best: float) -> None:
    name = METRIC_NAMES[config.task]
    print(f"baseline {name}: {baseline:.6f}")
    print(f"best {name}:     {best:.6f}")
    print(f"change:          {format_change(baseline, best)}")


# -- commands -----------------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    merged = _merge_options(args)
    _require(merged, "data", "target", "task")
    out_dir = Path(merged["out"]) if merged.get("out") else None
    config = _build_config(merged, out_dir)
    table, prelude = _load_normalized(merged)
    state, events = run(config, table, log_prelude=prelude)
    _print_run_summary(config, state.baseline_report.primary_metric, state.best_metric)
    print(f"breakthroughs: {len(events)}")
    return 0


def cmd_baseline(args: argparse.Namespace) -> int:
    merged = _merge_options(args)
    _require(merged, "data", "target", "task")
    from .evaluator import evaluate

    table, _ = _load_normalized(merged)
    report = evaluate(table, int(merged["seed"]))
    name = METRIC_NAMES[table.task]
    print(f"per-fold {name}: {[round(v, 6) for v in report.per_fold]}")
    print(f"baseline {name}: {report.primary_metric:.6f}")
    if report.mae is not None:
        print(f"baseline MAE:  {report.mae:.6f}")
        print(f"baseline RMSE: {report.rmse:.6f}")
    return 0


def _run_arm(merged: dict, out_dir, **overrides) -> dict:
    """One isolated pipeline run; used by the compare commands."""
    arm_merged = dict(merged)
    arm_merged.update({k: v for k, v in overrides.items() if v is not None})
    config = _build_config(arm_merged, out_dir)
    table, prelude = _load_normalized(arm_merged)
    started = time.perf_counter()
    state, events = run(config, table, log_prelude=prelude)
    elapsed = time.perf_counter() - started
    props = [r["proportion"] for r in state.records]
    wprops = [r["weighted_proportion"] for r in state.records]
    return {
        "baseline": state.baseline_report.primary_metric,
        "best": state.best_metric,
        "candidate_evals": state.candidate_evals,
        "seconds": elapsed,
        "mean_proportion": float(np.mean(props)) if props else 0.0,
        "mean_weighted_proportion": float(np.mean(wprops)) if wprops else 0.0,
        "n_breakthroughs": len(events),
    }


def cmd_compare_agents(args: argparse.Namespace) -> int:
    merged = _merge_options(args)
    _require(merged, "data", "target", "task", "out")
    out = Path(merged["out"])
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    jobs = [(variant, out / f"arm_{variant}") for variant in sorted(_AGENTS)]
    results = _execute_arms(
        [(merged, arm_out, {"agent": variant}) for variant, arm_out in jobs],
        parallel=getattr(args, "parallel", False),
    )
    for (variant, _), res in zip(jobs, results):
        rows.append((variant, res["baseline"], res["best"], res["best"] - res["baseline"]))
    with open(out / "variants.csv", "w", encoding="utf-8") as fh:
        fh.write("variant,baseline,best,delta\n")
        for variant, base, best, delta in rows:
            fh.write(f"{variant},{base!r},{best!r},{delta!r}\n")
    with open(out / "variants_long.csv", "w", encoding="utf-8") as fh:
        fh.write("variant,metric,value\n")
        for variant, base, best, delta in rows:
            for metric, value in (("baseline", base), ("best", best), ("delta", delta)):
                fh.write(f"{variant},{metric},{value!r}\n")
    for variant, base, best, delta in rows:
        print(f"{variant:13s} baseline={base:.6f} best={best:.6f} ({format_change(base, best)})")
    return 0


def cmd_compare_selectors(args: argparse.Namespace) -> int:
    merged = _merge_options(args)
    _require(merged, "data", "target", "task", "out")
    out = Path(merged["out"])
    out.mkdir(parents=True, exist_ok=True)
    arms = sorted(_SELECTORS)
    results = _execute_arms(
        [(merged, out / f"arm_{arm}", {"selector": arm}) for arm in arms],
        parallel=getattr(args, "parallel", False),
    )
    with open(out / "selectors.csv", "w", encoding="utf-8") as fh:
        fh.write(
            "selector,best,seconds,mean_proportion,mean_weighted_proportion,candidate_evals\n"
        )
        for arm, res in zip(arms, results):
            fh.write(
                f"{arm},{res['best']!r},{res['seconds']:.3f},"
                f"{res['mean_proportion']!r},{res['mean_weighted_proportion']!r},"
                f"{res['candidate_evals']}\n"
            )
    for arm, res in zip(arms, results):
        print(
            f"{arm:11s} best={res['best']:.6f} t={res['seconds']:.1f}s "
            f"prop={res['mean_proportion']:.4f} wprop={res['mean_weighted_proportion']:.4f} "
            f"evals={res['candidate_evals']}"
        )
    return 0


def _arm_worker(payload):
    merged, out_dir, overrides = payload
    return _run_arm(merged, out_dir, **overrides)


def _execute_arms(jobs, parallel: bool = False):
    if not parallel:
        return [_arm_worker(job) for job in jobs]
    with concurrent.futures.ProcessPoolExecutor() as pool:
        return list(pool.map(_arm_worker, jobs))


def cmd_report(args: argparse.Namespace) -> int:
    log_path = Path(args.log)
    out = Path(args.out) if args.out else log_path.parent
    out.mkdir(parents=True, exist_ok=True)
    baseline = None
    steps = []
    try:
        with open(log_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                if "baseline" in obj:
                    baseline = obj["baseline"]
                elif "episode" in obj:
                    steps.append(obj)
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        print(f"error: malformed run log: {exc}", file=sys.stderr)
        return 3
    if not steps:
        print("error: run log contains no step records", file=sys.stderr)
        return 3

    best = None
    with open(out / "series.csv", "w", encoding="utf-8") as fh:
        fh.write("global_step,episode,step,primary_metric,best_so_far\n")
        for i, rec in enumerate(steps):
            metric = rec["primary_metric"]
            best = metric if best is None or metric > best else best
            fh.write(f"{i + 1},{rec['episode']},{rec['step']},{metric!r},{best!r}\n")

    with open(out / "breakthroughs.csv", "w", encoding="utf-8") as fh:
        fh.write("expression,step,importance\n")
        for rec in steps:
            if not rec.get("breakthrough"):
                continue
            label = f"E{rec['episode']},S{rec['step']}"
            for name in rec.get("kept", []):
                imp = rec.get("importances", {}).get(name, 0.0)
                fh.write(f'"{name}","{label}",{imp!r}\n')

    best_rec = max(steps, key=lambda r: r["primary_metric"])
    lines = ["metric,original,generated,change"]
    if baseline is not None:
        base_primary = baseline["primary_metric"]
        lines.append(
            f"primary,{base_primary!r},{best_rec['primary_metric']!r},"
            f"{format_change(base_primary, best_rec['primary_metric'])}"
        )
        if "mae" in baseline and "mae" in best_rec:
            lines.append(
                f"MAE,{baseline['mae']!r},{best_rec['mae']!r},"
                f"{format_change(baseline['mae'], best_rec['mae'])}"
            )
            lines.append(
                f"RMSE,{baseline['rmse']!r},{best_rec['rmse']!r},"
                f"{format_change(baseline['rmse'], best_rec['rmse'])}"
            )
    (out / "summary.csv").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    try:
        write_synthetic_csv(args.out, args.kind, args.n, args.noise, args.seed)
    except ValueError as exc:
        raise _ConfigError(str(exc)) from exc
    print(f"wrote {args.kind} benchmark ({args.n} rows) to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featgen", description="multi-agent feature generation for tabular data"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="full pipeline run")
    _add_run_flags(p_run)

    p_base = sub.add_parser("baseline", help="score the data without generation")
    _add_run_flags(p_base)

    p_agents = sub.add_parser("compare-agents", help="four Q-learning variants, one seed")
    _add_run_flags(p_agents)
    p_agents.add_argument("--parallel", action="store_true")

    p_sel = sub.add_parser("compare-selectors", help="six selector arms, one seed")
    _add_run_flags(p_sel)
    p_sel.add_argument("--parallel", action="store_true")

    p_rep = sub.add_parser("report", help="summarize a run log")
    p_rep.add_argument("--log", required=True)
    p_rep.add_argument("--out")

    p_syn = sub.add_parser("synth", help="write a synthetic benchmark CSV")
    p_syn.add_argument("--kind", required=True, choices=["product", "ratio", "quadratic"])
    p_syn.add_argument("--n", type=int, required=True)
    p_syn.add_argument("--noise", type=float, required=True)
    p_syn.add_argument("--seed", type=int, required=True)
    p_syn.add_argument("--out", required=True)

    return parser


_COMMANDS = {
    "run": cmd_run,
    "baseline": cmd_baseline,
    "compare-agents": cmd_compare_agents,
    "compare-selectors": cmd_compare_selectors,
    "report": cmd_report,
    "synth": cmd_synth,
}

_DATA_ERRORS = (
    MissingTarget,
    DuplicateHeader,
    EmptyAfterCleaning,
    DegenerateTarget,
    TooFewSamples,
    FileNotFoundError,
)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return _COMMANDS[args.command](args)
    except _ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2
    except (EndpointUnreachable, AuthFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
