"""Interpretability gate over breakthrough features.

After a run finishes, each recorded breakthrough is packaged into a
prompt for a language-model endpoint which must answer in a fixed
machine-readable block, one line per feature:

    name | yes/no | rationale | confidence

Features judged non-interpretable are dropped from the final working
table (never from the ingested base features). A deterministic offline
stub stands in for the endpoint by default: it calls a feature
interpretable iff its expression tree has depth <= 3 and draws on at most
2 distinct base features, with confidence 1 - depth/10. That keeps the
whole pipeline runnable and testable with no network access.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import requests

from .dataset import DataTable
from .errors import AuthFailure, EndpointUnreachable
from .transform import base_names, depth, parse_name

HISTORY_WINDOW = 5
_FEATURE_HEADER = "FEATURES TO JUDGE:"
_ANSWER_HEADER = "ANSWER BLOCK:"

MAX_DEPTH = 3
MAX_BASES = 2


@dataclass(frozen=True)
class ExplanationRequest:
    dataset_description: str
    task_description: str
    history: tuple  # (state summary, action description, reward) rows
    features: tuple  # (expression name, importance, reward delta) rows

    def __post_init__(self):
        if len(self.history) > HISTORY_WINDOW:
            raise ValueError(f"history window is {HISTORY_WINDOW} steps")


@dataclass(frozen=True)
class VerdictEntry:
    interpretable: bool
    rationale: str
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")


@dataclass(frozen=True)
class ExplanationVerdict:
    per_feature: dict


@dataclass(frozen=True)
class EndpointConfig:
    mode: str = "stub"  # off | stub | live
    url: str = ""
    model: str = ""
    token: str = field(default="", repr=False)
    timeout: float = 30.0
    retries: int = 3
    backoff: float = 0.5

    @classmethod
    def from_env(cls, mode=None) -> "EndpointConfig":
        return cls(
            mode=mode or os.environ.get("EXPLAIN_MODE", "stub"),
            url=os.environ.get("EXPLAIN_URL", ""),
            model=os.environ.get("EXPLAIN_MODEL", ""),
            token=os.environ.get("EXPLAIN_TOKEN", ""),
        )


def build_prompt(request: ExplanationRequest) -> str:
    """Deterministic prompt carrying the expressions verbatim."""
    lines = [
        "You are auditing automatically generated tabular features.",
        f"Dataset: {request.dataset_description}",
        f"Task: {request.task_description}",
    ]
    if request.history:
        lines.append("Recent search history (oldest first):")
        for summary, action, rew in request.history:
            lines.append(f"  {summary} | {action} | reward={rew!r}")
    lines.append(_FEATURE_HEADER)
    for name, importance, delta in request.features:
        lines.append(f"  {name} | importance={importance!r} | reward_delta={delta!r}")
    lines.append(
        "For each feature above, judge whether a domain scientist could "
        "interpret it. Answer strictly in the block below, one line per "
        "feature, in the form: name | yes/no | rationale | confidence"
    )
    lines.append(_ANSWER_HEADER)
    return "\n".join(lines)


def _prompt_feature_names(prompt: str) -> list[str]:
    names = []
    in_block = False
    for line in prompt.splitlines():
        if line == _FEATURE_HEADER:
            in_block = True
            continue
        if in_block:
            if not line.startswith("  "):
                break
            names.append(line.strip().split(" | ")[0])
    return names


def stub_response(prompt: str) -> str:
    """Offline verdicts from a syntactic complexity rule.

    Interpretable iff tree depth <= 3 and <= 2 distinct base features;
    confidence = 1 - depth/10. Same prompt, same text, every platform.
    """
    lines = []
    for name in _prompt_feature_names(prompt):
        try:
            expr = parse_name(name, None)
        except Exception:
            lines.append(f"{name} | no | unparseable expression | 0.0")
            continue
        d = depth(expr)
        bases = len(base_names(expr))
        ok = d <= MAX_DEPTH and bases <= MAX_BASES
        verdict = "yes" if ok else "no"
        why = (
            f"depth {d} with {bases} base feature(s) within limits"
            if ok
            else f"too complex: depth {d}, {bases} base feature(s)"
        )
        confidence = max(0.0, 1.0 - d / 10.0)
        lines.append(f"{name} | {verdict} | {why} | {confidence!r}")
    return "\n".join(lines)


def query_endpoint(prompt: str, config: EndpointConfig) -> str:
    """Fetch the raw model text; stub mode never touches the network."""
    if config.mode == "stub":
        return stub_response(prompt)
    if config.mode == "off":
        raise ValueError("explanation is disabled")
    last_error: Exception | None = None
    for attempt in range(config.retries):
        try:
            response = requests.post(
                config.url,
                json={"prompt": prompt, "model": config.model},
                headers={"Authorization": f"Bearer {config.token}"} if config.token else {},
                timeout=config.timeout,
            )
        except requests.RequestException as exc:
            last_error = exc
            if attempt < config.retries - 1:
                time.sleep(config.backoff * 2**attempt)
            continue
        if response.status_code in (401, 403):
            raise AuthFailure(f"endpoint rejected credentials ({response.status_code})")
        if 200 <= response.status_code < 300:
            try:
                body = response.json()
            except ValueError:
                return response.text
            return body["text"] if isinstance(body, dict) and "text" in body else response.text
        last_error = RuntimeError(f"endpoint returned {response.status_code}")
        if attempt < config.retries - 1:
            time.sleep(config.backoff * 2**attempt)
    raise EndpointUnreachable(f"gave up after {config.retries} attempts: {last_error}")


def parse_verdict(raw: str, expected_features) -> ExplanationVerdict:
    """Lenient extraction of the answer block.

    Features without a matching line come back non-interpretable with
    confidence 0; unexpected names in the response are ignored.
    """
    expected = list(expected_features)
    found: dict[str, VerdictEntry] = {}
    for line in raw.splitlines():
        parts = [p.strip() for p in line.split("|")]
        if len(parts) < 2:
            continue
        name = parts[0]
        if name not in expected or name in found:
            continue
        answer = parts[1].lower()
        if answer not in ("yes", "no"):
            continue
        rationale = parts[2] if len(parts) > 2 else ""
        try:
            confidence = float(parts[3]) if len(parts) > 3 else 0.0
        except ValueError:
            confidence = 0.0
        confidence = min(1.0, max(0.0, confidence))
        found[name] = VerdictEntry(answer == "yes", rationale, confidence)
    per_feature = {
        name: found.get(name, VerdictEntry(False, "no verdict", 0.0)) for name in expected
    }
    return ExplanationVerdict(per_feature=per_feature)


def filter_features(table: DataTable, verdicts: ExplanationVerdict, protected) -> DataTable:
    """Drop generated features judged non-interpretable; bases always stay."""
    protected = set(protected)
    doomed = {
        name
        for name, entry in verdicts.per_feature.items()
        if not entry.interpretable and name not in protected
    }
    if not doomed:
        return table
    keep = [n for n in table.feature_names if n not in doomed]
    return table.select(keep)
