import http.server
import json
import threading

import numpy as np
import pytest

from featgen.dataset import DataTable, TaskKind
from featgen.errors import AuthFailure, EndpointUnreachable
from featgen.explain import (
    EndpointConfig,
    ExplanationRequest,
    ExplanationVerdict,
    VerdictEntry,
    build_prompt,
    filter_features,
    parse_verdict,
    query_endpoint,
    stub_response,
)
from featgen.orchestrator import RunConfig, run


def request_for(features, history=()):
    return ExplanationRequest(
        dataset_description="500 rows, 8 base features",
        task_description="regression",
        history=tuple(history),
        features=tuple((name, 0.25, 0.05) for name in features),
    )


class TestBuildPrompt:
    def test_contains_expression_verbatim(self):
        prompt = build_prompt(request_for(["(temperature*precipitation)"]))
        assert "(temperature*precipitation)" in prompt

    def test_empty_history(self):
        prompt = build_prompt(request_for(["sqrt(x1)"]))
        assert "history" not in prompt.lower()
        assert "FEATURES TO JUDGE:" in prompt

    def test_two_features_two_answer_slots(self):
        prompt = build_prompt(request_for(["sqrt(x1)", "(x1+x2)"]))
        block = prompt.split("FEATURES TO JUDGE:")[1].split("For each feature")[0]
        slots = [line for line in block.splitlines() if line.strip()]
        assert len(slots) == 2

    def test_history_window_enforced(self):
        with pytest.raises(ValueError):
            request_for(["a"], history=[("s", "a", 0.0)] * 6)


class TestStub:
    def test_depth_rule(self):
        names = ["sqrt((x1*x2))", "sqrt(square((x1*x2)))"]
        raw = stub_response(build_prompt(request_for(names)))
        verdict = parse_verdict(raw, names)
        assert verdict.per_feature["sqrt((x1*x2))"].interpretable          # depth 3
        assert not verdict.per_feature["sqrt(square((x1*x2)))"].interpretable  # depth 4

    def test_base_count_rule(self):
        name = "((x1+x2)*x3)"  # depth 3 but three distinct bases
        verdict = parse_verdict(stub_response(build_prompt(request_for([name]))), [name])
        assert not verdict.per_feature[name].interpretable

    def test_confidence_tracks_depth(self):
        name = "(x1*x2)"  # depth 2
        verdict = parse_verdict(stub_response(build_prompt(request_for([name]))), [name])
        assert verdict.per_feature[name].confidence == pytest.approx(0.8)

    def test_deterministic(self):
        prompt = build_prompt(request_for(["sqrt(x1)", "(x1/x2)"]))
        assert stub_response(prompt) == stub_response(prompt)

    def test_stub_mode_never_uses_network(self):
        config = EndpointConfig(mode="stub", url="http://127.0.0.1:1/unreachable")
        prompt = build_prompt(request_for(["sqrt(x1)"]))
        raw = query_endpoint(prompt, config)
        assert "sqrt(x1)" in raw


class TestParseVerdict:
    def test_well_formed_block(self):
        raw = "a | yes | clean | 0.9\nb | no | messy | 0.4"
        verdict = parse_verdict(raw, ["a", "b"])
        assert verdict.per_feature["a"].interpretable
        assert not verdict.per_feature["b"].interpretable
        assert verdict.per_feature["b"].confidence == 0.4

    def test_garbage_text(self):
        verdict = parse_verdict("no block here at all", ["a", "b"])
        for entry in verdict.per_feature.values():
            assert not entry.interpretable
            assert entry.confidence == 0.0
            assert entry.rationale == "no verdict"

    def test_extra_names_ignored(self):
        raw = "a | yes | fine | 1.0\nzz | yes | spurious | 1.0"
        verdict = parse_verdict(raw, ["a"])
        assert set(verdict.per_feature) == {"a"}


class TestFilterFeatures:
    def table(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((20, 3))
        return DataTable(("x1", "sqrt(x1)", "(x1*x1)"), X, rng.standard_normal(20), TaskKind.REGRESSION)

    def test_all_interpretable_unchanged(self):
        t = self.table()
        verdict = ExplanationVerdict(
            {n: VerdictEntry(True, "", 1.0) for n in t.feature_names}
        )
        assert filter_features(t, verdict, {"x1"}) is t

    def test_removes_exactly_the_bad_one(self):
        t = self.table()
        verdict = ExplanationVerdict(
            {
                "sqrt(x1)": VerdictEntry(True, "", 1.0),
                "(x1*x1)": VerdictEntry(False, "opaque", 0.0),
            }
        )
        out = filter_features(t, verdict, {"x1"})
        assert out.feature_names == ("x1", "sqrt(x1)")

    def test_base_features_protected(self):
        t = self.table()
        verdict = ExplanationVerdict({"x1": VerdictEntry(False, "", 0.0)})
        out = filter_features(t, verdict, {"x1"})
        assert "x1" in out.feature_names
        assert out.n_features == 3


class _Endpoint(http.server.BaseHTTPRequestHandler):
    status = 200
    body = {"text": "a | yes | fine | 1.0"}
    raw_body = None  # set to bytes to send a non-JSON payload

    def do_POST(self):
        self.rfile.read(int(self.headers.get("Content-Length", 0)))
        self.send_response(self.status)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        payload = self.raw_body if self.raw_body is not None else json.dumps(self.body).encode()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture()
def live_server():
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _Endpoint)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}/v1"
    server.shutdown()


class TestQueryEndpoint:
    def test_unreachable_after_retries(self):
        config = EndpointConfig(
            mode="live", url="http://127.0.0.1:9/nothing", timeout=0.2, retries=3, backoff=0.0
        )
        with pytest.raises(EndpointUnreachable):
            query_endpoint("hello", config)

    def test_live_round_trip(self, live_server):
        _Endpoint.status = 200
        config = EndpointConfig(mode="live", url=live_server, token="secret", backoff=0.0)
        assert query_endpoint("hello", config) == "a | yes | fine | 1.0"

    def test_auth_failure(self, live_server):
        _Endpoint.status = 401
        try:
            config = EndpointConfig(mode="live", url=live_server, backoff=0.0)
            with pytest.raises(AuthFailure):
                query_endpoint("hello", config)
        finally:
            _Endpoint.status = 200

    def test_server_error_exhausts_retries(self, live_server):
        _Endpoint.status = 500
        try:
            config = EndpointConfig(mode="live", url=live_server, retries=2, backoff=0.0)
            with pytest.raises(EndpointUnreachable):
                query_endpoint("hello", config)
        finally:
            _Endpoint.status = 200

    def test_non_json_body_returned_verbatim(self, live_server):
        _Endpoint.raw_body = b"plain text verdicts"
        try:
            config = EndpointConfig(mode="live", url=live_server, backoff=0.0)
            assert query_endpoint("hello", config) == "plain text verdicts"
        finally:
            _Endpoint.raw_body = None


class TestRunLevelInvariants:
    def test_stub_never_changes_trajectory(self, small_product_table):
        base = dict(task=TaskKind.REGRESSION, episodes=2, steps=5, k_config=3, cap=20, seed=1)
        off_state, off_events = run(RunConfig(**base, explain_mode="off"), small_product_table)
        stub_state, stub_events = run(RunConfig(**base, explain_mode="stub"), small_product_table)
        assert [r["primary_metric"] for r in off_state.records] == [
            r["primary_metric"] for r in stub_state.records
        ]
        assert off_state.best_metric == stub_state.best_metric
        assert len(off_events) == len(stub_events)
        # stub filtering only ever shrinks the final working table
        assert set(stub_state.current.feature_names) <= set(off_state.current.feature_names)
        assert set(small_product_table.feature_names) <= set(stub_state.current.feature_names)
