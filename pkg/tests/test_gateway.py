import json
import threading

import pytest

from procut import (
    ChainOracle,
    CompletionRequest,
    FunctionOracle,
    Gateway,
    ScriptedOracle,
    cache_key,
)
from procut.errors import MockMiss, ProcutError, RateLimited, Timeout
from procut.gateway import MockTransport


def req(prompt, **kw):
    return CompletionRequest(model="m", prompt=prompt, **kw)


class TestCompletionRequest:
    def test_defaults(self):
        r = req("hi")
        assert r.temperature == 0.0
        assert r.max_output_tokens == 4000

    def test_empty_prompt_rejected(self):
        with pytest.raises(ProcutError):
            req("")

    def test_negative_temperature_rejected(self):
        with pytest.raises(ProcutError):
            req("hi", temperature=-1)


class TestCacheKey:
    def test_identical_requests_collide(self):
        assert cache_key(req("hi")) == cache_key(req("hi"))

    def test_temperature_distinguishes(self):
        assert cache_key(req("hi")) != cache_key(req("hi", temperature=0.1))

    def test_one_byte_prompt_change(self):
        assert cache_key(req("hi")) != cache_key(req("hi "))

    def test_model_distinguishes(self):
        a = CompletionRequest(model="a", prompt="hi")
        b = CompletionRequest(model="b", prompt="hi")
        assert cache_key(a) != cache_key(b)


class TestComplete:
    def test_scripted(self):
        gw = Gateway(ScriptedOracle({"hi": "yo"}))
        assert gw.complete(req("hi")) == "yo"

    def test_cache_idempotence(self):
        gw = Gateway(ScriptedOracle({"hi": "yo"}))
        gw.complete(req("hi"))
        gw.complete(req("hi"))
        assert gw.ledger.total_calls == 1
        assert gw.ledger.cache_hits == 1

    def test_mock_miss(self):
        gw = Gateway(ScriptedOracle({"hi": "yo"}))
        with pytest.raises(MockMiss):
            gw.complete(req("nope"))

    def test_phase_breakdown(self):
        gw = Gateway(ScriptedOracle({"a": "1", "b": "2"}))
        gw.complete(req("a"), phase="segmentation")
        gw.complete(req("b"), phase="attribution")
        assert gw.ledger.phase_calls["segmentation"] == 1
        assert gw.ledger.phase_calls["attribution"] == 1

    def test_retry_then_surface(self):
        attempts = []

        class Flaky(MockTransport):
            def __call__(self, r):
                attempts.append(1)
                raise RateLimited("busy")

        gw = Gateway(Flaky(), retry_limit=3)
        with pytest.raises(RateLimited):
            gw.complete(req("hi"))
        assert len(attempts) == 4

    def test_retry_recovers(self):
        state = {"n": 0}

        class Flaky(MockTransport):
            def __call__(self, r):
                state["n"] += 1
                if state["n"] < 3:
                    raise Timeout("slow")
                return "ok"

        gw = Gateway(Flaky(), retry_limit=5)
        assert gw.complete(req("hi")) == "ok"
        assert gw.ledger.total_calls == 1


class TestBatch:
    def test_ordered_results_bounded_concurrency(self):
        in_flight = {"now": 0, "peak": 0}
        lock = threading.Lock()
        barrier = threading.Event()

        def fn(prompt):
            with lock:
                in_flight["now"] += 1
                in_flight["peak"] = max(in_flight["peak"], in_flight["now"])
            barrier.wait(0.01)
            with lock:
                in_flight["now"] -= 1
            return prompt.upper()

        gw = Gateway(FunctionOracle(fn), parallelism=10)
        reqs = [req(f"p{i}") for i in range(25)]
        out = gw.batch_complete(reqs)
        assert out == [f"P{i}" for i in range(25)]
        assert in_flight["peak"] <= 10

    def test_in_batch_dedup(self):
        calls = []

        def fn(prompt):
            calls.append(prompt)
            return "x"

        gw = Gateway(FunctionOracle(fn))
        out = gw.batch_complete([req("same")] * 5)
        assert out == ["x"] * 5
        assert len(calls) == 1
        assert gw.ledger.total_calls == 1

    def test_empty_batch(self):
        gw = Gateway(ScriptedOracle({}))
        assert gw.batch_complete([]) == []

    def test_fatal_error_aborts(self):
        gw = Gateway(ScriptedOracle({"ok": "fine"}))
        with pytest.raises(MockMiss):
            gw.batch_complete([req("ok"), req("missing")])


class TestChainOracle:
    def test_falls_through(self):
        chain = ChainOracle([ScriptedOracle({"a": "1"}), ScriptedOracle({"b": "2"})])
        gw = Gateway(chain)
        assert gw.complete(req("a")) == "1"
        assert gw.complete(req("b")) == "2"
        with pytest.raises(MockMiss):
            gw.complete(req("c"))


class TestPersistentCache:
    def test_warm_reload_skips_upstream(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        gw1 = Gateway(ScriptedOracle({"hi": "yo"}), cache_path=path)
        gw1.complete(req("hi"))
        # second gateway with an oracle that would fail on a real call
        gw2 = Gateway(ScriptedOracle({}), cache_path=path)
        assert gw2.complete(req("hi")) == "yo"
        assert gw2.ledger.total_calls == 0

    def test_corrupt_trailing_record_truncated(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        gw1 = Gateway(ScriptedOracle({"hi": "yo"}), cache_path=path)
        gw1.complete(req("hi"))
        with open(path, "a") as fh:
            fh.write('{"key": "broken, no close')
        gw2 = Gateway(ScriptedOracle({}), cache_path=path)
        assert gw2.complete(req("hi")) == "yo"
        # file was repaired: every remaining line parses
        for line in path.read_text().splitlines():
            json.loads(line)

    def test_record_shape(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        gw = Gateway(ScriptedOracle({"hi": "yo"}), cache_path=path)
        gw.complete(req("hi"))
        rec = json.loads(path.read_text().splitlines()[0])
        assert set(rec) == {"key", "model", "response", "created_at"}
        assert rec["key"] == cache_key(req("hi"))
