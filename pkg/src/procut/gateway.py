"""Uniform black-box completion interface.

Wraps either a real chat-completions HTTP endpoint or a deterministic mock
behind one `Gateway` with persistent caching, bounded-parallel batch
execution, retry/backoff, and an atomic call ledger.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .errors import (
    GatewayError,
    MalformedResponse,
    MockMiss,
    ProcutError,
    RateLimited,
    Timeout,
)

DEFAULT_MAX_OUTPUT_TOKENS = 4000
DEFAULT_PARALLELISM = 10

PHASES = ("segmentation", "attribution", "evaluation")


@dataclass(frozen=True)
class CompletionRequest:
    model: str
    prompt: str
    temperature: float = 0.0
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS

    def __post_init__(self):
        if not self.prompt:
            raise ProcutError("prompt must be non-empty")
        if self.temperature < 0:
            raise ProcutError("temperature must be >= 0")


def cache_key(req: CompletionRequest) -> str:
    payload = json.dumps(
        {
            "model": req.model,
            "prompt": req.prompt,
            "temperature": req.temperature,
            "max_output_tokens": req.max_output_tokens,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class CallLedger:
    total_calls: int = 0
    cache_hits: int = 0
    lookups: int = 0
    wall_time_ms: int = 0
    phase_calls: dict[str, int] = field(default_factory=lambda: {p: 0 for p in PHASES})

    def snapshot(self) -> dict:
        return {
            "total_calls": self.total_calls,
            "cache_hits": self.cache_hits,
            "lookups": self.lookups,
            "wall_time_ms": self.wall_time_ms,
            "phase_calls": dict(self.phase_calls),
        }


def extract_json(text: str):
    """Parse a JSON object from a completion, tolerating ```json fences."""
    fenced = re.search(r"```(?:json)?\s*(.*?)```", text, re.DOTALL)
    candidate = fenced.group(1) if fenced else text
    candidate = candidate.strip()
    try:
        return json.loads(candidate)
    except json.JSONDecodeError:
        # fall back to the widest brace-delimited span
        start, end = candidate.find("{"), candidate.rfind("}")
        if start >= 0 and end > start:
            try:
                return json.loads(candidate[start : end + 1])
            except json.JSONDecodeError:
                pass
    raise MalformedResponse(f"completion is not valid JSON: {text[:200]!r}")


# --- transports -------------------------------------------------------------


class MockTransport:
    """Base for deterministic offline transports."""

    deterministic = True

    def __call__(self, req: CompletionRequest) -> str:  # pragma: no cover
        raise NotImplementedError


class ScriptedOracle(MockTransport):
    """Fixed prompt -> response map; unknown prompts raise MockMiss."""

    def __init__(self, responses: dict[str, str]):
        self.responses = dict(responses)

    def __call__(self, req: CompletionRequest) -> str:
        try:
            return self.responses[req.prompt]
        except KeyError:
            raise MockMiss(req.prompt) from None


class FunctionOracle(MockTransport):
    """Wraps any deterministic prompt -> response function."""

    def __init__(self, fn: Callable[[str], str]):
        self.fn = fn

    def __call__(self, req: CompletionRequest) -> str:
        return self.fn(req.prompt)


class ChainOracle(MockTransport):
    """Tries each oracle in order; MockMiss falls through to the next."""

    def __init__(self, oracles: Sequence[MockTransport]):
        self.oracles = list(oracles)

    def __call__(self, req: CompletionRequest) -> str:
        for oracle in self.oracles[:-1]:
            try:
                return oracle(req)
            except MockMiss:
                continue
        return self.oracles[-1](req)


class HttpTransport:
    """Chat-completions-style JSON over HTTP(S)."""

    deterministic = False

    def __init__(
        self,
        base_url: str,
        auth_env: str = "PROCUT_API_KEY",
        timeout_s: float = 120.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.auth_env = auth_env
        self.timeout_s = timeout_s

    def __call__(self, req: CompletionRequest) -> str:
        import httpx

        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.auth_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        body = {
            "model": req.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        }
        try:
            resp = httpx.post(
                f"{self.base_url}/chat/completions",
                json=body,
                headers=headers,
                timeout=self.timeout_s,
            )
        except httpx.TimeoutException as exc:
            raise Timeout(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise GatewayError(str(exc)) from exc
        if resp.status_code == 429:
            raise RateLimited("upstream rate limit")
        if resp.status_code >= 500:
            raise Timeout(f"upstream {resp.status_code}")
        if resp.status_code != 200:
            raise GatewayError(f"upstream {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise MalformedResponse(f"unexpected payload: {resp.text[:200]}") from exc


class _FakeClock:
    """Deterministic monotone clock: advances 1 ms per upstream call."""

    def __init__(self):
        self._t = 0.0

    def __call__(self) -> float:
        self._t += 0.001
        return self._t


class Gateway:
    """Shared completion front-end with cache, ledger, and retry policy."""

    def __init__(
        self,
        transport: Callable[[CompletionRequest], str],
        cache_path: str | Path | None = None,
        retry_limit: int = 5,
        backoff_base_s: float = 0.5,
        backoff_factor: float = 2.0,
        parallelism: int = DEFAULT_PARALLELISM,
        clock: Callable[[], float] | None = None,
        sleep: Callable[[float], None] | None = None,
    ):
        self.transport = transport
        self.retry_limit = retry_limit
        self.backoff_base_s = backoff_base_s
        self.backoff_factor = backoff_factor
        self.parallelism = max(1, parallelism)
        self.ledger = CallLedger()
        deterministic = getattr(transport, "deterministic", False)
        self.clock = clock or (_FakeClock() if deterministic else time.monotonic)
        self.sleep = sleep or ((lambda s: None) if deterministic else time.sleep)
        self._jitter = random.Random(0)
        self._lock = threading.Lock()
        self._cache: dict[str, str] = {}
        self.cache_path = Path(cache_path) if cache_path else None
        if self.cache_path is not None:
            self._load_cache()

    # -- cache persistence ---------------------------------------------------

    def _load_cache(self):
        if not self.cache_path.exists():
            return
        raw = self.cache_path.read_bytes()
        good_end = 0
        for line in raw.splitlines(keepends=True):
            try:
                rec = json.loads(line.decode("utf-8"))
                self._cache[rec["key"]] = rec["response"]
            except (json.JSONDecodeError, UnicodeDecodeError, KeyError, TypeError):
                # corrupt trailing record: drop it and everything after
                break
            good_end += len(line)
        if good_end < len(raw):
            with open(self.cache_path, "r+b") as fh:
                fh.truncate(good_end)

    def _cache_put(self, key: str, model: str, response: str):
        self._cache[key] = response
        if self.cache_path is not None:
            rec = {
                "key": key,
                "model": model,
                "response": response,
                "created_at": self.clock(),
            }
            with open(self.cache_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")

    # -- completion ----------------------------------------------------------

    def complete(
        self,
        req: CompletionRequest,
        phase: str = "evaluation",
        use_cache: bool = True,
    ) -> str:
        key = cache_key(req)
        with self._lock:
            self.ledger.lookups += 1
            if use_cache and key in self._cache:
                self.ledger.cache_hits += 1
                return self._cache[key]
        if getattr(self.transport, "deterministic", False):
            # fixed 1 ms charge keeps ledgers bit-reproducible under parallelism
            response = self._call_with_retry(req)
            elapsed_ms = 1
        else:
            t0 = self.clock()
            response = self._call_with_retry(req)
            elapsed_ms = max(1, round((self.clock() - t0) * 1000))
        with self._lock:
            self.ledger.total_calls += 1
            self.ledger.phase_calls[phase] = self.ledger.phase_calls.get(phase, 0) + 1
            self.ledger.wall_time_ms += elapsed_ms
            self._cache_put(key, req.model, response)
        return response

    def _call_with_retry(self, req: CompletionRequest) -> str:
        delay = self.backoff_base_s
        for attempt in range(self.retry_limit + 1):
            try:
                return self.transport(req)
            except (Timeout, RateLimited):
                if attempt == self.retry_limit:
                    raise
                jitter = 1.0 + self._jitter.uniform(-0.2, 0.2)
                self.sleep(delay * jitter)
                delay *= self.backoff_factor
        raise GatewayError("unreachable")  # pragma: no cover

    def batch_complete(
        self,
        reqs: Sequence[CompletionRequest],
        parallelism: int | None = None,
        phase: str = "evaluation",
    ) -> list[str]:
        """Complete requests preserving input order, with in-batch dedup."""
        if not reqs:
            return []
        workers = max(1, parallelism or self.parallelism)
        unique: dict[str, CompletionRequest] = {}
        for req in reqs:
            unique.setdefault(cache_key(req), req)
        results: dict[str, str] = {}
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                key: pool.submit(self.complete, req, phase)
                for key, req in unique.items()
            }
            error: BaseException | None = None
            for key, fut in futures.items():
                try:
                    results[key] = fut.result()
                except BaseException as exc:  # noqa: BLE001 - rethrown below
                    if error is None:
                        error = exc
            if error is not None:
                raise error
        return [results[cache_key(req)] for req in reqs]
