"""Chat-completion backends: live HTTP, deterministic mocks, record/replay.

Requests are identified by the SHA-256 of their canonical JSON
serialization, so a recorded session replays byte-identically as long as
the rendered prompts do not change.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Protocol, TypeVar

import requests

from .errors import (
    AuthFailure,
    BackendUnavailable,
    ContextTooLong,
    ReplayMiss,
    UnparseableResponse,
)
from .prompts import FORMAT_REMINDER

T = TypeVar("T")

RETRY_BASE_DELAY = 1.0
RETRY_FACTOR = 2.0
MAX_ATTEMPTS = 5


@dataclass(frozen=True)
class ChatRequest:
    system: str
    user: str
    temperature: float
    max_tokens: int
    model_id: str
    seed_tag: str = ""

    def __post_init__(self):
        if not self.user:
            raise ValueError("ChatRequest.user must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass
class ChatResponse:
    text: str
    backend_id: str
    latency_ms: int
    from_cache: bool = False


def request_hash(req: ChatRequest) -> str:
    payload = {
        "system": req.system,
        "user": req.user,
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
        "model_id": req.model_id,
        "seed_tag": req.seed_tag,
    }
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"),
                           ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class Backend(Protocol):
    backend_id: str

    def complete(self, req: ChatRequest) -> ChatResponse: ...


class MockBackend:
    """Pure-function backend; responder maps a request to its reply text."""

    def __init__(self, responder: Callable[[ChatRequest], str],
                 backend_id: str = "mock"):
        self._responder = responder
        self.backend_id = backend_id
        self.calls: list[ChatRequest] = []
        self._lock = threading.Lock()

    @classmethod
    def from_hash_map(cls, mapping: dict[str, str],
                      backend_id: str = "mock") -> "MockBackend":
        def responder(req: ChatRequest) -> str:
            h = request_hash(req)
            if h not in mapping:
                raise BackendUnavailable(f"mock has no reply for request {h}")
            return mapping[h]

        return cls(responder, backend_id)

    def complete(self, req: ChatRequest) -> ChatResponse:
        with self._lock:
            self.calls.append(req)
        return ChatResponse(self._responder(req), self.backend_id, 0)


class ScriptedBackend(MockBackend):
    """Mock keyed by seed_tag; the standard harness for pipeline tests."""

    def __init__(self, script: dict[str, str], default: Optional[str] = None,
                 backend_id: str = "scripted"):
        self.script = dict(script)

        def responder(req: ChatRequest) -> str:
            if req.seed_tag in self.script:
                return self.script[req.seed_tag]
            if default is not None:
                return default
            raise BackendUnavailable(f"no scripted reply for seed_tag {req.seed_tag!r}")

        super().__init__(responder, backend_id)


class RateLimiter:
    """Spaces request starts so a cap of max_rpm per minute holds."""

    def __init__(self, max_rpm: Optional[int],
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.min_interval = 60.0 / max_rpm if max_rpm else 0.0
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next_start = 0.0

    def wait(self) -> None:
        if self.min_interval <= 0:
            return
        with self._lock:
            now = self._clock()
            delay = self._next_start - now
            start = max(now, self._next_start)
            self._next_start = start + self.min_interval
        if delay > 0:
            self._sleep(delay)


class HttpChatBackend:
    """OpenAI-compatible /chat/completions client with retry and backoff.

    Transient failures (HTTP 429/5xx, connection errors) retry with
    exponential backoff: base 1s, factor 2, at most 5 attempts.
    """

    def __init__(self, base_url: str, api_key_env: str = "MEDCORR_API_KEY",
                 timeout: float = 120.0, max_rpm: Optional[int] = None,
                 post: Optional[Callable] = None,
                 sleep: Callable[[float], None] = time.sleep,
                 backend_id: Optional[str] = None):
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.backend_id = backend_id or f"http:{self.base_url}"
        self._post = post or requests.post
        self._sleep = sleep
        self._limiter = RateLimiter(max_rpm, sleep=sleep)

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, req: ChatRequest) -> ChatResponse:
        messages = []
        if req.system:
            messages.append({"role": "system", "content": req.system})
        messages.append({"role": "user", "content": req.user})
        payload = {
            "model": req.model_id,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        url = f"{self.base_url}/chat/completions"
        last_error = "no attempt made"
        for attempt in range(MAX_ATTEMPTS):
            if attempt > 0:
                self._sleep(RETRY_BASE_DELAY * RETRY_FACTOR ** (attempt - 1))
            self._limiter.wait()
            started = time.monotonic()
            try:
                resp = self._post(url, json=payload, headers=self._headers(),
                                  timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = f"connection error: {exc}"
                continue
            latency_ms = int((time.monotonic() - started) * 1000)
            if resp.status_code == 200:
                try:
                    text = resp.json()["choices"][0]["message"]["content"]
                except (KeyError, IndexError, ValueError) as exc:
                    raise BackendUnavailable(f"malformed completion payload: {exc}")
                return ChatResponse(text, self.backend_id, latency_ms)
            if resp.status_code in (401, 403):
                raise AuthFailure(f"HTTP {resp.status_code} from {url}")
            body = getattr(resp, "text", "") or ""
            if resp.status_code == 400 and "context" in body.lower():
                raise ContextTooLong(body[:200])
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                continue
            raise BackendUnavailable(f"HTTP {resp.status_code} from {url}: {body[:200]}")
        raise BackendUnavailable(
            f"giving up after {MAX_ATTEMPTS} attempts: {last_error}")


class _SessionFile:
    """Append-only JSONL of {hash, request, response, ts} records."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self.records: dict[str, str] = {}
        if self.path.is_file():
            with self.path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line or line.startswith("#"):
                        continue
                    rec = json.loads(line)
                    self.records[rec["hash"]] = rec["response"]["text"]

    def append(self, h: str, req: ChatRequest, text: str) -> None:
        rec = {
            "hash": h,
            "request": {
                "system": req.system, "user": req.user,
                "temperature": req.temperature, "max_tokens": req.max_tokens,
                "model_id": req.model_id, "seed_tag": req.seed_tag,
            },
            "response": {"text": text},
            "ts": time.time(),
        }
        with self._lock:
            self.records[h] = text
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")


class RecordingBackend:
    """Wraps a live backend; serves session hits, records misses."""

    def __init__(self, inner: Backend, session_path: str | Path):
        self.inner = inner
        self.backend_id = f"record({inner.backend_id})"
        self._session = _SessionFile(session_path)

    def complete(self, req: ChatRequest) -> ChatResponse:
        h = request_hash(req)
        hit = self._session.records.get(h)
        if hit is not None:
            return ChatResponse(hit, self.backend_id, 0, from_cache=True)
        resp = self.inner.complete(req)
        self._session.append(h, req, resp.text)
        return resp


class ReplayBackend:
    """Serves exclusively from a session file; a miss is an error."""

    def __init__(self, session_path: str | Path):
        path = Path(session_path)
        if not path.is_file():
            raise FileNotFoundError(f"replay session not found: {path}")
        self.backend_id = "replay"
        self._session = _SessionFile(path)

    def complete(self, req: ChatRequest) -> ChatResponse:
        h = request_hash(req)
        hit = self._session.records.get(h)
        if hit is None:
            raise ReplayMiss(h)
        return ChatResponse(hit, self.backend_id, 0, from_cache=True)


def record_replay(session_path: str | Path,
                  live: Optional[Backend] = None) -> Backend:
    """Record mode when a live backend is given, replay mode otherwise."""
    if live is not None:
        return RecordingBackend(live, session_path)
    return ReplayBackend(session_path)


def complete_parsed(backend: Backend, req: ChatRequest,
                    parser: Callable[[str], T]) -> tuple[T, ChatResponse]:
    """Run a request and parse it, retrying once with a format reminder."""
    resp = backend.complete(req)
    try:
        return parser(resp.text), resp
    except UnparseableResponse:
        retry = replace(req, user=req.user + "\n\n" + FORMAT_REMINDER,
                        seed_tag=req.seed_tag + "|retry1")
        resp = backend.complete(retry)
        return parser(resp.text), resp
