"""Uniform client for remote chat-completion backends.

One `Gateway` handle serves every endpoint kind (multimodal captioner,
text summarizer, text judge) over the common wire shape

    POST {base_url}/chat/completions
    body: {"model", "messages", "temperature", "max_tokens"}
    read: choices[0].message.content

with per-endpoint concurrency caps, a sliding-minute rate limiter, capped
exponential backoff on transient failures, and an on-disk response cache
keyed by a content digest of (endpoint id, model, canonical request).
Endpoints may instead carry an in-process handler (see `mock_backend`),
which keeps tests hermetic: same code path, no sockets.

Clock, sleep, and RNG are injectable so retry/rate-limit behavior is
testable under a fake clock.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import requests

logger = logging.getLogger(__name__)

MAX_IMAGE_BYTES = 8 * 1024 * 1024

CAPTIONER = "captioner"
SUMMARIZER = "summarizer"
JUDGE = "judge"
ENDPOINT_KINDS = (CAPTIONER, SUMMARIZER, JUDGE)


# ---------------------------------------------------------------------------
# Request / endpoint types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.2
    max_tokens: int = 2048


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    image_ref: str  # path to an image file


@dataclass(frozen=True)
class Message:
    role: str  # system | user | assistant
    parts: tuple[TextPart | ImagePart, ...]


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[Message, ...]
    params: GenerationParams = GenerationParams()

    @staticmethod
    def user_text(text: str, images: list[str] | None = None,
                  params: GenerationParams | None = None) -> "ChatRequest":
        parts: list[TextPart | ImagePart] = [TextPart(text)]
        for ref in images or []:
            parts.append(ImagePart(ref))
        return ChatRequest(
            messages=(Message(role="user", parts=tuple(parts)),),
            params=params or GenerationParams(),
        )

    def with_appended_text(self, line: str) -> "ChatRequest":
        """Same request with `line` appended to the last text part (re-ask helper)."""
        messages = list(self.messages)
        last = messages[-1]
        parts = list(last.parts)
        for i in range(len(parts) - 1, -1, -1):
            if isinstance(parts[i], TextPart):
                parts[i] = TextPart(parts[i].text + "\n" + line)
                break
        else:
            parts.append(TextPart(line))
        messages[-1] = Message(role=last.role, parts=tuple(parts))
        return replace(self, messages=tuple(messages))


@dataclass
class ModelEndpoint:
    id: str
    base_url: str
    model_name: str
    kind: str
    api_key_env: str | None = None
    timeout_s: float = 120.0
    max_inflight: int = 4
    requests_per_minute: int = 60
    handler: "MockResponder | None" = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ENDPOINT_KINDS:
            raise ValueError(f"unknown endpoint kind {self.kind!r}")


@dataclass
class BackoffPolicy:
    initial_s: float = 1.0
    factor: float = 2.0
    cap_s: float = 30.0
    max_attempts: int = 5
    jitter_frac: float = 0.1


@dataclass
class CallRecord:
    """One logical dispatch: how many wire attempts it took and when each was issued."""

    endpoint_id: str
    request_digest: str
    attempts: int
    issued_at: list[float] = field(default_factory=list)
    source: str = "http"  # http | mock


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------

class GatewayError(RuntimeError):
    def __init__(self, message: str, request_digest: str | None = None):
        super().__init__(message)
        self.request_digest = request_digest


class PreconditionError(GatewayError):
    """Request violates the endpoint contract; nothing was sent."""


class AuthError(GatewayError):
    """401/403 from the server; never retried."""


class RetryExhaustedError(GatewayError):
    """Transient failures (network, 429, 5xx, timeout) persisted past the attempt cap."""


class MalformedResponseError(GatewayError):
    """2xx reply whose body does not carry choices[0].message.content."""


class ContextOverflowError(GatewayError):
    """Server rejected the request as exceeding its context window."""


_CONTEXT_OVERFLOW_RE = re.compile(
    r"context[ _-]?length|maximum context|context window|too many tokens", re.IGNORECASE
)


# ---------------------------------------------------------------------------
# Canonical form and digests
# ---------------------------------------------------------------------------

def _load_image(ref: str) -> bytes:
    data = Path(ref).read_bytes()
    if len(data) > MAX_IMAGE_BYTES:
        raise PreconditionError(
            f"image {ref} is {len(data)} bytes; limit is {MAX_IMAGE_BYTES}"
        )
    return data


@dataclass
class PreparedRequest:
    """Request with image bytes resolved; built once per complete() call."""

    request: ChatRequest
    image_bytes: dict[str, bytes]  # image_ref -> content

    @classmethod
    def build(cls, endpoint: ModelEndpoint, request: ChatRequest) -> "PreparedRequest":
        if not request.messages:
            raise PreconditionError("request has no messages")
        image_bytes: dict[str, bytes] = {}
        for m in request.messages:
            for p in m.parts:
                if isinstance(p, ImagePart):
                    if endpoint.kind != CAPTIONER:
                        raise PreconditionError(
                            f"image part sent to text-only endpoint {endpoint.id} ({endpoint.kind})"
                        )
                    if p.image_ref not in image_bytes:
                        image_bytes[p.image_ref] = _load_image(p.image_ref)
        return cls(request=request, image_bytes=image_bytes)

    def canonical(self, endpoint: ModelEndpoint) -> dict:
        """Stable dict for hashing: image parts collapse to content digests."""
        messages = []
        for m in self.request.messages:
            parts = []
            for p in m.parts:
                if isinstance(p, TextPart):
                    parts.append({"text": p.text})
                else:
                    sha = hashlib.sha256(self.image_bytes[p.image_ref]).hexdigest()
                    parts.append({"image_sha256": sha})
            messages.append({"role": m.role, "parts": parts})
        return {
            "endpoint_id": endpoint.id,
            "model": endpoint.model_name,
            "messages": messages,
            "params": {
                "temperature": self.request.params.temperature,
                "max_tokens": self.request.params.max_tokens,
            },
        }

    def digest(self, endpoint: ModelEndpoint) -> str:
        blob = json.dumps(self.canonical(endpoint), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def joined_text(self) -> str:
        return "\n".join(
            p.text for m in self.request.messages for p in m.parts if isinstance(p, TextPart)
        )


def request_digest(endpoint: ModelEndpoint, request: ChatRequest) -> str:
    return PreparedRequest.build(endpoint, request).digest(endpoint)


# ---------------------------------------------------------------------------
# Deterministic in-process mock
# ---------------------------------------------------------------------------

QUALITY_DIMENSION_KEYS = (
    "Relevance",
    "Accuracy",
    "Coherence",
    "Clarity",
    "Breadth and Depth",
    "Reading Experience",
)


class MockResponder:
    """Deterministic stand-in for a model server.

    The reply depends only on (seed, canonical request) and is a valid JSON
    envelope for the detected prompt kind. Every request received is
    recorded in `transcript`. `fail_next()` scripts bounded faults: the
    next n requests get a non-JSON reply, which exercises re-ask paths.
    """

    def __init__(self, seed: str):
        self.seed = seed
        self.transcript: list[dict] = []
        self._lock = threading.Lock()
        self._fail_budget = 0

    def fail_next(self, times: int = 1) -> None:
        with self._lock:
            self._fail_budget += times

    def handle(self, prepared: PreparedRequest, endpoint: ModelEndpoint) -> str:
        digest = hashlib.sha256(
            (self.seed + prepared.digest(endpoint)).encode("utf-8")
        ).hexdigest()
        text = prepared.joined_text()
        with self._lock:
            self.transcript.append(
                {
                    "endpoint_id": endpoint.id,
                    "digest": prepared.digest(endpoint),
                    "text": text,
                    "image_count": len(prepared.image_bytes),
                }
            )
            if self._fail_budget > 0:
                self._fail_budget -= 1
                return "(mock burble with no JSON object at all)"
        return self._reply_for(text, digest)

    def _reply_for(self, text: str, digest: str) -> str:
        token = f"mock-{digest[:8]}"
        # Judge rubrics embed arbitrary candidate text, so they are detected
        # before the captioning envelopes their payload might mention.
        if "evaluating text quality" in text:
            dims = {
                key: 1 + digest_byte(digest, i) % 5
                for i, key in enumerate(QUALITY_DIMENSION_KEYS)
            }
            body = {"Analysis": f"deterministic mock analysis {token}"}
            body.update(dims)
            return json.dumps(body)
        if "detail orientation" in text:
            score = (digest_byte(digest, 0) % 11) / 2.0  # 0.0 .. 5.0 in halves
            return "{'score': %s}" % (int(score) if score.is_integer() else score)
        if "Frame Level Description" in text:
            return json.dumps({"Frame Level Description": token})
        if "Clip Level Description" in text:
            return json.dumps({"Clip Level Description": token})
        if "Video Level Description" in text:
            words = [f"{token}-w{i}" for i in range(1 + digest_byte(digest, 1) % 8)]
            return json.dumps({"Video Level Description": " ".join(words)})
        return json.dumps({"response": token})


def digest_byte(digest_hex: str, i: int) -> int:
    return int(digest_hex[2 * i: 2 * i + 2], 16)


def mock_backend(seed: str, kind: str = CAPTIONER) -> ModelEndpoint:
    """In-process deterministic endpoint; replies depend only on (seed, request)."""
    return ModelEndpoint(
        id=f"mock-{kind}-{seed}",
        base_url=f"mock://{seed}",
        model_name=f"mock-model-{seed}",
        kind=kind,
        timeout_s=5.0,
        max_inflight=64,
        requests_per_minute=1_000_000,
        handler=MockResponder(seed),
    )


# ---------------------------------------------------------------------------
# Rate limiting
# ---------------------------------------------------------------------------

class SlidingWindowLimiter:
    """Never lets more than `limit` acquisitions land in any trailing 60s window."""

    def __init__(self, limit: int, clock: Callable[[], float], sleep: Callable[[float], None]):
        self.limit = limit
        self.clock = clock
        self.sleep = sleep
        self._stamps: list[float] = []
        self._lock = threading.Lock()

    def acquire(self) -> float:
        while True:
            with self._lock:
                now = self.clock()
                self._stamps = [t for t in self._stamps if now - t < 60.0]
                if len(self._stamps) < self.limit:
                    self._stamps.append(now)
                    return now
                wait = self._stamps[0] + 60.0 - now
            self.sleep(max(wait, 0.001))


# ---------------------------------------------------------------------------
# Gateway
# ---------------------------------------------------------------------------

class Gateway:
    """Shareable client handle; safe to use from concurrent workers."""

    def __init__(
        self,
        backoff: BackoffPolicy | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
        session: requests.Session | None = None,
    ):
        self.backoff = backoff or BackoffPolicy()
        self.clock = clock
        self._sleep = sleep
        self.rng = rng or random.Random()
        self.session = session or requests.Session()
        self.calls: list[CallRecord] = []  # network/mock dispatches, completion order
        self.cache_hits: list[dict] = []
        self._limiters: dict[str, SlidingWindowLimiter] = {}
        self._inflight: dict[str, threading.Semaphore] = {}
        self._mock_responders: dict[str, MockResponder] = {}
        self._lock = threading.Lock()

    # -- public API ---------------------------------------------------------

    def complete(self, endpoint: ModelEndpoint, request: ChatRequest) -> str:
        text, _ = self.complete_with_log(endpoint, request)
        return text

    def complete_with_log(
        self, endpoint: ModelEndpoint, request: ChatRequest
    ) -> tuple[str, CallRecord]:
        prepared = PreparedRequest.build(endpoint, request)
        digest = prepared.digest(endpoint)
        record = CallRecord(endpoint_id=endpoint.id, request_digest=digest, attempts=0)
        handler = self._resolve_handler(endpoint)
        record.source = "mock" if handler is not None else "http"
        text = self._dispatch_with_retries(endpoint, prepared, digest, record, handler)
        with self._lock:
            self.calls.append(record)
        return text, record

    def cached_complete(
        self, endpoint: ModelEndpoint, request: ChatRequest, cache_dir: Path
    ) -> str:
        text, _ = self.cached_complete_with_log(endpoint, request, cache_dir)
        return text

    def cached_complete_with_log(
        self, endpoint: ModelEndpoint, request: ChatRequest, cache_dir: Path
    ) -> tuple[str, CallRecord | None]:
        """Returns (text, call record) — record is None when served from cache."""
        prepared = PreparedRequest.build(endpoint, request)
        digest = prepared.digest(endpoint)
        hit = self._cache_read(Path(cache_dir), digest)
        if hit is not None:
            with self._lock:
                self.cache_hits.append({"endpoint_id": endpoint.id, "digest": digest})
            return hit, None
        record = CallRecord(endpoint_id=endpoint.id, request_digest=digest, attempts=0)
        handler = self._resolve_handler(endpoint)
        record.source = "mock" if handler is not None else "http"
        text = self._dispatch_with_retries(endpoint, prepared, digest, record, handler)
        self._cache_write(Path(cache_dir), digest, text, endpoint, prepared)
        with self._lock:
            self.calls.append(record)
        return text, record

    # -- cache --------------------------------------------------------------

    @staticmethod
    def _cache_paths(cache_dir: Path, digest: str) -> tuple[Path, Path]:
        shard = cache_dir / digest[:2]
        return shard / f"{digest}.txt", shard / f"{digest}.meta.json"

    def _cache_read(self, cache_dir: Path, digest: str) -> str | None:
        body, _ = self._cache_paths(cache_dir, digest)
        if not body.exists():
            return None
        try:
            return body.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as e:
            logger.warning("cache entry %s unreadable (%s); treating as miss", body, e)
            return None

    def _cache_write(
        self,
        cache_dir: Path,
        digest: str,
        text: str,
        endpoint: ModelEndpoint,
        prepared: PreparedRequest,
    ) -> None:
        body, meta = self._cache_paths(cache_dir, digest)
        body.parent.mkdir(parents=True, exist_ok=True)
        self._atomic_write(body, text)
        self._atomic_write(
            meta,
            json.dumps(
                {
                    "digest": digest,
                    "endpoint_id": endpoint.id,
                    "model_name": endpoint.model_name,
                    "kind": endpoint.kind,
                    "image_count": len(prepared.image_bytes),
                    "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
                },
                sort_keys=True,
            ),
        )

    @staticmethod
    def _atomic_write(path: Path, content: str) -> None:
        tmp = path.with_suffix(path.suffix + f".tmp{os.getpid()}.{threading.get_ident()}")
        tmp.write_text(content, encoding="utf-8")
        os.replace(tmp, path)

    # -- dispatch -----------------------------------------------------------

    def _resolve_handler(self, endpoint: ModelEndpoint) -> MockResponder | None:
        if endpoint.handler is not None:
            return endpoint.handler
        if endpoint.base_url.startswith("mock://"):
            seed = endpoint.base_url[len("mock://"):]
            with self._lock:
                if endpoint.base_url not in self._mock_responders:
                    self._mock_responders[endpoint.base_url] = MockResponder(seed)
                return self._mock_responders[endpoint.base_url]
        return None

    def _limiter_for(self, endpoint: ModelEndpoint) -> SlidingWindowLimiter:
        with self._lock:
            if endpoint.id not in self._limiters:
                self._limiters[endpoint.id] = SlidingWindowLimiter(
                    endpoint.requests_per_minute, self.clock, self._sleep
                )
            return self._limiters[endpoint.id]

    def _inflight_for(self, endpoint: ModelEndpoint) -> threading.Semaphore:
        with self._lock:
            if endpoint.id not in self._inflight:
                self._inflight[endpoint.id] = threading.Semaphore(endpoint.max_inflight)
            return self._inflight[endpoint.id]

    def _dispatch_with_retries(
        self,
        endpoint: ModelEndpoint,
        prepared: PreparedRequest,
        digest: str,
        record: CallRecord,
        handler: MockResponder | None,
    ) -> str:
        limiter = self._limiter_for(endpoint)
        inflight = self._inflight_for(endpoint)
        delay = self.backoff.initial_s
        last_transient: Exception | None = None
        for attempt in range(1, self.backoff.max_attempts + 1):
            record.attempts = attempt
            record.issued_at.append(limiter.acquire())
            with inflight:
                try:
                    if handler is not None:
                        return handler.handle(prepared, endpoint)
                    return self._http_once(endpoint, prepared, digest)
                except _Transient as e:
                    last_transient = e
            if attempt < self.backoff.max_attempts:
                jitter = self.rng.uniform(0, delay * self.backoff.jitter_frac)
                self._sleep(delay + jitter)
                delay = min(delay * self.backoff.factor, self.backoff.cap_s)
        raise RetryExhaustedError(
            f"{endpoint.id}: still failing after {self.backoff.max_attempts} attempts: {last_transient}",
            request_digest=digest,
        )

    def _http_once(self, endpoint: ModelEndpoint, prepared: PreparedRequest, digest: str) -> str:
        url = endpoint.base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        if endpoint.api_key_env:
            key = os.environ.get(endpoint.api_key_env)
            if key:
                headers["Authorization"] = f"Bearer {key}"
        body = {
            "model": endpoint.model_name,
            "messages": [self._wire_message(m, prepared) for m in prepared.request.messages],
            "temperature": prepared.request.params.temperature,
            "max_tokens": prepared.request.params.max_tokens,
        }
        try:
            resp = self.session.post(url, json=body, headers=headers, timeout=endpoint.timeout_s)
        except (requests.ConnectionError, requests.Timeout) as e:
            raise _Transient(f"network failure: {e}")

        if resp.status_code in (401, 403):
            raise AuthError(f"{endpoint.id}: auth rejected ({resp.status_code})", digest)
        if resp.status_code == 429 or resp.status_code >= 500:
            raise _Transient(f"status {resp.status_code}")
        if resp.status_code >= 400:
            if _CONTEXT_OVERFLOW_RE.search(resp.text or ""):
                raise ContextOverflowError(
                    f"{endpoint.id}: server signaled context overflow", digest
                )
            raise GatewayError(
                f"{endpoint.id}: request rejected with status {resp.status_code}: {resp.text[:300]}",
                digest,
            )
        try:
            payload = resp.json()
            content = payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise MalformedResponseError(
                f"{endpoint.id}: response body lacks choices[0].message.content", digest
            )
        if not isinstance(content, str):
            raise MalformedResponseError(
                f"{endpoint.id}: message content is {type(content).__name__}, not text", digest
            )
        return content

    @staticmethod
    def _wire_message(message: Message, prepared: PreparedRequest) -> dict:
        texts = [p.text for p in message.parts if isinstance(p, TextPart)]
        images = [p for p in message.parts if isinstance(p, ImagePart)]
        if not images:
            return {"role": message.role, "content": "\n".join(texts)}
        content: list[dict] = [{"type": "text", "text": t} for t in texts]
        for img in images:
            data = prepared.image_bytes[img.image_ref]
            media = "image/png" if img.image_ref.lower().endswith(".png") else "image/jpeg"
            uri = f"data:{media};base64,{base64.b64encode(data).decode('ascii')}"
            content.append({"type": "image_url", "image_url": {"url": uri}})
        return {"role": message.role, "content": content}


class _Transient(Exception):
    """Internal marker for failures the retry loop may absorb."""
