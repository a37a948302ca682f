"""Chat and embedding access behind one gateway.

Every model call in the pipeline flows through :class:`LlmGateway`, which
adds a content-addressed disk cache, bounded concurrency, and retry with
exponential backoff. Backends are pluggable: HTTP backends speak an
OpenAI-style JSON protocol, while :class:`ScriptedBackend` and
:class:`HashingEmbedder` make the whole system runnable offline and
deterministically for tests and dry runs.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

import numpy as np
import requests

API_KEY_ENV = "ADRCM_API_KEY"
FAULT_ENV = "ADRCM_FAULT_EXIT_AFTER_CALLS"
FAULT_EXIT_CODE = 86

EMBED_DIM_FALLBACK = 64
UNIT_NORM_TOL = 1e-6


class TransportError(RuntimeError):
    """Transient failure talking to a backend; safe to retry."""


class ProtocolError(RuntimeError):
    """The backend answered, but not in the shape we require."""


class ScriptExhaustedError(RuntimeError):
    """A scripted backend had no reply left for a request."""


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"unknown chat role: {self.role!r}")


@dataclass(frozen=True)
class ChatExchange:
    """One self-contained chat request: messages plus sampling settings."""

    messages: tuple[ChatMessage, ...]
    model_id: str = "default"
    temperature: float = 0.0
    max_tokens: int = 1024

    def __post_init__(self) -> None:
        if not any(m.role == "user" for m in self.messages):
            raise ValueError("exchange needs at least one user message")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


def user_exchange(content: str, *, system: str | None = None, temperature: float = 0.0,
                  model_id: str = "default", max_tokens: int = 1024) -> ChatExchange:
    messages: list[ChatMessage] = []
    if system is not None:
        messages.append(ChatMessage("system", system))
    messages.append(ChatMessage("user", content))
    return ChatExchange(tuple(messages), model_id=model_id,
                        temperature=temperature, max_tokens=max_tokens)


def exchange_key(exchange: ChatExchange) -> str:
    """Stable content hash of an exchange, used for caching and scripting."""
    payload = {
        "messages": [[m.role, m.content] for m in exchange.messages],
        "model_id": exchange.model_id,
        "temperature": exchange.temperature,
        "max_tokens": exchange.max_tokens,
    }
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class ChatBackend(Protocol):
    parallel_safe: bool

    def complete(self, exchange: ChatExchange) -> str: ...


class Embedder(Protocol):
    dimension: int

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]: ...


class ScriptedBackend:
    """Canned chat replies, either an ordered list or keyed by request hash.

    List mode consumes replies in order and is only safe sequentially.
    Map mode answers by ``exchange_key`` and is order-independent, which is
    what resumable end-to-end runs rely on.
    """

    def __init__(self, script: Sequence[str] | Mapping[str, str]):
        self._lock = threading.Lock()
        self.calls = 0
        if isinstance(script, Mapping):
            self._by_key: dict[str, str] | None = dict(script)
            self._queue: list[str] | None = None
            self.parallel_safe = True
        else:
            self._by_key = None
            self._queue = list(script)
            self._cursor = 0
            self.parallel_safe = False

    @classmethod
    def from_file(cls, path: str) -> "ScriptedBackend":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if isinstance(data, dict) and "by_hash" in data:
            return cls(data["by_hash"])
        if isinstance(data, dict) and "replies" in data:
            return cls(data["replies"])
        raise ValueError(f"{path}: expected a 'replies' list or 'by_hash' map")

    def complete(self, exchange: ChatExchange) -> str:
        with self._lock:
            self.calls += 1
            if self._by_key is not None:
                key = exchange_key(exchange)
                try:
                    return self._by_key[key]
                except KeyError:
                    raise ScriptExhaustedError(
                        f"no scripted reply for request {key[:12]}"
                    ) from None
            assert self._queue is not None
            if self._cursor >= len(self._queue):
                raise ScriptExhaustedError(
                    f"script exhausted after {len(self._queue)} replies"
                )
            reply = self._queue[self._cursor]
            self._cursor += 1
            return reply


def _resolve_api_key(explicit: str | None) -> str | None:
    if explicit is not None:
        return explicit
    return os.environ.get(API_KEY_ENV)


class HttpChatBackend:
    """OpenAI-style ``/chat/completions`` client over ``requests``."""

    parallel_safe = True

    def __init__(self, base_url: str, *, api_key: str | None = None,
                 timeout: float = 60.0, session: requests.Session | None = None):
        self.base_url = base_url.rstrip("/")
        self.api_key = _resolve_api_key(api_key)
        self.timeout = timeout
        self.session = session if session is not None else requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def complete(self, exchange: ChatExchange) -> str:
        body = {
            "model": exchange.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in exchange.messages],
            "temperature": exchange.temperature,
            "max_tokens": exchange.max_tokens,
        }
        try:
            response = self.session.post(
                f"{self.base_url}/chat/completions",
                json=body, headers=self._headers(), timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(f"chat request failed: {exc}") from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise TransportError(f"chat backend returned HTTP {response.status_code}")
        if response.status_code != 200:
            raise ProtocolError(
                f"chat backend returned HTTP {response.status_code}: {response.text[:200]}"
            )
        try:
            content = response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed chat response: {exc}") from exc
        if not isinstance(content, str):
            raise ProtocolError("chat response content is not text")
        return content


class HttpEmbeddingBackend:
    """OpenAI-style ``/embeddings`` client over ``requests``."""

    def __init__(self, base_url: str, *, model_id: str = "default",
                 dimension: int = 768, api_key: str | None = None,
                 timeout: float = 60.0, session: requests.Session | None = None):
        self.base_url = base_url.rstrip("/")
        self.model_id = model_id
        self.dimension = dimension
        self.api_key = _resolve_api_key(api_key)
        self.timeout = timeout
        self.session = session if session is not None else requests.Session()

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = self.session.post(
                f"{self.base_url}/embeddings",
                json={"model": self.model_id, "input": list(texts)},
                headers=headers, timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(f"embedding request failed: {exc}") from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise TransportError(f"embedding backend returned HTTP {response.status_code}")
        if response.status_code != 200:
            raise ProtocolError(
                f"embedding backend returned HTTP {response.status_code}: {response.text[:200]}"
            )
        try:
            rows = response.json()["data"]
            vectors = [np.asarray(row["embedding"], dtype=np.float64) for row in rows]
        except (ValueError, KeyError, TypeError) as exc:
            raise ProtocolError(f"malformed embedding response: {exc}") from exc
        if len(vectors) != len(texts):
            raise ProtocolError(
                f"expected {len(texts)} embeddings, got {len(vectors)}"
            )
        for vec in vectors:
            if vec.ndim != 1 or vec.shape[0] != self.dimension:
                raise ProtocolError(
                    f"expected {self.dimension}-dim embeddings, got shape {vec.shape}"
                )
        return vectors


_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_FNV_MASK = (1 << 64) - 1


def _fnv1a64(token: str) -> int:
    value = _FNV_OFFSET
    for byte in token.encode("utf-8"):
        value = ((value ^ byte) * _FNV_PRIME) & _FNV_MASK
    return value


class HashingEmbedder:
    """Deterministic offline embedder: hashed token counts, L2-normalized.

    Whitespace tokens are bucketed by FNV-1a into a fixed number of
    dimensions. Crude, but stable across platforms and good enough to give
    related texts related vectors without any model weights.
    """

    def __init__(self, dimension: int = EMBED_DIM_FALLBACK):
        if dimension <= 0:
            raise ValueError("dimension must be positive")
        self.dimension = dimension

    def embed_one(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float64)
        for token in text.lower().split():
            vec[_fnv1a64(token) % self.dimension] += 1.0
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            vec[0] = 1.0
            return vec
        return vec / norm

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed_one(text) for text in texts]


@dataclass
class RetryPolicy:
    max_attempts: int = 4
    backoff_base: float = 0.5

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.backoff_base < 0:
            raise ValueError("backoff_base must be >= 0")


class _ReplyCache:
    """Chat replies keyed by request hash; one small JSON file per entry.

    Writes go through a temp file and ``os.replace`` so a killed process
    never leaves a truncated entry behind.
    """

    def __init__(self, cache_dir: str | None):
        self.cache_dir = cache_dir
        self._memory: dict[str, str] = {}
        self._lock = threading.Lock()
        if cache_dir is not None:
            os.makedirs(cache_dir, exist_ok=True)

    def _path(self, key: str) -> str:
        assert self.cache_dir is not None
        return os.path.join(self.cache_dir, f"{key}.json")

    def get(self, key: str) -> str | None:
        with self._lock:
            if self.cache_dir is None:
                return self._memory.get(key)
            path = self._path(key)
            if not os.path.exists(path):
                return None
            with open(path, encoding="utf-8") as fh:
                return json.load(fh)["reply"]

    def put(self, key: str, reply: str) -> None:
        with self._lock:
            if self.cache_dir is None:
                self._memory[key] = reply
                return
            path = self._path(key)
            tmp = f"{path}.tmp.{os.getpid()}"
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump({"reply": reply}, fh, ensure_ascii=False)
            os.replace(tmp, path)


@dataclass
class GatewayStats:
    chat_calls: int = 0
    cache_hits: int = 0
    retries: int = 0
    embed_texts: int = 0


class LlmGateway:
    """Single entry point for chat and embedding calls.

    Responsibilities: consult the reply cache before touching the chat
    backend, retry transient transport failures with exponential backoff,
    bound in-flight concurrency, normalize embeddings, and count traffic.
    """

    def __init__(self, chat_backend: ChatBackend, embedder: Embedder | None = None, *,
                 cache_dir: str | None = None, retry: RetryPolicy | None = None,
                 max_in_flight: int = 4, sleep=time.sleep):
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        self.chat_backend = chat_backend
        self.embedder = embedder if embedder is not None else HashingEmbedder()
        self.retry = retry if retry is not None else RetryPolicy()
        self.stats = GatewayStats()
        self._cache = _ReplyCache(cache_dir)
        self._slots = threading.Semaphore(max_in_flight)
        self._stats_lock = threading.Lock()
        self._sleep = sleep
        fault = os.environ.get(FAULT_ENV)
        self._fault_after = int(fault) if fault else None

    def chat(self, exchange: ChatExchange) -> str:
        key = exchange_key(exchange)
        cached = self._cache.get(key)
        if cached is not None:
            with self._stats_lock:
                self.stats.cache_hits += 1
            return cached
        reply = self._complete_with_retry(exchange)
        self._cache.put(key, reply)
        return reply

    def _complete_with_retry(self, exchange: ChatExchange) -> str:
        last_error: TransportError | None = None
        for attempt in range(self.retry.max_attempts):
            if attempt > 0:
                with self._stats_lock:
                    self.stats.retries += 1
                self._sleep(self.retry.backoff_base * 2 ** (attempt - 1))
            with self._slots:
                self._count_live_call()
                try:
                    return self.chat_backend.complete(exchange)
                except TransportError as exc:
                    last_error = exc
        assert last_error is not None
        raise last_error

    def _count_live_call(self) -> None:
        # Fault hook for crash-recovery tests: hard-exit after N live calls.
        with self._stats_lock:
            self.stats.chat_calls += 1
            calls = self.stats.chat_calls
        if self._fault_after is not None and calls > self._fault_after:
            os._exit(FAULT_EXIT_CODE)

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        texts = list(texts)
        if not texts:
            return []
        vectors = self.embedder.embed_batch(texts)
        with self._stats_lock:
            self.stats.embed_texts += len(texts)
        out: list[np.ndarray] = []
        for text, vec in zip(texts, vectors):
            vec = np.asarray(vec, dtype=np.float64)
            norm = float(np.linalg.norm(vec))
            if norm == 0.0:
                raise ProtocolError(f"embedder returned a zero vector for {text[:40]!r}")
            if abs(norm - 1.0) > UNIT_NORM_TOL:
                vec = vec / norm
            out.append(vec)
        return out

    def embed_one(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]


def mock_gateway(script: Sequence[str] | Mapping[str, str], *,
                 cache_dir: str | None = None) -> LlmGateway:
    """Offline gateway over a scripted chat backend and the hashing embedder."""
    return LlmGateway(
        ScriptedBackend(script),
        HashingEmbedder(),
        cache_dir=cache_dir,
        retry=RetryPolicy(max_attempts=1, backoff_base=0.0),
        max_in_flight=1,
    )
