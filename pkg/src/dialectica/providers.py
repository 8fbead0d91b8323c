"""External capabilities behind small interfaces, each with an offline implementation.

Chat completion speaks the OpenAI-compatible ``/chat/completions`` schema so the
same client covers hosted APIs and local servers. Scripted providers are pure
functions of the request, which makes whole runs reproducible offline.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol

import httpx
import numpy as np

from .common import append_jsonl, read_jsonl

log = logging.getLogger(__name__)


class ProviderConfigError(RuntimeError):
    pass


class ProviderUnavailable(RuntimeError):
    """All retry attempts against a provider failed."""


class ToolUnavailable(RuntimeError):
    """A tool was invoked in a condition that disables it."""


# -- chat -----------------------------------------------------------------


@dataclass(frozen=True)
class Message:
    role: str
    content: str


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[Message, ...]
    temperature: float = 0.7
    max_tokens: int = 1024
    seed: int | None = None
    # Routing labels (agent, topic, round, phase, ...); never sent over the wire.
    tags: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.messages:
            raise ValueError("messages must be nonempty")
        for m in self.messages:
            if m.role not in ("system", "user"):
                raise ValueError(f"unsupported role {m.role!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    @classmethod
    def from_prompt(cls, prompt: str, *, seed: int | None = None, temperature: float = 0.7,
                    max_tokens: int = 1024, **tags: object) -> "ChatRequest":
        return cls(
            messages=(Message("user", prompt),),
            temperature=temperature,
            max_tokens=max_tokens,
            seed=seed,
            tags=tuple(sorted((k, str(v)) for k, v in tags.items())),
        )

    @property
    def prompt(self) -> str:
        return self.messages[0].content

    @property
    def tag(self) -> dict[str, str]:
        return dict(self.tags)


@dataclass(frozen=True)
class ChatResponse:
    content: str
    provider_id: str
    latency_ms: int


class ChatProvider(Protocol):
    provider_id: str

    def complete(self, request: ChatRequest) -> ChatResponse: ...


def chat(provider: ChatProvider, request: ChatRequest) -> ChatResponse:
    resp = provider.complete(request)
    if not resp.content or not resp.content.strip():
        raise ProviderUnavailable(f"{provider.provider_id} returned empty content")
    return resp


ScriptKey = tuple[str, str, str, str]


class ScriptedChat:
    """Deterministic chat provider.

    Responses come from ``script`` (keyed by ``(agent, topic, round, phase)`` from the
    request tags) or, failing that, from ``responder(request)``.
    """

    def __init__(
        self,
        responder: Callable[[ChatRequest], str] | None = None,
        script: Mapping[ScriptKey, str] | None = None,
        provider_id: str = "scripted",
    ):
        if responder is None:
            from .scripted import default_responder

            responder = default_responder
        self.responder = responder
        self.script = dict(script or {})
        self.provider_id = provider_id
        self.calls: list[ChatRequest] = []
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.calls.append(request)
        t = request.tag
        key = (t.get("agent", ""), t.get("topic", ""), t.get("round", ""), t.get("phase", ""))
        content = self.script[key] if key in self.script else self.responder(request)
        return ChatResponse(content=content, provider_id=self.provider_id, latency_ms=0)


class OpenAIChat:
    """HTTP client for OpenAI-compatible chat-completion endpoints."""

    def __init__(
        self,
        model: str,
        base_url: str = "https://api.openai.com/v1",
        api_key_env: str | None = "OPENAI_API_KEY",
        timeout: float = 120.0,
        max_attempts: int = 3,
        backoff: float = 1.0,
        sleep: Callable[[float], None] = time.sleep,
        transport: httpx.BaseTransport | None = None,
    ):
        headers = {"Content-Type": "application/json"}
        if api_key_env:
            key = os.environ.get(api_key_env, "").strip()
            if not key:
                raise ProviderConfigError(f"missing credentials: environment variable {api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        self.model = model
        self.provider_id = f"openai-compatible:{model}@{base_url}"
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.sleep = sleep
        self.retries = 0
        self._client = httpx.Client(base_url=base_url.rstrip("/"), headers=headers, timeout=timeout,
                                    transport=transport)

    def _post(self, path: str, payload: dict) -> dict:
        last: Exception | None = None
        for attempt in range(self.max_attempts):
            try:
                r = self._client.post(path, json=payload)
                if r.status_code == 429 or r.status_code >= 500:
                    raise httpx.HTTPStatusError(f"status {r.status_code}", request=r.request, response=r)
                r.raise_for_status()
                return r.json()
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                if isinstance(exc, httpx.HTTPStatusError) and exc.response.status_code < 500 \
                        and exc.response.status_code != 429:
                    raise ProviderUnavailable(f"{self.provider_id}: {exc}") from exc
                last = exc
                if attempt + 1 < self.max_attempts:
                    self.retries += 1
                    delay = self.backoff * 2**attempt
                    log.warning("%s attempt %d failed (%s); retrying in %.1fs", self.provider_id,
                                attempt + 1, exc, delay)
                    self.sleep(delay)
        raise ProviderUnavailable(f"{self.provider_id}: {self.max_attempts} attempts failed: {last}")

    def complete(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        t0 = time.perf_counter()
        data = self._post("/chat/completions", payload)
        try:
            content = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderUnavailable(f"{self.provider_id}: malformed response") from exc
        return ChatResponse(content, self.provider_id, int((time.perf_counter() - t0) * 1000))


class LoggedChat:
    """Wraps a provider and appends one JSON line per call to ``providers.log.jsonl``."""

    def __init__(self, inner: ChatProvider, path: Path, clock):
        self.inner = inner
        self.path = Path(path)
        self.clock = clock
        self.provider_id = inner.provider_id
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> ChatResponse:
        record = {"provider": self.provider_id, "tags": request.tag}
        try:
            resp = self.inner.complete(request)
        except Exception as exc:
            record.update(ok=False, error=str(exc), t=self.clock.now())
            with self._lock:
                append_jsonl(self.path, record)
            raise
        record.update(ok=True, latency_ms=resp.latency_ms, t=self.clock.now())
        with self._lock:
            append_jsonl(self.path, record)
        return resp


# -- embeddings -----------------------------------------------------------

_WORD = re.compile(r"[a-z0-9]+")


def word_tokens(text: str) -> list[str]:
    return _WORD.findall(text.lower())


def _bucket(token: str, dim: int) -> int:
    h = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(h, "big") % dim


class HashingEmbedder:
    """Offline encoder: term counts of lowercase word tokens hashed into ``dim`` buckets."""

    provider_id = "hashing"

    def __init__(self, dim: int = 384):
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise ValueError("cannot embed empty text")
        v = np.zeros(self.dim)
        tokens = word_tokens(text) or [text.strip()]
        for tok in tokens:
            v[_bucket(tok, self.dim)] += 1.0
        return v / np.linalg.norm(v)


class RemoteEmbedder:
    """OpenAI-compatible ``/embeddings`` client that downgrades to hashing on failure.

    The downgrade is sticky so one store never mixes vector spaces.
    """

    def __init__(self, model: str, base_url: str, api_key_env: str | None = None,
                 fallback: HashingEmbedder | None = None, transport: httpx.BaseTransport | None = None,
                 timeout: float = 30.0):
        headers = {}
        if api_key_env:
            key = os.environ.get(api_key_env, "").strip()
            if not key:
                raise ProviderConfigError(f"missing credentials: environment variable {api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        self.model = model
        self.fallback = fallback or HashingEmbedder()
        self.dim = self.fallback.dim
        self.downgraded = False
        self.provider_id = f"embeddings:{model}@{base_url}"
        self._client = httpx.Client(base_url=base_url.rstrip("/"), headers=headers, timeout=timeout,
                                    transport=transport)

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise ValueError("cannot embed empty text")
        if not self.downgraded:
            try:
                r = self._client.post("/embeddings", json={"model": self.model, "input": text})
                r.raise_for_status()
                v = np.asarray(r.json()["data"][0]["embedding"], dtype=float)
                if v.shape != (self.dim,):
                    raise ValueError(f"expected dimension {self.dim}, got {v.shape}")
                return v / np.linalg.norm(v)
            except Exception as exc:  # any remote failure downgrades
                log.warning("embedding provider %s failed (%s); downgrading to hashing encoder",
                            self.provider_id, exc)
                self.downgraded = True
        return self.fallback.embed(text)


def embed_text(embedder, text: str) -> np.ndarray:
    return embedder.embed(text)


# -- evidence + web search ------------------------------------------------

EVIDENCE_SOURCES = ("web", "rag_shared", "rag_private", "memory")


@dataclass(frozen=True)
class EvidenceItem:
    source: str
    query: str
    content: str
    retrieved_at: float
    provenance: str

    def __post_init__(self):
        if self.source not in EVIDENCE_SOURCES:
            raise ValueError(f"unknown evidence source {self.source!r}")
        if not self.content:
            raise ValueError("evidence content must be nonempty")

    def to_dict(self) -> dict:
        return {"source": self.source, "query": self.query, "content": self.content,
                "retrieved_at": self.retrieved_at, "provenance": self.provenance}

    @classmethod
    def from_dict(cls, d: Mapping) -> "EvidenceItem":
        return cls(d["source"], d["query"], d["content"], float(d["retrieved_at"]), d["provenance"])


def normalize_query(query: str) -> str:
    return " ".join(query.lower().split())


class ScriptedSearch:
    provider_id = "scripted-search"

    def __init__(self, responder: Callable[[str], str] | None = None):
        self.responder = responder or (
            lambda q: f"**Evidence:** summary of recent findings relevant to '{q}'. [1] scripted source"
        )

    def search(self, query: str) -> str:
        return self.responder(query)


class PerplexitySearch:
    """Summarizing web search through Perplexity's chat-completion API."""

    def __init__(self, model: str = "sonar", base_url: str = "https://api.perplexity.ai",
                 api_key_env: str = "PERPLEXITY_API_KEY", **kwargs):
        self._chat = OpenAIChat(model=model, base_url=base_url, api_key_env=api_key_env, **kwargs)
        self.provider_id = f"perplexity:{model}"

    def search(self, query: str) -> str:
        req = ChatRequest.from_prompt(
            "Summarize the most relevant recent, authoritative evidence for the following query in "
            f"markdown, with numbered source references.\n\nQuery: {query}",
            temperature=0.0,
        )
        return self._chat.complete(req).content


@dataclass
class WebSearchClient:
    """Query enrichment + normalized-query cache in front of a search backend."""

    backend: object
    cache_path: Path | None = None
    enabled: bool = True
    year: int | None = None
    clock: object = None
    remote_calls: int = 0
    last_error: str | None = None
    _cache: dict[str, dict] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def __post_init__(self):
        if self.year is None:
            self.year = _dt.date.today().year
        if self.cache_path is not None:
            self.cache_path = Path(self.cache_path)
            for rec in read_jsonl(self.cache_path):
                self._cache[rec["key"]] = rec

    def enrich(self, query: str, topic_tag: str = "") -> str:
        parts = [query.strip()]
        if topic_tag:
            parts.append(f"(context: {topic_tag.strip()})")
        parts.append(f"recent evidence {self.year}")
        return " ".join(parts)

    def search(self, query: str, topic_tag: str = "") -> list[EvidenceItem]:
        """Return zero or one evidence item; remote failures yield an empty list."""
        if not self.enabled:
            raise ToolUnavailable("web search is disabled for this agent/condition")
        enriched = self.enrich(query, topic_tag)
        key = normalize_query(enriched)
        now = self.clock.now() if self.clock is not None else time.time()
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return [EvidenceItem("web", enriched, hit["content"], now, f"cache:{hit['provider']}:{key}")]
        try:
            self.remote_calls += 1
            content = self.backend.search(enriched)
        except Exception as exc:
            self.last_error = f"{getattr(self.backend, 'provider_id', 'search')}: {exc}"
            log.warning("web search failed: %s", self.last_error)
            return []
        if not content or not content.strip():
            self.last_error = "empty search result"
            return []
        rec = {"key": key, "query": enriched, "content": content,
               "provider": getattr(self.backend, "provider_id", "search")}
        with self._lock:
            self._cache[key] = rec
            if self.cache_path is not None:
                append_jsonl(self.cache_path, rec)
        return [EvidenceItem("web", enriched, content, now, f"{rec['provider']}:{key}")]


# -- construction from JSON specs -------------------------------------------


def chat_from_spec(spec: Mapping | None) -> ChatProvider:
    """``{"type": "scripted"}``, ``{"type": "scripted_judge", "favor": ...}`` or
    ``{"type": "openai", "model": ..., "base_url": ..., "api_key_env": ...}``."""
    spec = dict(spec or {"type": "scripted"})
    kind = spec.pop("type", "scripted")
    if kind == "scripted":
        return ScriptedChat()
    if kind == "scripted_judge":
        from .scripted import make_judge_responder

        return ScriptedChat(make_judge_responder(spec.get("favor"), float(spec.get("strength", 0.9))),
                            provider_id="scripted-judge")
    if kind == "openai":
        if "model" not in spec:
            raise ProviderConfigError("openai chat spec needs 'model'")
        return OpenAIChat(**spec)
    raise ProviderConfigError(f"unknown chat provider type {kind!r}")


def embedder_from_spec(spec: Mapping | None):
    spec = dict(spec or {"type": "hashing"})
    kind = spec.pop("type", "hashing")
    if kind == "hashing":
        return HashingEmbedder(int(spec.get("dim", 384)))
    if kind == "openai":
        return RemoteEmbedder(**spec)
    raise ProviderConfigError(f"unknown embedding provider type {kind!r}")


def search_from_spec(spec: Mapping | None):
    spec = dict(spec or {"type": "scripted"})
    kind = spec.pop("type", "scripted")
    if kind == "scripted":
        return ScriptedSearch()
    if kind == "perplexity":
        return PerplexitySearch(**spec)
    raise ProviderConfigError(f"unknown search provider type {kind!r}")
