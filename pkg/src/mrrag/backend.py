"""Chat-completion and embedding backends.

Two implementations share one contract: an HTTP client for self-hosted
chat-completion servers, and a scripted mock that answers from ordered
pattern rules so the whole pipeline runs offline and deterministically.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import requests

logger = logging.getLogger(__name__)

# Step tags attached to chat calls; call-log assertions and per-step
# accounting key off these names.
STEP_TAGS = frozenset({
    "release_extract",
    "rewrite_base",
    "rewrite_filtered",
    "rewrite_versionless",
    "reduce",
    "select",
    "generate",
    "judge",
})

VALID_ROLES = ("system", "user", "assistant")

DEFAULT_TEMPERATURE = 0.01
DEFAULT_MAX_TOKENS = 512
DEFAULT_RETRIES = 3
DEFAULT_BACKOFF_SECONDS = 1.0
DEFAULT_CONCURRENCY = 4

MOCK_EMBEDDING_DIM = 256
MOCK_EMBEDDING_MODEL_ID = "hash-embed-256"


class BackendError(Exception):
    """A chat or embedding call failed for good."""

    def __init__(self, message: str, tag: str = "", retryable: bool = False):
        super().__init__(message)
        self.tag = tag
        self.retryable = retryable


class EmptyCompletionError(BackendError):
    """The model returned an empty completion."""


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in VALID_ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        # user/system turns drive the conversation and must carry text
        if self.role in ("system", "user") and not self.content.strip():
            raise ValueError(f"{self.role} message must not be empty")


@dataclass
class ChatRequest:
    messages: list[ChatMessage]
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    tag: str = ""

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("request needs at least one message")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")

    def rendered_prompt(self) -> str:
        """Prompt text as script rules see it: message contents joined."""
        return "\n\n".join(m.content for m in self.messages)


@dataclass(frozen=True)
class CallRecord:
    tag: str
    prompt: str
    response: str


class ChatBackend(Protocol):
    def chat(self, request: ChatRequest) -> str: ...

    def embed(self, texts: list[str]) -> list[list[float]]: ...


# ── HTTP client ──────────────────────────────────────────────────────────────


class HttpBackend:
    """JSON chat-completion client with retry.

    Speaks the prevailing self-hosted server shape: POST {model, messages,
    temperature, max_tokens} to ``<url>/chat/completions`` and reads
    ``choices[0].message.content``; embeddings go to ``<url>/embeddings``.
    Transient transport failures (connection errors, timeouts, HTTP 429/5xx)
    are retried with exponential backoff; other failures raise immediately.
    """

    def __init__(
        self,
        url: str,
        model: str,
        *,
        retries: int = DEFAULT_RETRIES,
        backoff_seconds: float = DEFAULT_BACKOFF_SECONDS,
        concurrency: int = DEFAULT_CONCURRENCY,
        timeout: float = 120.0,
        embedding_model: str = "",
        post: Callable | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if retries < 1:
            raise ValueError("retries must be >= 1")
        self.url = url.rstrip("/")
        self.model = model
        self.retries = retries
        self.backoff_seconds = backoff_seconds
        self.timeout = timeout
        self.embedding_model = embedding_model or model
        self._post = post if post is not None else requests.post
        self._sleep = sleep
        self._slots = threading.Semaphore(max(1, concurrency))

    # transient: worth another attempt after backoff
    @staticmethod
    def _is_transient_status(status: int) -> bool:
        return status == 429 or status >= 500

    def _request(self, path: str, payload: dict, tag: str) -> dict:
        last_error: Exception | None = None
        for attempt in range(self.retries):
            if attempt:
                self._sleep(self.backoff_seconds * 2 ** (attempt - 1))
            try:
                with self._slots:
                    response = self._post(
                        f"{self.url}{path}", json=payload, timeout=self.timeout
                    )
            except requests.RequestException as exc:
                last_error = exc
                logger.warning("transport failure on %s (attempt %d): %s", path, attempt + 1, exc)
                continue
            if self._is_transient_status(response.status_code):
                last_error = BackendError(
                    f"HTTP {response.status_code} from {path}", tag=tag, retryable=True
                )
                logger.warning("retryable HTTP %d on %s (attempt %d)", response.status_code, path, attempt + 1)
                continue
            if response.status_code != 200:
                raise BackendError(
                    f"HTTP {response.status_code} from {path}", tag=tag, retryable=False
                )
            return response.json()
        raise BackendError(
            f"gave up on {path} after {self.retries} attempts: {last_error}",
            tag=tag,
            retryable=True,
        )

    def chat(self, request: ChatRequest) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        data = self._request("/chat/completions", payload, request.tag)
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed completion payload: {exc}", tag=request.tag)
        if content is None or not content.strip():
            raise EmptyCompletionError("empty completion", tag=request.tag)
        return content

    def embed(self, texts: list[str]) -> list[list[float]]:
        if not texts:
            raise ValueError("texts must be non-empty")
        payload = {"model": self.embedding_model, "input": list(texts)}
        data = self._request("/embeddings", payload, "embed")
        try:
            vectors = [row["embedding"] for row in data["data"]]
        except (KeyError, TypeError) as exc:
            raise BackendError(f"malformed embedding payload: {exc}")
        if len(vectors) != len(texts):
            raise BackendError("embedding count does not match input count")
        dims = {len(v) for v in vectors}
        if len(dims) != 1:
            raise BackendError("inconsistent embedding dimensions", retryable=False)
        return [list(map(float, v)) for v in vectors]


# ── scripted mock ────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class ScriptRule:
    """One pattern → response rule.

    ``match`` is a regular expression searched against the rendered prompt;
    ``response`` is a match-expansion template, so ``\\1`` style references
    substitute captured groups.
    """

    match: str
    response: str


@dataclass
class BackendScript:
    rules: list[ScriptRule] = field(default_factory=list)
    default_response: str = ""

    @classmethod
    def from_file(cls, path: str | Path) -> "BackendScript":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        rules = [ScriptRule(r["match"], r["response"]) for r in raw.get("rules", [])]
        return cls(rules=rules, default_response=raw.get("default", ""))


class MockBackend:
    """Deterministic scripted backend.

    Chat answers come from the first script rule whose pattern matches the
    rendered prompt (``default_response`` otherwise). Embeddings hash the
    token multiset of the text into a fixed number of buckets and normalize,
    so equal texts embed equally and token overlap raises cosine similarity.
    All calls are serialized and recorded for inspection.
    """

    def __init__(
        self,
        script: BackendScript | None = None,
        *,
        embedding_dim: int = MOCK_EMBEDDING_DIM,
        seed: int = 0,
    ):
        self.script = script or BackendScript()
        self.embedding_dim = embedding_dim
        self.seed = seed
        self.calls: list[CallRecord] = []
        self._compiled = [(re.compile(rule.match), rule.response) for rule in self.script.rules]
        self._lock = threading.Lock()

    def chat(self, request: ChatRequest) -> str:
        prompt = request.rendered_prompt()
        with self._lock:
            response = self.script.default_response
            for pattern, template in self._compiled:
                m = pattern.search(prompt)
                if m:
                    response = m.expand(template)
                    break
            if not response.strip():
                raise EmptyCompletionError("empty completion", tag=request.tag)
            self.calls.append(CallRecord(tag=request.tag, prompt=prompt, response=response))
            return response

    def embed(self, texts: list[str]) -> list[list[float]]:
        if not texts:
            raise ValueError("texts must be non-empty")
        with self._lock:
            return [hash_embedding(t, self.embedding_dim, self.seed) for t in texts]

    def tags(self) -> list[str]:
        return [c.tag for c in self.calls]

    def reset(self) -> None:
        with self._lock:
            self.calls.clear()


_TOKEN_RE = re.compile(r"[a-z0-9]+")


def hash_embedding(text: str, dim: int = MOCK_EMBEDDING_DIM, seed: int = 0) -> list[float]:
    """Embed ``text`` as its hashed token multiset, L2-normalized.

    Each lowercase token is hashed (keyed by ``seed``) to a bucket and a
    sign; repeated tokens accumulate. A text with no tokens embeds as the
    zero vector, which scores 0 against everything under cosine.
    """
    if dim <= 0:
        raise ValueError("dim must be positive")
    vec = [0.0] * dim
    for token in _TOKEN_RE.findall(text.lower()):
        digest = hashlib.blake2b(f"{seed}:{token}".encode("utf-8"), digest_size=8).digest()
        bucket = int.from_bytes(digest[:4], "little") % dim
        sign = 1.0 if digest[4] & 1 else -1.0
        vec[bucket] += sign
    norm = math.sqrt(sum(x * x for x in vec))
    if norm > 0.0:
        vec = [x / norm for x in vec]
    return vec
