"""Clients for the external services the harness talks to.

All chat models are reached through the OpenAI-compatible
``/chat/completions`` wire format; GROBID through its form endpoints;
embeddings through an OpenAI-compatible ``/embeddings`` endpoint. Secrets
are read from ``REFBENCH_<PROFILE>_API_KEY`` and never stored on the profile.
"""

from __future__ import annotations

import hashlib
import logging
import os
import random
import re
import threading
import time
from dataclasses import asdict, dataclass, field

import httpx
import numpy as np

from refbench.errors import (
    AuthError,
    ConfigError,
    DimensionMismatch,
    GrobidError,
    PdfRejected,
    TransportError,
)

log = logging.getLogger(__name__)

KINDS = ("chat_llm", "grobid", "embedding", "replay")
RETRY_STATUS = {429, 500, 502, 503, 504}


@dataclass
class GenParams:
    model_id: str = ""
    temperature: float = 0.0
    top_p: float = 1.0
    # None leaves the output length to the serving backend
    max_output_tokens: int | None = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ConfigError("top_p must be in (0, 1]")
        if self.max_output_tokens is not None and self.max_output_tokens <= 0:
            raise ConfigError("max_output_tokens must be positive")


@dataclass
class BackendProfile:
    name: str
    kind: str
    endpoint: str = ""
    gen: GenParams = field(default_factory=GenParams)
    timeout: float = 120.0
    max_attempts: int = 3
    backoff: float = 1.0
    max_in_flight: int = 4
    context_tokens: int = 32768
    # embedding profiles
    dim: int | None = None
    stub: str | None = None
    # replay profiles
    source: str | None = None
    serves: str | None = None
    mode: str = "replay"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"profile {self.name}: unknown kind {self.kind!r}")
        needs_endpoint = self.kind in ("chat_llm", "grobid") or (self.kind == "embedding" and not self.stub)
        if needs_endpoint and not re.match(r"^https?://[^\s/]+", self.endpoint or ""):
            raise ConfigError(f"profile {self.name}: endpoint must be an http(s) URL")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")

    @property
    def env_var(self) -> str:
        return "REFBENCH_" + re.sub(r"[^A-Z0-9]", "_", self.name.upper()) + "_API_KEY"

    @property
    def api_key(self) -> str | None:
        return os.environ.get(self.env_var)

    def snapshot(self) -> dict:
        """Profile settings for manifests (contains no secrets by construction)."""
        return asdict(self)

    @classmethod
    def from_dict(cls, name: str, data: dict) -> "BackendProfile":
        data = dict(data)
        for secret in [k for k in data if re.search(r"key|token|secret|password", k, re.I)]:
            raise ConfigError(f"profile {name}: put {secret} in ${cls.env_name(name)}, not in the config file")
        gen_keys = ("model_id", "model", "temperature", "top_p", "max_output_tokens")
        gen = {k: data.pop(k) for k in gen_keys if k in data}
        if "model" in gen:
            gen["model_id"] = gen.pop("model")
        try:
            return cls(name=name, gen=GenParams(**gen), **data)
        except TypeError as exc:
            raise ConfigError(f"profile {name}: {exc}") from exc

    @staticmethod
    def env_name(name: str) -> str:
        return "REFBENCH_" + re.sub(r"[^A-Z0-9]", "_", name.upper()) + "_API_KEY"


class _HttpClient:
    """Shared retry/backoff and in-flight limiting."""

    def __init__(self, profile: BackendProfile, transport: httpx.BaseTransport | None = None):
        self.profile = profile
        self.name = profile.name
        headers = {}
        if profile.api_key:
            headers["Authorization"] = f"Bearer {profile.api_key}"
        self._client = httpx.Client(
            base_url=profile.endpoint.rstrip("/"),
            timeout=profile.timeout,
            headers=headers,
            transport=transport,
        )
        self._slots = threading.BoundedSemaphore(max(1, profile.max_in_flight))

    def _post(self, path, **kwargs) -> httpx.Response:
        last = None
        for attempt in range(self.profile.max_attempts):
            if attempt:
                delay = self.profile.backoff * (2 ** (attempt - 1))
                time.sleep(random.uniform(0, delay))
            try:
                with self._slots:
                    resp = self._client.post(path, **kwargs)
            except httpx.HTTPError as exc:
                last = TransportError(f"{self.name}: {type(exc).__name__}: {exc}")
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"{self.name}: HTTP {resp.status_code}; check ${self.profile.env_var}")
            if resp.status_code in RETRY_STATUS:
                last = resp
                continue
            return resp
        if isinstance(last, httpx.Response):
            return last
        raise last

    def close(self):
        self._client.close()


class ChatBackend(_HttpClient):
    def complete(self, prompt: str, gen: GenParams | None = None) -> str:
        """Return the raw model text. Validation and the semantic retry live in the pipeline."""
        gen = gen or self.profile.gen
        body = {
            "model": gen.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": gen.temperature,
            "top_p": gen.top_p,
        }
        if gen.max_output_tokens is not None:
            body["max_tokens"] = gen.max_output_tokens
        resp = self._post("/chat/completions", json=body)
        if resp.status_code >= 400:
            raise TransportError(f"{self.name}: HTTP {resp.status_code}: {resp.text[:2000]}")
        try:
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"{self.name}: unexpected response shape: {exc}") from exc


class GrobidBackend(_HttpClient):
    def parse_citations(self, strings: list[str]) -> str:
        if not strings:
            raise ValueError("parse_citations needs at least one reference string")
        data = {"citations": list(strings), "consolidateCitations": "0", "includeRawCitations": "1"}
        resp = self._post("/api/processCitationList", data=data, headers={"Accept": "application/xml"})
        if resp.status_code != 200:
            raise GrobidError(resp.status_code, resp.text[:500])
        return resp.text

    def process_fulltext(self, pdf_bytes: bytes) -> str:
        if not pdf_bytes:
            raise PdfRejected("empty PDF payload")
        files = {"input": ("document.pdf", pdf_bytes, "application/pdf")}
        data = {"consolidateCitations": "0", "includeRawCitations": "1"}
        resp = self._post("/api/processFulltextDocument", files=files, data=data)
        if resp.status_code == 400:
            raise PdfRejected(resp.text[:500])
        if resp.status_code != 200:
            raise GrobidError(resp.status_code, resp.text[:500])
        return resp.text


def _unit_rows(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return vectors / norms


def instruct(text: str, instruction: str) -> str:
    """Instruction-embedding convention of the e5-instruct family."""
    return f"Instruct: {instruction}\nQuery: {text}" if instruction else text


class EmbeddingBackend(_HttpClient):
    def embed(self, texts: list[str], instruction: str = "") -> list[np.ndarray]:
        if not texts:
            return []
        body = {"model": self.profile.gen.model_id, "input": [instruct(t, instruction) for t in texts]}
        resp = self._post("/embeddings", json=body)
        if resp.status_code >= 400:
            raise TransportError(f"{self.name}: HTTP {resp.status_code}: {resp.text[:2000]}")
        data = sorted(resp.json()["data"], key=lambda d: d.get("index", 0))
        vectors = np.asarray([d["embedding"] for d in data], dtype=float)
        if vectors.shape[0] != len(texts):
            raise DimensionMismatch(f"asked for {len(texts)} vectors, got {vectors.shape[0]}")
        if self.profile.dim and vectors.shape[1] != self.profile.dim:
            raise DimensionMismatch(f"expected dimension {self.profile.dim}, got {vectors.shape[1]}")
        return list(_unit_rows(vectors))


class HashingEmbedder:
    """Offline stand-in for an embedding service: signed feature hashing of word
    unigrams, L2-normalized. Deterministic across runs and platforms."""

    def __init__(self, dim: int = 256, name: str = "hashing"):
        self.dim = dim
        self.name = name

    def embed(self, texts: list[str], instruction: str = "") -> list[np.ndarray]:
        out = np.zeros((len(texts), self.dim))
        for row, text in enumerate(texts):
            for token in re.findall(r"\w+", instruct(text, instruction).casefold()):
                h = int.from_bytes(hashlib.blake2b(token.encode(), digest_size=8).digest(), "little")
                out[row, h % self.dim] += 1.0 if (h >> 63) & 1 else -1.0
        return list(_unit_rows(out))


def make_backend(profile: BackendProfile, profiles: dict | None = None, cache_dir=None, transport=None):
    """Instantiate the client for a profile; replay profiles wrap their source profile."""
    from refbench.replay import ReplayBackend, ReplayStore

    if profile.kind == "chat_llm":
        return ChatBackend(profile, transport)
    if profile.kind == "grobid":
        return GrobidBackend(profile, transport)
    if profile.kind == "embedding":
        if profile.stub == "hashing":
            return HashingEmbedder(dim=profile.dim or 256, name=profile.name)
        if profile.stub:
            raise ConfigError(f"unknown embedding stub {profile.stub!r}")
        return EmbeddingBackend(profile, transport)
    # replay
    if cache_dir is None:
        raise ConfigError(f"replay profile {profile.name} needs a cache directory (REFBENCH_CACHE_DIR)")
    source = profile.source or profile.name
    inner = None
    if profile.mode == "record":
        if not profiles or source not in profiles:
            raise ConfigError(f"replay profile {profile.name}: record mode needs source profile {source!r}")
        inner = make_backend(profiles[source], profiles, cache_dir, transport)
    elif profile.mode != "replay":
        raise ConfigError(f"replay profile {profile.name}: mode must be record or replay")
    return ReplayBackend(ReplayStore(cache_dir), name=source, inner=inner)
