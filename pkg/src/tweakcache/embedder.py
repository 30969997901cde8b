"""Prompt-to-vector embedding.

Two implementations share the same contract (unit-norm vectors of a fixed
dimension): a deterministic hashed bag-of-tokens embedder for offline use and
tests, and a client for OpenAI-compatible embedding endpoints.
"""

from __future__ import annotations

import hashlib
import random
import re
import threading
import time
from dataclasses import dataclass

import httpx
import numpy as np

from .errors import (
    DegenerateEmbedding,
    DimensionMismatch,
    EmptyText,
    RemoteUnavailable,
)

DEFAULT_DIMENSION = 384

# Keyed hash so the scheme is stable across Python versions and processes.
_HASH_KEY = b"tweakcache.embedder.v1"
_TOKEN_RE = re.compile(r"\w+")


@dataclass
class EmbedderConfig:
    kind: str = "hashed-test"  # "hashed-test" | "remote"
    dimension: int = DEFAULT_DIMENSION
    endpoint_url: str = ""
    model_name: str = ""
    request_timeout: float = 10.0

    def __post_init__(self):
        if self.kind not in ("hashed-test", "remote"):
            raise ValueError(f"unknown embedder kind: {self.kind!r}")
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.kind == "remote" and (not self.endpoint_url or not self.model_name):
            raise ValueError("remote embedder needs endpoint_url and model_name")


def _token_hash(token: str) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=_HASH_KEY)
    return int.from_bytes(digest.digest(), "big")


def _normalize(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise DegenerateEmbedding("embedding has zero norm")
    return (vec / norm).astype(np.float32)


class HashedEmbedder:
    """Deterministic test embedder: signed token-hash bag, L2-normalized.

    Tokens are Unicode word runs of the lowercased text, so case, punctuation
    and whitespace placement do not affect the vector. Near-identical texts
    share most buckets and score near 1.0.
    """

    def __init__(self, dimension: int = DEFAULT_DIMENSION):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        self.dimension = dimension

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise EmptyText("cannot embed empty text")
        vec = np.zeros(self.dimension, dtype=np.float64)
        tokens = _TOKEN_RE.findall(text.lower())
        if not tokens:
            raise DegenerateEmbedding("text has no word characters")
        for token in tokens:
            h = _token_hash(token)
            sign = -1.0 if (h >> 63) & 1 else 1.0
            vec[h % self.dimension] += sign
        return _normalize(vec)


class RemoteEmbedder:
    """Client for an OpenAI-compatible /embeddings endpoint.

    Retries up to twice on timeouts and 5xx with jittered exponential
    backoff; 4xx fails immediately. In-flight requests are bounded by
    ``max_inflight``.
    """

    MAX_RETRIES = 2

    def __init__(
        self,
        endpoint_url: str,
        model_name: str,
        dimension: int = DEFAULT_DIMENSION,
        request_timeout: float = 10.0,
        api_key: str | None = None,
        max_inflight: int = 8,
        transport: httpx.BaseTransport | None = None,
        backoff_base: float = 0.25,
        rng: random.Random | None = None,
    ):
        if not endpoint_url or not model_name:
            raise ValueError("endpoint_url and model_name are required")
        self.endpoint_url = endpoint_url
        self.model_name = model_name
        self.dimension = dimension
        self._api_key = api_key
        self._backoff_base = backoff_base
        self._rng = rng or random.Random()
        self._semaphore = threading.BoundedSemaphore(max_inflight)
        self._client = httpx.Client(transport=transport, timeout=request_timeout)

    def close(self):
        self._client.close()

    def _headers(self) -> dict:
        headers = {"content-type": "application/json"}
        if self._api_key:
            headers["authorization"] = f"Bearer {self._api_key}"
        return headers

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise EmptyText("cannot embed empty text")
        body = {"model": self.model_name, "input": text}
        last_exc: Exception | None = None
        with self._semaphore:
            for attempt in range(self.MAX_RETRIES + 1):
                if attempt:
                    delay = self._backoff_base * (2 ** (attempt - 1))
                    time.sleep(delay * (0.5 + self._rng.random() * 0.5))
                try:
                    resp = self._client.post(
                        self.endpoint_url, json=body, headers=self._headers()
                    )
                except httpx.TimeoutException as exc:
                    last_exc = exc
                    continue
                except httpx.HTTPError as exc:
                    raise RemoteUnavailable(f"embedding request failed: {exc}")
                if resp.status_code >= 500:
                    last_exc = RemoteUnavailable(
                        f"embedding endpoint returned {resp.status_code}",
                        retry_after=_retry_after(resp),
                    )
                    continue
                if resp.status_code >= 400:
                    raise RemoteUnavailable(
                        f"embedding endpoint returned {resp.status_code}",
                        retry_after=_retry_after(resp),
                    )
                return self._parse(resp)
        if isinstance(last_exc, RemoteUnavailable):
            raise last_exc
        raise RemoteUnavailable(f"embedding request timed out: {last_exc}")

    def _parse(self, resp: httpx.Response) -> np.ndarray:
        try:
            payload = resp.json()
            values = payload["data"][0]["embedding"]
            vec = np.asarray(values, dtype=np.float64)
        except (ValueError, KeyError, IndexError, TypeError):
            raise RemoteUnavailable("embedding response missing data[0].embedding")
        if vec.ndim != 1 or vec.shape[0] != self.dimension:
            raise DimensionMismatch(
                f"endpoint returned {vec.shape} values, expected {self.dimension}"
            )
        return _normalize(vec)


def _retry_after(resp: httpx.Response) -> float | None:
    raw = resp.headers.get("retry-after")
    if raw is None:
        return None
    try:
        return float(raw)
    except ValueError:
        return None


def build_embedder(config: EmbedderConfig, **remote_kwargs):
    """Instantiate the embedder described by ``config``."""
    if config.kind == "hashed-test":
        return HashedEmbedder(config.dimension)
    import os

    api_key = remote_kwargs.pop("api_key", None)
    key_ref = remote_kwargs.pop("api_key_ref", None)
    if api_key is None and key_ref:
        api_key = os.environ.get(key_ref)
    return RemoteEmbedder(
        config.endpoint_url,
        config.model_name,
        dimension=config.dimension,
        request_timeout=config.request_timeout,
        api_key=api_key,
        **remote_kwargs,
    )


def embed_text(text: str, config: EmbedderConfig) -> np.ndarray:
    """One-shot convenience wrapper; long-lived callers should hold an embedder."""
    embedder = build_embedder(config)
    try:
        return embedder.embed(text)
    finally:
        if isinstance(embedder, RemoteEmbedder):
            embedder.close()


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two equal-length vectors."""
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape:
        raise DimensionMismatch(f"shapes differ: {av.shape} vs {bv.shape}")
    denom = float(np.linalg.norm(av)) * float(np.linalg.norm(bv))
    if denom == 0.0:
        raise DegenerateEmbedding("cosine similarity of a zero vector")
    return float(np.dot(av, bv) / denom)


def unit_norm(vec, tolerance: float = 1e-6) -> bool:
    return abs(float(np.linalg.norm(np.asarray(vec, dtype=np.float64))) - 1.0) <= tolerance


def check_dimension(vec, dimension: int) -> np.ndarray:
    arr = np.asarray(vec, dtype=np.float32)
    if arr.ndim != 1 or arr.shape[0] != dimension:
        raise DimensionMismatch(f"expected dimension {dimension}, got shape {arr.shape}")
    return arr
