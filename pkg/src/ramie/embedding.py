"""Sentence embedders used for example retrieval.

Two kinds are available behind one contract (``embed_many`` returning unit rows):

* ``hashed-lexical``: offline and deterministic. Word unigrams and character
  3-grams of the normalized text are hashed into ``dim`` buckets with a signed hash,
  weighted by term frequency, then L2-normalized.
* ``remote``: an HTTP embedding service. Request ``{"model", "inputs": [text]}``,
  response ``{"vectors": [[float]]}``; vectors are L2-normalized on receipt.
"""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Literal, Sequence

import httpx
import numpy as np

from . import _http
from .errors import ConfigError, DimMismatch, RemoteError
from .model import normalize_text

_WORD = re.compile(r"\w+")


@dataclass(frozen=True)
class EmbedderSpec:
    kind: Literal["hashed-lexical", "remote"] = "hashed-lexical"
    dim: int = 2048
    endpoint: str | None = None
    model: str | None = None
    timeout: float = 30.0
    api_key_env: str | None = None
    max_in_flight: int = 4
    retries: int = 3
    backoff: float = 0.5
    batch_size: int = 32

    def __post_init__(self) -> None:
        if self.kind not in ("hashed-lexical", "remote"):
            raise ConfigError(f"unknown embedder kind {self.kind!r}")
        if self.kind == "hashed-lexical" and self.dim <= 0:
            raise ConfigError("dim must be positive")
        if self.kind == "remote" and not (self.endpoint and self.model):
            raise ConfigError("remote embedder needs endpoint and model")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> EmbedderSpec:
        return cls(**obj)


def lexical_features(text: str) -> Counter:
    """Term counts of word unigrams (``w:``) and character 3-grams (``c:``)."""
    norm = normalize_text(text)
    feats: Counter = Counter("w:" + w for w in _WORD.findall(norm))
    feats.update("c:" + norm[i : i + 3] for i in range(len(norm) - 2))
    return feats


@lru_cache(maxsize=1 << 18)
def _bucket(feature: str, dim: int) -> tuple[int, float]:
    h = int.from_bytes(hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest(), "little")
    sign = -1.0 if h >> 63 else 1.0
    return (h & 0x7FFFFFFFFFFFFFFF) % dim, sign


def unit(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        return vec
    return vec / norm


class HashedLexicalEmbedder:
    def __init__(self, dim: int = 2048):
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for feat, count in lexical_features(text).items():
            idx, sign = _bucket(feat, self.dim)
            vec[idx] += sign * count
        return unit(vec)

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for i, t in enumerate(texts):
            out[i] = self.embed(t)
        return out


class RemoteEmbedder:
    """Client for a batch embedding endpoint with bounded in-flight requests."""

    def __init__(self, spec: EmbedderSpec, client: httpx.Client | None = None):
        self.spec = spec
        self.client = client or httpx.Client()
        self.dim: int | None = None

    def _batch(self, texts: list[str], headers: dict) -> np.ndarray:
        payload = {"model": self.spec.model, "inputs": texts}
        try:
            body = _http.post_json(
                self.client,
                self.spec.endpoint,
                payload,
                headers=headers,
                timeout=self.spec.timeout,
                retries=self.spec.retries,
                backoff=self.spec.backoff,
            )
        except (_http.TransientHTTPError, _http.PermanentHTTPError) as exc:
            raise RemoteError(str(exc)) from exc
        vectors = body.get("vectors") if isinstance(body, dict) else None
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise RemoteError(f"expected {len(texts)} vectors from {self.spec.endpoint}")
        try:
            arr = np.asarray(vectors, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise RemoteError("vectors are not a numeric matrix") from exc
        if arr.ndim != 2 or not np.all(np.isfinite(arr)):
            raise RemoteError("vectors are not a finite numeric matrix")
        return arr

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        headers = _http.auth_headers(self.spec.api_key_env)
        size = self.spec.batch_size
        batches = [list(texts[i : i + size]) for i in range(0, len(texts), size)]
        with ThreadPoolExecutor(max_workers=self.spec.max_in_flight) as pool:
            results = list(pool.map(lambda b: self._batch(b, headers), batches))
        dims = {r.shape[1] for r in results}
        if self.dim is not None:
            dims.add(self.dim)
        if len(dims) > 1:
            raise RemoteError(f"inconsistent embedding dimensions {sorted(dims)}")
        if not results:
            return np.zeros((0, self.dim or 0))
        self.dim = dims.pop()
        out = np.vstack(results)
        return np.vstack([unit(row) for row in out])

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]


def make_embedder(spec: EmbedderSpec, client: httpx.Client | None = None):
    if spec.kind == "hashed-lexical":
        return HashedLexicalEmbedder(spec.dim)
    return RemoteEmbedder(spec, client)


def embed(spec: EmbedderSpec, text: str) -> np.ndarray:
    return make_embedder(spec).embed(text)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; 0.0 when either operand is the zero vector."""
    if a.shape != b.shape:
        raise DimMismatch(f"dimension {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    value = float(np.dot(a, b)) / (na * nb)
    return max(-1.0, min(1.0, value))
