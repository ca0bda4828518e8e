"""Dense vectors for segments, clusters and queries.

Vectors are plain 1-d ``float64`` numpy arrays. Two providers exist: a
seeded hashed bag-of-words embedder for tests and offline runs, and a
JSON-over-HTTP client for a remote embedding service.
"""

from __future__ import annotations

import hashlib
import logging
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import httpx
import numpy as np

from . import hvec
from .errors import (
    ConfigError,
    EmbeddingContractError,
    EmbeddingTransportError,
    IndexFormatError,
    ZeroNormError,
)

log = logging.getLogger(__name__)

_WORD = re.compile(r"\w+")
MAX_RETRIES = 3


@dataclass(frozen=True)
class EmbeddingProviderConfig:
    kind: Literal["remote", "deterministic"] = "deterministic"
    dim: int = 256
    endpoint_url: str | None = None
    model_name: str | None = None
    api_key_env_var: str | None = None
    batch_size: int = 32
    max_in_flight: int = 4
    cache_dir: str | None = None
    seed: int = 0
    timeout: float = 60.0
    backoff: float = 0.5  # first retry delay in seconds, doubled each retry

    def __post_init__(self):
        if self.kind not in ("remote", "deterministic"):
            raise ConfigError(f"unknown embedder kind {self.kind!r}")
        if self.dim <= 0:
            raise ConfigError("dim must be positive")
        if self.kind == "remote" and not self.endpoint_url:
            raise ConfigError("remote embedder requires endpoint_url")
        if self.batch_size < 1 or self.max_in_flight < 1:
            raise ConfigError("batch_size and max_in_flight must be >= 1")

    @property
    def cache_model_name(self) -> str:
        if self.kind == "deterministic":
            return f"hashed-bow:dim={self.dim}:seed={self.seed}"
        return self.model_name or ""

    @classmethod
    def from_dict(cls, d: dict) -> "EmbeddingProviderConfig":
        return cls(**d)


# ---------------------------------------------------------------------------
# vector math

def _hash64(token: str, seed: int, person: bytes) -> int:
    h = hashlib.blake2b(token.encode("utf-8"), digest_size=8,
                        key=str(seed).encode(), person=person)
    return int.from_bytes(h.digest(), "little")


def bucket_of(token: str, dim: int, seed: int = 0) -> tuple[int, int]:
    """(bucket, sign) assignment of one lowercased token."""
    bucket = _hash64(token, seed, b"hichunk-bucket") % dim
    sign = 1 if _hash64(token, seed, b"hichunk-sign") & 1 else -1
    return bucket, sign


def deterministic_embed(text: str, dim: int = 256, seed: int = 0) -> np.ndarray:
    if dim <= 0:
        raise ValueError("dim must be positive")
    v = np.zeros(dim)
    for tok in _WORD.findall(text.lower()):
        b, s = bucket_of(tok, dim, seed)
        v[b] += s
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


def mean_pool(vectors: Sequence[np.ndarray]) -> np.ndarray:
    if len(vectors) == 0:
        raise ValueError("mean_pool of an empty list")
    dims = {len(v) for v in vectors}
    if len(dims) != 1:
        raise ValueError(f"mean_pool over mixed dims {sorted(dims)}")
    return np.mean(np.asarray(vectors, dtype=np.float64), axis=0)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dim mismatch {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ZeroNormError("cosine of a zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def safe_cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine that scores zero-norm inputs as 0 instead of raising."""
    try:
        return cosine(u, v)
    except ZeroNormError:
        return 0.0


def normalize_rows(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return np.divide(m, norms, out=np.zeros_like(m), where=norms > 0)


# ---------------------------------------------------------------------------
# cache

def cache_key(model_name: str, text: str) -> str:
    h = hashlib.blake2b(f"{model_name}\0{text}".encode("utf-8"), digest_size=8)
    return h.hexdigest()


class _VectorCache:
    def __init__(self, root: str | Path, model_name: str, dim: int):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.model_name = model_name
        self.dim = dim

    def _path(self, text: str) -> Path:
        return self.root / cache_key(self.model_name, text)

    def get(self, text: str) -> np.ndarray | None:
        p = self._path(text)
        if not p.exists():
            return None
        try:
            m = hvec.read(p)
        except IndexFormatError:
            log.warning("ignoring corrupt cache entry %s", p.name)
            return None
        if m.shape != (1, self.dim):
            return None
        return m[0].astype(np.float64)

    def put(self, text: str, vec: np.ndarray) -> None:
        hvec.write(self._path(text), np.asarray(vec)[None, :])


# ---------------------------------------------------------------------------
# remote client

def _post_batch(client: httpx.Client, cfg: EmbeddingProviderConfig,
                batch: list[str], headers: dict) -> list[np.ndarray]:
    body = {"model": cfg.model_name or "", "input": batch}
    delay = cfg.backoff
    last: Exception | None = None
    for attempt in range(MAX_RETRIES + 1):
        if attempt:
            time.sleep(delay)
            delay *= 2
        try:
            r = client.post(cfg.endpoint_url, json=body, headers=headers)
        except httpx.TransportError as e:
            last = e
            continue
        if r.status_code == 429 or r.status_code >= 500:
            last = EmbeddingTransportError(f"HTTP {r.status_code}")
            continue
        if r.status_code >= 400:
            raise EmbeddingTransportError(f"HTTP {r.status_code}: {r.text[:200]}")
        return _parse_response(r.json(), len(batch), cfg.dim)
    raise EmbeddingTransportError(
        f"embedding request failed after {MAX_RETRIES} retries: {last}"
    ) from last


def _parse_response(payload: dict, expected: int, dim: int) -> list[np.ndarray]:
    try:
        items = sorted(payload["data"], key=lambda d: d["index"])
        vecs = [np.asarray(d["embedding"], dtype=np.float64) for d in items]
    except (KeyError, TypeError) as e:
        raise EmbeddingContractError(f"malformed embedding response: {e}") from None
    if len(vecs) != expected:
        raise EmbeddingContractError(f"expected {expected} embeddings, got {len(vecs)}")
    for v in vecs:
        if v.shape != (dim,):
            raise EmbeddingContractError(f"expected dim {dim}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise EmbeddingContractError("non-finite embedding value")
    return vecs


def _embed_remote(cfg: EmbeddingProviderConfig, texts: list[str]) -> list[np.ndarray]:
    headers = {}
    if cfg.api_key_env_var:
        key = os.environ.get(cfg.api_key_env_var)
        if key:
            headers["Authorization"] = f"Bearer {key}"
    batches = [texts[i:i + cfg.batch_size] for i in range(0, len(texts), cfg.batch_size)]
    with httpx.Client(timeout=cfg.timeout) as client, \
            ThreadPoolExecutor(max_workers=cfg.max_in_flight) as pool:
        results = pool.map(lambda b: _post_batch(client, cfg, b, headers), batches)
        return [v for batch in results for v in batch]


def embed_texts(cfg: EmbeddingProviderConfig, texts: Sequence[str]) -> list[np.ndarray]:
    texts = list(texts)
    if not texts:
        raise ValueError("embed_texts needs at least one text")
    if any(not t for t in texts):
        raise ValueError("cannot embed an empty string")

    cache = _VectorCache(cfg.cache_dir, cfg.cache_model_name, cfg.dim) if cfg.cache_dir else None
    out: list[np.ndarray | None] = [None] * len(texts)
    if cache is not None:
        for i, t in enumerate(texts):
            out[i] = cache.get(t)

    # dedupe misses so repeated texts cost one request
    missing = list(dict.fromkeys(t for t, v in zip(texts, out) if v is None))
    if missing:
        if cfg.kind == "deterministic":
            fresh = [deterministic_embed(t, cfg.dim, cfg.seed) for t in missing]
        else:
            fresh = _embed_remote(cfg, missing)
        if cache is not None:
            # cache stores f32; round now so cold and warm calls agree bitwise
            fresh = [np.asarray(v, dtype=np.float32).astype(np.float64) for v in fresh]
        got = dict(zip(missing, fresh))
        for i, t in enumerate(texts):
            if out[i] is None:
                out[i] = got[t]
        if cache is not None:
            for t, v in got.items():
                cache.put(t, v)
    for v in out:
        if v.shape != (cfg.dim,):
            raise EmbeddingContractError(f"expected dim {cfg.dim}, got {v.shape}")
    return out


def embed_one(cfg: EmbeddingProviderConfig, text: str) -> np.ndarray:
    return embed_texts(cfg, [text])[0]
