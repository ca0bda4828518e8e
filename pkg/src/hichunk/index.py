"""Chunk index: storage of multi-vector chunk records and max-cosine retrieval.

A record owns ``m`` segment vectors followed by one cluster vector. Its
score against a query is the highest cosine over those vectors
(``segment_plus_cluster``), the cluster vector alone (``cluster_only``),
or its first vector (``single_vector``). Search is exact and exhaustive.
"""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from . import hvec
from .baselines import TextChunk, fixed_size_chunks, semantic_chunks
from .clustering import Chunk, cluster_pipeline
from .document import Document
from .embedding import EmbeddingProviderConfig, embed_one, embed_texts, normalize_rows
from .errors import (
    ChecksumError,
    EmbeddingError,
    IndexFormatError,
    MissingIndexFileError,
    UnsupportedIndexVersionError,
    ZeroNormError,
)
from .segmentation import Segmenter

log = logging.getLogger(__name__)

INDEX_VERSION = 1
ChunkingMethod = Literal["segment_cluster", "cluster_only_storage", "fixed", "semantic"]
METHODS = ("segment_cluster", "cluster_only_storage", "fixed", "semantic")

# top-k per average chunk size, keeping retrieved context near 4096 tokens
BUDGET_TABLE = {256: 20, 512: 8, 1024: 4, 2048: 2}


class RetrievalMode(str, Enum):
    SEGMENT_PLUS_CLUSTER = "segment_plus_cluster"
    CLUSTER_ONLY = "cluster_only"
    SINGLE_VECTOR = "single_vector"


def budget_top_k(avg_chunk_tokens: int) -> int:
    if avg_chunk_tokens <= 0:
        raise ValueError("avg_chunk_tokens must be positive")
    if avg_chunk_tokens in BUDGET_TABLE:
        return BUDGET_TABLE[avg_chunk_tokens]
    return max(1, 4096 // avg_chunk_tokens)


@dataclass(frozen=True)
class ChunkRecord:
    chunk_id: str
    doc_id: str
    text: str
    token_count: int
    vector_rows: tuple[int, ...]
    segment_spans: tuple[tuple[int, int], ...] = ()

    def to_json(self) -> dict:
        d = asdict(self)
        d["vector_rows"] = list(self.vector_rows)
        d["segment_spans"] = [list(s) for s in self.segment_spans]
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ChunkRecord":
        return cls(
            chunk_id=d["chunk_id"],
            doc_id=d["doc_id"],
            text=d["text"],
            token_count=int(d["token_count"]),
            vector_rows=tuple(int(r) for r in d["vector_rows"]),
            segment_spans=tuple((int(a), int(b)) for a, b in d["segment_spans"]),
        )


@dataclass(frozen=True)
class RetrievalResult:
    chunk_id: str
    score: float
    best_vector: str  # "segment(i)" or "cluster"
    rank: int


@dataclass
class ChunkIndex:
    manifest: dict
    records: list[ChunkRecord]
    vectors: np.ndarray  # (rows, dim) float32
    _by_id: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 2:
            raise ValueError("vectors must be a 2-d matrix")
        seen = set()
        used = np.zeros(len(self.vectors), dtype=np.int64)
        for r in self.records:
            if r.chunk_id in seen:
                raise ValueError(f"duplicate chunk id {r.chunk_id!r}")
            seen.add(r.chunk_id)
            if not r.vector_rows:
                raise ValueError(f"record {r.chunk_id!r} has no vectors")
            for row in r.vector_rows:
                if not 0 <= row < len(self.vectors):
                    raise ValueError(f"record {r.chunk_id!r} references missing row {row}")
                used[row] += 1
        if np.any(used != 1):
            raise ValueError("every vector row must belong to exactly one record")
        self.manifest = {**self.manifest, "dim": self.vectors.shape[1],
                         "record_count": len(self.records), "vector_count": len(self.vectors)}

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ChunkIndex):
            return NotImplemented
        return (
            self.manifest == other.manifest
            and self.records == other.records
            and self.vectors.shape == other.vectors.shape
            and self.vectors.tobytes() == other.vectors.tobytes()
        )

    @cached_property
    def unit_vectors(self) -> np.ndarray:
        return normalize_rows(self.vectors.astype(np.float64))

    def record(self, chunk_id: str) -> ChunkRecord:
        if self._by_id is None:
            self._by_id = {r.chunk_id: r for r in self.records}
        return self._by_id[chunk_id]

    @classmethod
    def from_chunks(cls, chunks: Sequence[Chunk | TextChunk], manifest: dict,
                    cluster_vector_only: bool = False) -> "ChunkIndex":
        rows: list[np.ndarray] = []
        records = []
        for c in chunks:
            vecs = [c.cluster_embedding] if cluster_vector_only and isinstance(c, Chunk) else c.vectors
            start = len(rows)
            rows.extend(vecs)
            records.append(ChunkRecord(
                chunk_id=c.chunk_id,
                doc_id=c.doc_id,
                text=c.text,
                token_count=c.token_count,
                vector_rows=tuple(range(start, len(rows))),
                segment_spans=tuple(getattr(c, "segment_spans", ())),
            ))
        dim = int(manifest.get("dim", 0)) or (len(rows[0]) if rows else 0)
        matrix = np.asarray(rows, dtype=np.float32).reshape(len(rows), dim)
        manifest = {**manifest, "dim": dim, "record_count": len(records), "vector_count": len(rows)}
        return cls(manifest, records, matrix)


def _best_vector_label(rec: ChunkRecord, pos: int) -> str:
    return "cluster" if pos == len(rec.vector_rows) - 1 else f"segment({pos})"


def _unit_query(query_vec) -> np.ndarray:
    q = np.asarray(query_vec, dtype=np.float64)
    norm = np.linalg.norm(q)
    if norm == 0:
        raise ZeroNormError("query embedding has zero norm")
    return q / norm


def _score_rows(row_scores: np.ndarray, rec: ChunkRecord, mode: RetrievalMode) -> tuple[float, str]:
    rows = rec.vector_rows
    mode = RetrievalMode(mode)
    if mode is RetrievalMode.SEGMENT_PLUS_CLUSTER:
        vals = row_scores[list(rows)]
        pos = int(np.argmax(vals))  # first maximum: segments win ties over the cluster
    elif mode is RetrievalMode.CLUSTER_ONLY:
        pos = len(rows) - 1
    else:
        pos = 0
    return float(row_scores[rows[pos]]), _best_vector_label(rec, pos)


def chunk_score(query_vec, rec: ChunkRecord, index: ChunkIndex,
                mode: RetrievalMode = RetrievalMode.SEGMENT_PLUS_CLUSTER) -> tuple[float, str]:
    q = _unit_query(query_vec)
    if q.shape != (index.dim,):
        raise ValueError(f"query dim {q.shape[0]} does not match index dim {index.dim}")
    rows = list(rec.vector_rows)
    scores = np.zeros(len(index.vectors))
    scores[rows] = index.unit_vectors[rows] @ q
    return _score_rows(scores, rec, mode)


def retrieve_by_vector(query_vec, index: ChunkIndex,
                       mode: RetrievalMode = RetrievalMode.SEGMENT_PLUS_CLUSTER,
                       top_k: int = 8, doc_id: str | None = None) -> list[RetrievalResult]:
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    if len(index) == 0:
        raise ValueError("index is empty")
    q = _unit_query(query_vec)
    if q.shape != (index.dim,):
        raise ValueError(f"query dim {q.shape[0]} does not match index dim {index.dim}")
    row_scores = index.unit_vectors @ q
    scored = []
    for rec in index.records:
        if doc_id is not None and rec.doc_id != doc_id:
            continue
        score, best = _score_rows(row_scores, rec, mode)
        scored.append((-score, rec.chunk_id, best))
    scored.sort()
    return [
        RetrievalResult(cid, -neg, best, rank)
        for rank, (neg, cid, best) in enumerate(scored[:top_k], 1)
    ]


def retrieve(query: str, index: ChunkIndex, embedder: EmbeddingProviderConfig,
             mode: RetrievalMode = RetrievalMode.SEGMENT_PLUS_CLUSTER, top_k: int = 8,
             doc_id: str | None = None) -> list[RetrievalResult]:
    return retrieve_by_vector(embed_one(embedder, query), index, mode, top_k, doc_id)


# ---------------------------------------------------------------------------
# building

def chunk_document(doc: Document, method: ChunkingMethod, embedder: EmbeddingProviderConfig,
                   segmenter: Segmenter | None = None, k: float = 1.2,
                   chunk_size: int = 512, breakpoint_quantile: float = 0.05) -> list[Chunk | TextChunk]:
    if len(doc) == 0:
        return []
    if method in ("segment_cluster", "cluster_only_storage"):
        if segmenter is None:
            raise ValueError(f"method {method!r} needs a segmenter")
        segments = segmenter(doc)
        vecs = embed_texts(embedder, [s.text for s in segments])
        return cluster_pipeline(segments, vecs, k, doc=doc)
    if method == "fixed":
        chunks = fixed_size_chunks(doc, chunk_size)
        vecs = embed_texts(embedder, [c.text for c in chunks])
        return [replace(c, embedding=v) for c, v in zip(chunks, vecs)]
    if method == "semantic":
        return semantic_chunks(doc, embedder, breakpoint_quantile)
    raise ValueError(f"unknown chunking method {method!r}")


def _created_timestamp() -> int:
    # SOURCE_DATE_EPOCH pins the manifest for byte-reproducible builds
    env = os.environ.get("SOURCE_DATE_EPOCH")
    return int(env) if env else int(time.time())


def index_documents(docs: Sequence[Document], embedder: EmbeddingProviderConfig,
                    segmenter: Segmenter | None = None, k: float = 1.2,
                    method: ChunkingMethod = "segment_cluster", chunk_size: int = 512,
                    breakpoint_quantile: float = 0.05, workers: int = 1,
                    target_chunk_tokens: int | None = None) -> ChunkIndex:
    """Chunk, embed and index documents.

    Documents whose embedding calls fail are skipped and listed under
    ``manifest["failures"]``; the rest are indexed.
    """
    if not docs:
        raise ValueError("no documents to index")
    if method not in METHODS:
        raise ValueError(f"unknown chunking method {method!r}")

    def work(doc: Document):
        try:
            return chunk_document(doc, method, embedder, segmenter, k, chunk_size, breakpoint_quantile), None
        except EmbeddingError as e:
            log.error("document %s failed: %s", doc.doc_id, e)
            return [], str(e)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, docs))
    else:
        results = [work(d) for d in docs]

    chunks = [c for cs, _ in results for c in cs]
    failures = {d.doc_id: err for d, (_, err) in zip(docs, results) if err is not None}
    per_doc = {d.doc_id: len(cs) for d, (cs, err) in zip(docs, results) if err is None}

    params: dict = {}
    if method in ("segment_cluster", "cluster_only_storage"):
        params["k"] = k
    elif method == "fixed":
        params["chunk_size"] = chunk_size
    else:
        params["breakpoint_quantile"] = breakpoint_quantile
    if target_chunk_tokens is None and method == "fixed":
        target_chunk_tokens = chunk_size
    manifest = {
        "version": INDEX_VERSION,
        "dim": embedder.dim,
        "model_name": embedder.cache_model_name,
        "method": method,
        "params": params,
        "target_chunk_tokens": target_chunk_tokens,
        "created": _created_timestamp(),
        "chunks_per_doc": per_doc,
        "failures": failures,
    }
    return ChunkIndex.from_chunks(chunks, manifest, cluster_vector_only=method == "cluster_only_storage")


def auto_top_k(index: ChunkIndex) -> int:
    """Budgeted top-k from the index's target chunk size, else its mean chunk size."""
    target = index.manifest.get("target_chunk_tokens")
    if not target:
        if not index.records:
            return 1
        target = max(1, round(sum(r.token_count for r in index.records) / len(index.records)))
    return budget_top_k(int(target))


# ---------------------------------------------------------------------------
# persistence

MANIFEST = "manifest.json"
CHUNKS = "chunks.jsonl"
VECTORS = "vectors.hvec"


def save_index(index: ChunkIndex, directory: str | Path) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    manifest = {**index.manifest, "version": INDEX_VERSION, "dim": index.dim,
                "record_count": len(index.records), "vector_count": len(index.vectors),
                "checksum": hvec.payload_crc(index.vectors)}
    hvec.write(d / VECTORS, index.vectors)
    with open(d / CHUNKS, "w", encoding="utf-8") as f:
        for r in index.records:
            f.write(json.dumps(r.to_json(), ensure_ascii=False, sort_keys=True) + "\n")
    (d / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_index(directory: str | Path) -> ChunkIndex:
    d = Path(directory)
    for name in (MANIFEST, CHUNKS, VECTORS):
        if not (d / name).is_file():
            raise MissingIndexFileError(f"index file missing: {d / name}")
    try:
        manifest = json.loads((d / MANIFEST).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise IndexFormatError(f"unreadable manifest: {e}") from None
    if manifest.get("version") != INDEX_VERSION:
        raise UnsupportedIndexVersionError(f"index version {manifest.get('version')!r} not supported")
    vectors = hvec.read(d / VECTORS)
    if hvec.payload_crc(vectors) != manifest.pop("checksum", None):
        raise ChecksumError("vector checksum does not match manifest")
    if vectors.shape != (manifest["vector_count"], manifest["dim"]):
        raise ChecksumError(f"vector matrix shape {vectors.shape} disagrees with manifest")
    with open(d / CHUNKS, encoding="utf-8") as f:
        records = [ChunkRecord.from_json(json.loads(line)) for line in f if line.strip()]
    if len(records) != manifest["record_count"]:
        raise IndexFormatError(f"{len(records)} records, manifest says {manifest['record_count']}")
    return ChunkIndex(manifest, records, vectors)
