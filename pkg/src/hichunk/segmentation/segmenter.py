"""Sentence-boundary prediction and segment materialization."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from ..document import Document
from ..embedding import EmbeddingProviderConfig, embed_texts, safe_cosine
from .lstm import bilstm, sigmoid
from .weights import SegModelWeights, WordVectorTable

_WORD_TOKEN = re.compile(r"\w+|[^\w\s]")


def word_tokens(sentence: str) -> list[str]:
    return _WORD_TOKEN.findall(sentence)


@dataclass(frozen=True)
class Segment:
    segment_id: str
    doc_id: str
    sentence_range: tuple[int, int]  # inclusive
    span: tuple[int, int]            # byte offsets into the document text
    text: str
    token_count: int
    embedding: np.ndarray | None = None

    @property
    def n_sentences(self) -> int:
        return self.sentence_range[1] - self.sentence_range[0] + 1


@dataclass(frozen=True)
class BoundaryPrediction:
    probabilities: np.ndarray
    labels: np.ndarray  # int8, 1 = sentence ends a segment

    def __post_init__(self):
        if len(self.probabilities) != len(self.labels):
            raise ValueError("probabilities and labels differ in length")


def encode_sentence(tokens: Sequence[str], table: WordVectorTable,
                    weights: SegModelWeights) -> np.ndarray:
    """512-d sentence vector: max over time of the encoder BiLSTM outputs."""
    if len(tokens) == 0:
        raise ValueError("a sentence must contain at least one token")
    out = bilstm(table.matrix(list(tokens)), weights, "enc")
    return out.max(axis=0)


def boundary_probabilities(doc: Document, table: WordVectorTable,
                           weights: SegModelWeights) -> np.ndarray:
    sent_vecs = np.stack([
        encode_sentence(word_tokens(s), table, weights) for s in doc.sentence_texts()
    ])
    hidden = bilstm(sent_vecs, weights, "cls")
    W = np.asarray(weights["cls.out.W"], dtype=np.float64)
    b = np.asarray(weights["cls.out.b"], dtype=np.float64)
    return sigmoid(hidden @ W.T + b)[:, 0]


def predict_boundaries(doc: Document, table: WordVectorTable, weights: SegModelWeights,
                       threshold: float = 0.5) -> BoundaryPrediction:
    if not 0.0 <= threshold < 1.0:
        raise ValueError("threshold must lie in [0, 1)")
    if len(doc) == 0:
        raise ValueError("document has no sentences")
    probs = boundary_probabilities(doc, table, weights)
    labels = (probs > threshold).astype(np.int8)
    labels[-1] = 1
    return BoundaryPrediction(probs, labels)


def materialize_segments(doc: Document, pred: BoundaryPrediction | Sequence[int]) -> list[Segment]:
    labels = pred.labels if isinstance(pred, BoundaryPrediction) else np.asarray(pred)
    if len(labels) != len(doc):
        raise ValueError(f"{len(labels)} labels for {len(doc)} sentences")
    if len(labels) and labels[-1] != 1:
        raise ValueError("final sentence must be labelled as a boundary")
    segments = []
    first = 0
    for i, lab in enumerate(labels):
        if lab != 1:
            continue
        start = doc.sentences[first].span[0]
        end = doc.sentences[i].span[1]
        segments.append(Segment(
            segment_id=f"{doc.doc_id}:s{len(segments)}",
            doc_id=doc.doc_id,
            sentence_range=(first, i),
            span=(start, end),
            text=doc.slice(start, end),
            token_count=sum(s.token_count for s in doc.sentences[first:i + 1]),
        ))
        first = i + 1
    return segments


def _labels_from_cuts(n: int, cuts) -> np.ndarray:
    labels = np.zeros(n, dtype=np.int8)
    labels[list(cuts)] = 1
    labels[n - 1] = 1
    return labels


def valley_boundaries(sims: np.ndarray, quantile: float, min_sentences: int = 1) -> list[int]:
    """Sentence indices after which to cut, given adjacent similarities.

    A cut after ``i`` is a candidate when ``sims[i]`` is strictly below the
    ``quantile`` of ``sims``. Candidates are accepted deepest-first as long
    as every segment keeps at least ``min_sentences`` sentences.
    """
    n = len(sims) + 1
    if len(sims) == 0 or min_sentences * 2 > n:
        return []
    cut = np.quantile(sims, quantile)
    candidates = sorted((float(s), i) for i, s in enumerate(sims) if s < cut)
    accepted: list[int] = []
    for _, i in candidates:
        left = max((a for a in accepted if a < i), default=-1)
        right = min((a for a in accepted if a > i), default=n - 1)
        if i - left >= min_sentences and right - i >= min_sentences:
            accepted.append(i)
    return sorted(accepted)


def adjacent_similarities(vectors: Sequence[np.ndarray]) -> np.ndarray:
    return np.array([safe_cosine(vectors[i], vectors[i + 1]) for i in range(len(vectors) - 1)])


def fallback_segment(doc: Document, embedder: EmbeddingProviderConfig,
                     min_sentences: int = 1, drop_quantile: float = 0.5) -> list[Segment]:
    """Unsupervised segmentation at adjacent-sentence similarity valleys."""
    if len(doc) == 0:
        raise ValueError("document has no sentences")
    if min_sentences < 1:
        raise ValueError("min_sentences must be >= 1")
    if not 0.0 < drop_quantile < 1.0:
        raise ValueError("drop_quantile must lie in (0, 1)")
    vecs = embed_texts(embedder, doc.sentence_texts())
    cuts = valley_boundaries(adjacent_similarities(vecs), drop_quantile, min_sentences)
    return materialize_segments(doc, _labels_from_cuts(len(doc), cuts))


class Segmenter(Protocol):
    def __call__(self, doc: Document) -> list[Segment]: ...


@dataclass(frozen=True)
class HsegSegmenter:
    weights: SegModelWeights
    table: WordVectorTable
    threshold: float = 0.5

    def __call__(self, doc: Document) -> list[Segment]:
        return materialize_segments(doc, predict_boundaries(doc, self.table, self.weights, self.threshold))


@dataclass(frozen=True)
class FallbackSegmenter:
    embedder: EmbeddingProviderConfig
    min_sentences: int = 1
    drop_quantile: float = 0.5

    def __call__(self, doc: Document) -> list[Segment]:
        return fallback_segment(doc, self.embedder, self.min_sentences, self.drop_quantile)
