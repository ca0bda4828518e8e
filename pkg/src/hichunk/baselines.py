"""Comparison chunkers: greedy fixed-size and embedding-valley semantic chunking.

Both produce single-vector chunks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .document import Document
from .embedding import EmbeddingProviderConfig, embed_texts, mean_pool
from .segmentation.segmenter import adjacent_similarities, valley_boundaries


@dataclass(frozen=True)
class TextChunk:
    chunk_id: str
    doc_id: str
    sentence_range: tuple[int, int]  # inclusive
    text: str
    token_count: int
    embedding: np.ndarray | None = None

    @property
    def vectors(self) -> list[np.ndarray]:
        if self.embedding is None:
            raise ValueError(f"chunk {self.chunk_id} has no embedding yet")
        return [self.embedding]


def _make(doc: Document, idx: int, first: int, last: int, embedding=None) -> TextChunk:
    start = doc.sentences[first].span[0]
    end = doc.sentences[last].span[1]
    return TextChunk(
        chunk_id=f"{doc.doc_id}:c{idx}",
        doc_id=doc.doc_id,
        sentence_range=(first, last),
        text=doc.slice(start, end),
        token_count=sum(s.token_count for s in doc.sentences[first:last + 1]),
        embedding=embedding,
    )


def fixed_size_ranges(token_counts: list[int], size_tokens: int) -> list[tuple[int, int]]:
    """Greedy whole-sentence fill up to ``size_tokens`` per chunk."""
    if size_tokens < 1:
        raise ValueError("size_tokens must be >= 1")
    ranges = []
    first, used = 0, 0
    for i, n in enumerate(token_counts):
        if i > first and used + n > size_tokens:
            ranges.append((first, i - 1))
            first, used = i, 0
        used += n
    if token_counts:
        ranges.append((first, len(token_counts) - 1))
    return ranges


def fixed_size_chunks(doc: Document, size_tokens: int) -> list[TextChunk]:
    ranges = fixed_size_ranges([s.token_count for s in doc.sentences], size_tokens)
    return [_make(doc, j, a, b) for j, (a, b) in enumerate(ranges)]


def semantic_chunks(doc: Document, embedder: EmbeddingProviderConfig,
                    breakpoint_quantile: float = 0.05) -> list[TextChunk]:
    """Split where adjacent-sentence cosine drops strictly below the given
    quantile of all adjacent cosines; chunk vector is the sentence mean."""
    if len(doc) == 0:
        raise ValueError("document has no sentences")
    vecs = embed_texts(embedder, doc.sentence_texts())
    cuts = valley_boundaries(adjacent_similarities(vecs), breakpoint_quantile, 1)
    bounds = [*cuts, len(doc) - 1]
    out = []
    first = 0
    for j, last in enumerate(bounds):
        out.append(_make(doc, j, first, last, mean_pool(vecs[first:last + 1])))
        first = last + 1
    return out
