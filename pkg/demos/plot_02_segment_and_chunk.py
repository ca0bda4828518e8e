"""
From raw text to multi-vector chunks
====================================

Sentences are split, grouped into segments by embedding valleys, and
segments are clustered into chunks that keep one vector per segment plus
a mean-pooled cluster vector.
"""

from hichunk import Document, EmbeddingProviderConfig, FallbackSegmenter, embed_texts
from hichunk.clustering import cluster_pipeline
from hichunk.synthetic import needle_corpus

docs, needles = needle_corpus(n_docs=1, blocks=4, sentences_per_block=20, seed=2)
doc: Document = docs[0]
print(f"{len(doc)} sentences, {doc.token_count} tokens")

cfg = EmbeddingProviderConfig(dim=1024)
segments = FallbackSegmenter(cfg)(doc)
print(f"{len(segments)} segments")
for s in segments[:5]:
    print(f"  {s.segment_id:>8} sentences {s.sentence_range}  {s.text[:50]}...")

#############################################################################
# Cluster with k=1.2, the setting for ~512-token chunks

vecs = embed_texts(cfg, [s.text for s in segments])
chunks = cluster_pipeline(segments, vecs, k=1.2, doc=doc)
for c in chunks:
    print(f"{c.chunk_id}: segments {c.cluster_range.first}-{c.cluster_range.last}, "
          f"{c.token_count} tokens, {len(c.vectors)} vectors")

# k moves the edge threshold; cliques, merging and singleton absorption
# all react to it, so chunk counts need not move in step with k
for k in (2.0, 1.2, 0.7, 0.4, 0.0):
    cs = cluster_pipeline(segments, vecs, k=k)
    print(f"k={k}: {len(cs)} chunks, {doc.token_count / len(cs):.0f} tokens on average")
