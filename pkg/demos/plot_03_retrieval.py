"""
Max-cosine retrieval against a fixed-size baseline
==================================================

A chunk scores as its best-matching vector. Planted needle sentences make
recall easy to measure.
"""

from hichunk import (
    EmbeddingProviderConfig,
    FallbackSegmenter,
    budget_top_k,
    index_documents,
    retrieve,
)
from hichunk.synthetic import needle_corpus, needle_recall

docs, needles = needle_corpus(n_docs=20, seed=3)
cfg = EmbeddingProviderConfig(dim=1024)

hier = index_documents(docs, cfg, FallbackSegmenter(cfg), k=1.2, target_chunk_tokens=512)
fixed = index_documents(docs, cfg, method="fixed", chunk_size=256)
print(f"hierarchical: {len(hier)} chunks / {len(hier.vectors)} vectors")
print(f"fixed-256:    {len(fixed)} chunks / {len(fixed.vectors)} vectors")

q = needles[0]
print("\nquery:", q.query)
for r in retrieve(q.query, hier, cfg, top_k=3):
    print(f"  #{r.rank} {r.chunk_id} score={r.score:.3f} via {r.best_vector}")

#############################################################################
# Recall at an equal context budget (about 4096 tokens each)


def recall(index, mode, top_k):
    hits = [[index.record(r.chunk_id).text for r in retrieve(n.query, index, cfg, mode, top_k)]
            for n in needles]
    return needle_recall(needles, hits)


print()
print("segment+cluster @8 :", recall(hier, "segment_plus_cluster", budget_top_k(512)))
print("cluster only    @8 :", recall(hier, "cluster_only", budget_top_k(512)))
print("fixed-256      @20 :", recall(fixed, "single_vector", budget_top_k(256)))
