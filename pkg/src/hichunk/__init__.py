"""Hierarchical segmentation-clustering chunking with multi-vector retrieval."""

from .baselines import TextChunk, fixed_size_chunks, semantic_chunks
from .clustering import (
    K_FOR_CHUNK_SIZE,
    Chunk,
    ClusterRange,
    RelatednessGraph,
    absorb_singletons,
    build_graph,
    cluster_pipeline,
    enumerate_maximal_cliques,
    initial_clusters,
    merge_adjacent_clusters,
)
from .document import Document, Sentence, TokenizerSpec, count_tokens, load_corpus, split_sentences
from .embedding import (
    EmbeddingProviderConfig,
    cosine,
    deterministic_embed,
    embed_texts,
    mean_pool,
)
from .index import (
    ChunkIndex,
    ChunkRecord,
    RetrievalMode,
    RetrievalResult,
    budget_top_k,
    chunk_score,
    index_documents,
    load_index,
    retrieve,
    retrieve_by_vector,
    save_index,
)
from .segmentation import (
    FallbackSegmenter,
    HsegSegmenter,
    Segment,
    SegModelWeights,
    WordVectorTable,
    fallback_segment,
    load_weights,
    materialize_segments,
    predict_boundaries,
)

__version__ = "0.1.0"
