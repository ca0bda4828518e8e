"""Segment clustering through a relatedness graph and its maximal cliques.

Pipeline per document::

    build_graph -> enumerate_maximal_cliques -> initial_clusters
        -> merge_adjacent_clusters -> absorb_singletons -> Chunk

Segment indices are 0-based throughout. Clusters are always contiguous
runs of segments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .document import Document
from .embedding import mean_pool, normalize_rows, safe_cosine
from .errors import CliqueLimitError, ZeroNormError
from .segmentation import Segment

# k per target average chunk size in tokens
K_FOR_CHUNK_SIZE = {512: 1.2, 1024: 0.7, 2048: 0.4}
DEFAULT_MAX_NODES = 2000
# absorbs float noise so that equal similarities never produce edges
EDGE_EPS = 1e-12

Clique = tuple[int, ...]


class ClusterRange(NamedTuple):
    first: int
    last: int

    @property
    def size(self) -> int:
        return self.last - self.first + 1

    def indices(self) -> range:
        return range(self.first, self.last + 1)


@dataclass(frozen=True)
class RelatednessGraph:
    n: int
    edges: frozenset[tuple[int, int]]
    tau: float
    k_param: float
    mu: float = float("nan")
    sigma: float = float("nan")

    def __post_init__(self):
        for i, j in self.edges:
            if not (0 <= i < j < self.n):
                raise ValueError(f"bad edge {(i, j)} for n={self.n}")

    @classmethod
    def from_edges(cls, n: int, edges, tau: float = float("nan"), k_param: float = float("nan")):
        return cls(n, frozenset((min(a, b), max(a, b)) for a, b in edges), tau, k_param)

    def adjacency(self) -> list[int]:
        """Neighbour sets as integer bitmasks."""
        adj = [0] * self.n
        for i, j in self.edges:
            adj[i] |= 1 << j
            adj[j] |= 1 << i
        return adj


def pairwise_cosines(embeddings: Sequence[np.ndarray]) -> np.ndarray:
    m = np.asarray(embeddings, dtype=np.float64)
    if np.any(np.linalg.norm(m, axis=1) == 0):
        raise ZeroNormError("segment embedding with zero norm")
    u = normalize_rows(m)
    return np.clip(u @ u.T, -1.0, 1.0)


def build_graph(embeddings: Sequence[np.ndarray], k: float) -> RelatednessGraph:
    """Edges join segment pairs whose cosine exceeds ``mean + k * std``
    (population std over all pairs)."""
    n = len(embeddings)
    if n < 2:
        raise ValueError("need at least two segments to build a relatedness graph")
    sims = pairwise_cosines(embeddings)
    iu, ju = np.triu_indices(n, k=1)
    pair_sims = sims[iu, ju]
    mu = float(pair_sims.mean())
    sigma = float(pair_sims.std())
    tau = mu + k * sigma
    keep = pair_sims - tau > EDGE_EPS
    edges = frozenset(zip(iu[keep].tolist(), ju[keep].tolist()))
    return RelatednessGraph(n, edges, tau, k, mu, sigma)


def _bits(x: int):
    while x:
        low = x & -x
        yield low.bit_length() - 1
        x ^= low


def enumerate_maximal_cliques(g: RelatednessGraph, max_nodes: int = DEFAULT_MAX_NODES) -> list[Clique]:
    """All maximal cliques (Bron-Kerbosch with Tomita pivoting), sorted.

    Isolated vertices come out as singleton cliques.
    """
    if g.n > max_nodes:
        raise CliqueLimitError(f"{g.n} segments exceeds the clique enumeration limit of {max_nodes}")
    if g.n == 0:
        return []
    adj = g.adjacency()
    found: list[Clique] = []
    stack: list[tuple[tuple[int, ...], int, int]] = [((), (1 << g.n) - 1, 0)]
    while stack:
        r, p, x = stack.pop()
        if not p:
            if not x:
                found.append(tuple(sorted(r)))
            continue
        pivot = max(_bits(p | x), key=lambda u: (p & adj[u]).bit_count())
        for v in _bits(p & ~adj[pivot]):
            stack.append((r + (v,), p & adj[v], x & adj[v]))
            p &= ~(1 << v)
            x |= 1 << v
    found.sort()
    return found


def initial_clusters(cliques: Sequence[Sequence[int]], n: int) -> list[ClusterRange]:
    """Join neighbours ``i, i+1`` whenever some clique holds both."""
    linked = set()
    for q in cliques:
        members = set(q)
        linked.update(i for i in members if i + 1 in members)
    clusters = []
    first = 0
    for i in range(n):
        if i == n - 1 or i not in linked:
            clusters.append(ClusterRange(first, i))
            first = i + 1
    return clusters


def merge_adjacent_clusters(clusters: Sequence[ClusterRange],
                            cliques: Sequence[Sequence[int]]) -> list[ClusterRange]:
    """One left-to-right pass: merge ``c_i`` with ``c_{i+1}`` when a clique
    touches both, then skip past the merged pair."""
    if not clusters:
        return []
    owner = {}
    for ci, c in enumerate(clusters):
        for s in c.indices():
            owner[s] = ci
    bridged = set()
    for q in cliques:
        touched = {owner[s] for s in q}
        bridged.update(ci for ci in touched if ci + 1 in touched)

    out = []
    i = 0
    while i < len(clusters):
        if i + 1 < len(clusters) and i in bridged:
            out.append(ClusterRange(clusters[i].first, clusters[i + 1].last))
            i += 2
        else:
            out.append(clusters[i])
            i += 1
    return out


def absorb_singletons(clusters: Sequence[ClusterRange],
                      segment_embeddings: Sequence[np.ndarray]) -> list[ClusterRange]:
    """Fold single-segment clusters into the adjacent cluster whose mean
    embedding is closer by cosine. Leftmost first; ties go left."""
    out = list(clusters)

    def pooled(c: ClusterRange) -> np.ndarray:
        return mean_pool([segment_embeddings[s] for s in c.indices()])

    while len(out) >= 2:
        idx = next((i for i, c in enumerate(out) if c.size == 1), None)
        if idx is None:
            break
        seg = segment_embeddings[out[idx].first]
        if idx == 0:
            go_left = False
        elif idx == len(out) - 1:
            go_left = True
        else:
            go_left = safe_cosine(seg, pooled(out[idx - 1])) >= safe_cosine(seg, pooled(out[idx + 1]))
        if go_left:
            out[idx - 1:idx + 1] = [ClusterRange(out[idx - 1].first, out[idx].last)]
        else:
            out[idx:idx + 2] = [ClusterRange(out[idx].first, out[idx + 1].last)]
    return out


def cluster_ranges(embeddings: Sequence[np.ndarray], k: float,
                   max_nodes: int = DEFAULT_MAX_NODES) -> list[ClusterRange]:
    n = len(embeddings)
    if n == 0:
        return []
    if n == 1:
        return [ClusterRange(0, 0)]
    g = build_graph(embeddings, k)
    cliques = enumerate_maximal_cliques(g, max_nodes)
    clusters = initial_clusters(cliques, n)
    clusters = merge_adjacent_clusters(clusters, cliques)
    return absorb_singletons(clusters, embeddings)


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    cluster_range: ClusterRange
    segment_ids: tuple[str, ...]
    segment_embeddings: tuple[np.ndarray, ...]
    cluster_embedding: np.ndarray
    token_count: int
    text: str = ""
    segment_spans: tuple[tuple[int, int], ...] = ()  # byte spans into ``text``

    @property
    def vectors(self) -> list[np.ndarray]:
        """Segment vectors followed by the cluster vector."""
        return [*self.segment_embeddings, self.cluster_embedding]


def _chunk_text(members: Sequence[Segment], doc: Document | None) -> str:
    if doc is not None:
        return doc.slice(members[0].span[0], members[-1].span[1])
    # without the document, pad inter-segment gaps with spaces so byte spans stay valid
    out = bytearray(members[0].text.encode("utf-8"))
    for prev, s in zip(members, members[1:]):
        out += b" " * (s.span[0] - prev.span[1]) + s.text.encode("utf-8")
    return out.decode("utf-8")


def build_chunk(segments: Sequence[Segment], embeddings: Sequence[np.ndarray],
                rng: ClusterRange, chunk_id: str, doc: Document | None = None) -> Chunk:
    members = [segments[i] for i in rng.indices()]
    vecs = tuple(np.asarray(embeddings[i], dtype=np.float64) for i in rng.indices())
    base = members[0].span[0]
    return Chunk(
        chunk_id=chunk_id,
        doc_id=members[0].doc_id,
        cluster_range=rng,
        segment_ids=tuple(s.segment_id for s in members),
        segment_embeddings=vecs,
        cluster_embedding=mean_pool(vecs),
        token_count=sum(s.token_count for s in members),
        text=_chunk_text(members, doc),
        segment_spans=tuple((s.span[0] - base, s.span[1] - base) for s in members),
    )


def cluster_pipeline(segments: Sequence[Segment], embeddings: Sequence[np.ndarray] | None = None,
                     k: float = 1.2, max_nodes: int = DEFAULT_MAX_NODES,
                     doc: Document | None = None) -> list[Chunk]:
    if embeddings is None:
        embeddings = [s.embedding for s in segments]
    if len(embeddings) != len(segments):
        raise ValueError("need exactly one embedding per segment")
    ranges = cluster_ranges(embeddings, k, max_nodes)
    doc_id = segments[0].doc_id if segments else ""
    return [build_chunk(segments, embeddings, r, f"{doc_id}:c{j}", doc) for j, r in enumerate(ranges)]
