"""Exit criteria for the build, one test per criterion.

A PASS/FAIL summary line for each is printed at the end of the run.
"""

import random
import time

import numpy as np
import pytest

from hichunk.clustering import (
    ClusterRange,
    build_graph,
    cluster_pipeline,
    enumerate_maximal_cliques,
    initial_clusters,
    merge_adjacent_clusters,
)
from hichunk.document import Document
from hichunk.embedding import EmbeddingProviderConfig, deterministic_embed, embed_one
from hichunk.errors import ChecksumError
from hichunk.index import (
    budget_top_k,
    chunk_score,
    index_documents,
    load_index,
    retrieve_by_vector,
    save_index,
)
from hichunk.metrics import pk_score
from hichunk.segmentation import (
    FallbackSegmenter,
    SegModelWeights,
    WordVectorTable,
    materialize_segments,
    predict_boundaries,
)
from hichunk.synthetic import needle_corpus, needle_recall

from oracles import (
    brute_force_cliques,
    brute_force_retrieve,
    mean_std,
    pk_oracle,
    random_boundaries,
    random_graph,
    random_index,
)
from reference_lstm import reference_probabilities

pytestmark = pytest.mark.acceptance


def test_c01_worked_merge_example(record_property):
    """C1 worked clique example: initial {1,2},{3,4,5},{6,7}; merged {1..5},{6,7}; < 1 ms"""
    cliques = [(0, 1, 5), (1, 3, 6), (2, 3, 4), (0, 5, 6)]  # 1-based {1,2,6},{2,4,7},{3,4,5},{1,6,7}
    times = []
    for _ in range(5):
        t0 = time.perf_counter()
        init = initial_clusters(cliques, 7)
        merged = merge_adjacent_clusters(init, cliques)
        times.append(time.perf_counter() - t0)
    record_property("detail", f"{min(times) * 1e3:.3f} ms")
    assert init == [ClusterRange(0, 1), ClusterRange(2, 4), ClusterRange(5, 6)]
    assert merged == [ClusterRange(0, 4), ClusterRange(5, 6)]
    assert min(times) < 1e-3


def test_c02_clique_oracle(record_property):
    """C2 maximal cliques equal brute force on 100 random graphs (n <= 12); < 10 s"""
    rng = random.Random(2024)
    t0 = time.perf_counter()
    for i in range(100):
        density = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9][i % 9]
        g = random_graph(rng, rng.randint(1, 12), density)
        assert set(enumerate_maximal_cliques(g)) == set(brute_force_cliques(g))
    elapsed = time.perf_counter() - t0
    record_property("detail", f"{elapsed:.2f} s")
    assert elapsed < 10


def test_c03_partition_invariants(record_property):
    """C3 cluster_pipeline yields contiguous disjoint covering partitions on 1000 instances; < 30 s"""
    rng = random.Random(3)
    vocab = [f"t{i}" for i in range(60)]
    violations = 0
    t0 = time.perf_counter()
    for _ in range(1000):
        n = rng.randint(1, 50)
        texts = [" ".join(rng.choices(vocab, k=rng.randint(3, 12))) for _ in range(n)]
        dim = rng.choice([64, 256, 1024])
        doc = Document.from_text("d", " ".join(t + "." for t in texts))
        segs = materialize_segments(doc, [1] * n)
        embs = [deterministic_embed(t, dim) for t in texts]
        chunks = cluster_pipeline(segs, embs, k=rng.choice([0.4, 0.7, 1.2]))
        covered = [i for c in chunks for i in c.cluster_range.indices()]
        if covered != list(range(n)):
            violations += 1
    elapsed = time.perf_counter() - t0
    record_property("detail", f"{violations} violations, {elapsed:.2f} s")
    assert violations == 0
    assert elapsed < 30


def test_c04_max_cosine_retrieval(record_property):
    """C4 retrieval ranks equal the brute-force oracle on 100 random indexes; multi-vector >= cluster-only; < 10 s"""
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    for _ in range(100):
        dim = int(rng.integers(2, 32))
        idx = random_index(rng, int(rng.integers(1, 201)), 8, dim)
        q = rng.normal(size=dim)
        top_k = int(rng.integers(1, 201))
        for mode in ("segment_plus_cluster", "cluster_only"):
            got = [r.chunk_id for r in retrieve_by_vector(q, idx, mode, top_k)]
            assert got == [c for _, c in brute_force_retrieve(q, idx, mode, top_k)]
        for rec in idx.records:
            assert chunk_score(q, rec, idx, "segment_plus_cluster")[0] >= chunk_score(q, rec, idx, "cluster_only")[0]
    elapsed = time.perf_counter() - t0
    record_property("detail", f"{elapsed:.2f} s")
    assert elapsed < 10


def test_c05_threshold_numerics(record_property):
    """C5 graph threshold matches an independent mean/std recomputation within 1e-9; edge sets nest as k grows"""
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        n, dim = int(rng.integers(2, 30)), int(rng.integers(2, 64))
        embs = list(rng.normal(size=(n, dim)))
        k = float(rng.uniform(-2, 3))
        sims = [float(np.dot(embs[i], embs[j]) / (np.linalg.norm(embs[i]) * np.linalg.norm(embs[j])))
                for i in range(n) for j in range(i + 1, n)]
        mu, sigma = mean_std(sims)
        g = build_graph(embs, k)
        worst = max(worst, abs(g.tau - (mu + k * sigma)))
        edge_sets = [build_graph(embs, kk).edges for kk in np.linspace(-3, 3, 13)]
        assert all(b <= a for a, b in zip(edge_sets, edge_sets[1:]))
    record_property("detail", f"max |tau error| {worst:.2e}")
    assert worst <= 1e-9


def test_c06_segmentation_forward_pass(record_property):
    """C6 boundary probabilities match a reference LSTM within 1e-5 on 10 pairs; zero weights give one segment"""
    vocab = "river bank money loan water fish stream vault , . ; the a of".split()
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        table = WordVectorTable({w: rng.normal(size=300) for w in vocab}, oov_vector=rng.normal(size=300) * 0.1)
        weights = SegModelWeights.random(seed=100 + seed, scale=0.1)
        sents = [" ".join(rng.choice(vocab + ["unseen"], size=int(rng.integers(1, 12)))) + "."
                 for _ in range(int(rng.integers(2, 9)))]
        doc = Document.from_text(f"d{seed}", " ".join(sents))
        ours = predict_boundaries(doc, table, weights).probabilities
        ref = reference_probabilities(doc.sentence_texts(), table, weights)
        worst = max(worst, float(np.max(np.abs(ours - ref))))
    doc = Document.from_text("z", "One sentence. Another one. A third.")
    zero = predict_boundaries(doc, table, SegModelWeights.zeros(), 0.5)
    record_property("detail", f"max |p error| {worst:.2e}")
    assert worst <= 1e-5
    assert len(materialize_segments(doc, zero)) == 1


def test_c07_pk_properties(record_property):
    """C7 Pk(x,x)=0 on 100 references; random-hypothesis mean in [0.4, 0.6]; worked example = 0.25"""
    rng = random.Random(7)
    for _ in range(100):
        n = rng.randint(2, 80)
        ref = random_boundaries(rng, n, rng.randint(0, n - 1))
        assert pk_score(ref, ref, n) == 0.0
    n, ref = 100, [19, 39, 59, 79, 99]
    mean = sum(pk_score(ref, random_boundaries(rng, n, len(ref) - 1), n) for _ in range(1000)) / 1000
    worked = pk_score([9, 19], [19], 20, window=5)
    record_property("detail", f"random mean {mean:.3f}, worked {worked}")
    assert 0.4 <= mean <= 0.6
    assert worked == 0.25 == pk_oracle([9, 19], [19], 20, 5)


def test_c08_budget_table():
    """C8 retrieval budget: 256->20, 512->8, 1024->4, 2048->2"""
    assert [budget_top_k(s) for s in (256, 512, 1024, 2048)] == [20, 8, 4, 2]


def test_c09_persistence(tmp_path, record_property):
    """C9 save/load is bitwise lossless on 20 random indexes; corrupted vectors are rejected"""
    rng = np.random.default_rng(9)
    for i in range(20):
        idx = random_index(rng, int(rng.integers(1, 80)), 8, int(rng.integers(1, 64)))
        save_index(idx, tmp_path / f"ix{i}")
        back = load_index(tmp_path / f"ix{i}")
        assert back.vectors.tobytes() == idx.vectors.tobytes()
        assert back.records == idx.records
    p = tmp_path / "ix0" / "vectors.hvec"
    data = bytearray(p.read_bytes())
    data[len(data) // 2] ^= 0x01
    p.write_bytes(bytes(data))
    with pytest.raises(ChecksumError):
        load_index(tmp_path / "ix0")
    record_property("detail", "20 round-trips, 1 corruption rejected")


def test_c10_synthetic_needle_recall(record_property):
    """C10 hierarchical chunks at the 512-token setting recall needles at least as well as fixed-256; < 60 s"""
    t0 = time.perf_counter()
    docs, needles = needle_corpus(n_docs=50, blocks=4, seed=0)
    cfg = EmbeddingProviderConfig(dim=1024)
    hier = index_documents(docs, cfg, FallbackSegmenter(cfg), k=1.2, target_chunk_tokens=512)
    fixed = index_documents(docs, cfg, method="fixed", chunk_size=256)

    def recall(index, top_k):
        texts = []
        for n in needles:
            hits = retrieve_by_vector(embed_one(cfg, n.query), index, "segment_plus_cluster", top_k)
            texts.append([index.record(h.chunk_id).text for h in hits])
        return needle_recall(needles, texts)

    r_hier = recall(hier, budget_top_k(512))
    r_fixed = recall(fixed, budget_top_k(256))
    elapsed = time.perf_counter() - t0
    record_property("detail", f"recall {r_hier:.3f} vs fixed-256 {r_fixed:.3f}, {elapsed:.1f} s")
    assert r_hier >= r_fixed
    assert elapsed < 60
