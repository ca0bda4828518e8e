import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hichunk import hvec
from hichunk.baselines import fixed_size_chunks, fixed_size_ranges, semantic_chunks
from hichunk.document import Document
from hichunk.embedding import EmbeddingProviderConfig
from hichunk.errors import (
    ChecksumError,
    IndexFormatError,
    MissingIndexFileError,
    UnsupportedIndexVersionError,
    ZeroNormError,
)
from hichunk.index import (
    ChunkIndex,
    ChunkRecord,
    RetrievalMode,
    auto_top_k,
    budget_top_k,
    chunk_score,
    index_documents,
    load_index,
    retrieve,
    retrieve_by_vector,
    save_index,
)
from hichunk.segmentation import FallbackSegmenter, materialize_segments
from hichunk.synthetic import clique_texts

from oracles import brute_force_retrieve, random_index


def one_record_index():
    rec = ChunkRecord("c0", "d", "t", 5, (0, 1, 2))
    return ChunkIndex({"dim": 2}, [rec], np.array([[1, 0], [0, 1], [0.5, 0.5]], dtype=np.float32)), rec


def per_sentence(doc):
    return materialize_segments(doc, [1] * len(doc))


class TestChunkScore:
    def test_segment_plus_cluster(self):
        idx, rec = one_record_index()
        assert chunk_score([1, 0], rec, idx, "segment_plus_cluster") == (1.0, "segment(0)")

    def test_cluster_only(self):
        idx, rec = one_record_index()
        score, best = chunk_score([1, 0], rec, idx, RetrievalMode.CLUSTER_ONLY)
        assert score == pytest.approx(0.70710678, abs=1e-8)
        assert best == "cluster"

    def test_query_equals_cluster(self):
        idx, rec = one_record_index()
        assert chunk_score([0.5, 0.5], rec, idx, "cluster_only")[0] == pytest.approx(1.0)

    def test_tie_reports_segment(self):
        rec = ChunkRecord("c0", "d", "t", 5, (0, 1))
        idx = ChunkIndex({}, [rec], np.array([[1, 1], [1, 1]], dtype=np.float32))
        assert chunk_score([1, 1], rec, idx)[1] == "segment(0)"

    def test_single_vector_mode_uses_first_row(self):
        idx, rec = one_record_index()
        assert chunk_score([0, 1], rec, idx, "single_vector") == (0.0, "segment(0)")

    def test_zero_query(self):
        idx, rec = one_record_index()
        with pytest.raises(ZeroNormError):
            chunk_score([0, 0], rec, idx)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**31))
    def test_superset_never_lowers_score(self, seed):
        rng = np.random.default_rng(seed)
        idx = random_index(rng, 5, 6, 8)
        q = rng.normal(size=8)
        for rec in idx.records:
            full = chunk_score(q, rec, idx, "segment_plus_cluster")[0]
            assert full >= chunk_score(q, rec, idx, "cluster_only")[0]
            assert full >= chunk_score(q, rec, idx, "single_vector")[0]


class TestRetrieve:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            idx = random_index(rng, int(rng.integers(1, 60)), 8, 16)
            q = rng.normal(size=16)
            top_k = int(rng.integers(1, 70))
            for mode in ("segment_plus_cluster", "cluster_only", "single_vector"):
                got = retrieve_by_vector(q, idx, mode, top_k)
                want = brute_force_retrieve(q, idx, mode, top_k)
                assert [r.chunk_id for r in got] == [c for _, c in want]
                np.testing.assert_allclose([r.score for r in got], [s for s, _ in want], atol=1e-9)
                assert [r.rank for r in got] == list(range(1, len(got) + 1))

    def test_ties_by_chunk_id(self):
        recs = [ChunkRecord(c, "d", "", 1, (i,)) for i, c in enumerate(["b", "a", "c"])]
        idx = ChunkIndex({}, recs, np.ones((3, 2), dtype=np.float32))
        assert [r.chunk_id for r in retrieve_by_vector([1, 1], idx, top_k=3)] == ["a", "b", "c"]

    def test_top_k_and_errors(self):
        idx, _ = one_record_index()
        with pytest.raises(ValueError):
            retrieve_by_vector([1, 0], idx, top_k=0)
        with pytest.raises(ValueError):
            retrieve_by_vector([1, 0], ChunkIndex({}, [], np.zeros((0, 2))))
        with pytest.raises(ValueError):
            retrieve_by_vector([1, 0, 0], idx)

    def test_exact_text_ranks_first(self):
        cfg = EmbeddingProviderConfig(dim=1024)
        texts = clique_texts([], 4, dim=1024)
        docs = [Document.from_text(f"d{i}", t) for i, t in enumerate(texts)]
        idx = index_documents(docs, cfg, per_sentence)
        (top,) = retrieve(texts[2], idx, cfg, top_k=1)
        assert top.chunk_id == "d2:c0"
        assert top.score == pytest.approx(1.0, abs=1e-6)

    def test_engineered_scores(self):
        recs = [ChunkRecord("lo", "d", "", 1, (0,)), ChunkRecord("hi", "d", "", 1, (1,))]
        vecs = np.array([[0.1, np.sqrt(1 - 0.01)], [0.9, np.sqrt(1 - 0.81)]], dtype=np.float32)
        got = retrieve_by_vector([1, 0], ChunkIndex({}, recs, vecs), top_k=1)
        assert [r.chunk_id for r in got] == ["hi"]
        assert got[0].score == pytest.approx(0.9, abs=1e-6)

    def test_doc_filter(self):
        idx = random_index(np.random.default_rng(0), 20, 3, 4)
        got = retrieve_by_vector(np.ones(4), idx, top_k=100, doc_id="d1")
        assert got and all(idx.record(r.chunk_id).doc_id == "d1" for r in got)


class TestBudget:
    @pytest.mark.parametrize("size,k", [(256, 20), (512, 8), (1024, 4), (2048, 2), (3000, 1), (100, 40)])
    def test_table(self, size, k):
        assert budget_top_k(size) == k

    def test_non_positive(self):
        with pytest.raises(ValueError):
            budget_top_k(0)


def doc_with_counts(counts):
    return Document.from_text("d", " ".join(" ".join(["w"] * c) + "." for c in counts))


class TestFixedSize:
    def test_exact_fill(self):
        chunks = fixed_size_chunks(doc_with_counts([10] * 10), 50)
        assert [c.sentence_range for c in chunks] == [(0, 4), (5, 9)]
        assert [c.token_count for c in chunks] == [50, 50]

    def test_oversized(self):
        (c,) = fixed_size_chunks(doc_with_counts([100]), 50)
        assert c.token_count == 100

    def test_greedy(self):
        assert fixed_size_ranges([30, 30, 30], 50) == [(0, 0), (1, 1), (2, 2)]

    @given(st.lists(st.integers(1, 40), max_size=30), st.integers(1, 80))
    def test_covers_in_order(self, counts, size):
        ranges = fixed_size_ranges(counts, size)
        flat = [i for a, b in ranges for i in range(a, b + 1)]
        assert flat == list(range(len(counts)))
        for a, b in ranges:
            assert a == b or sum(counts[a:b + 1]) <= size


class TestSemantic:
    cfg = EmbeddingProviderConfig(dim=256)

    def test_identical(self):
        assert len(semantic_chunks(Document.from_text("d", "same thing. " * 5), self.cfg, 0.5)) == 1

    def test_two_blocks(self):
        a, b = clique_texts([], 2, dim=256)
        doc = Document.from_text("d", f"{a}. " * 4 + f"{b}. " * 4)
        chunks = semantic_chunks(doc, self.cfg, 0.5)
        assert [c.sentence_range for c in chunks] == [(0, 3), (4, 7)]
        assert all(len(c.vectors) == 1 for c in chunks)

    def test_one_sentence(self):
        assert len(semantic_chunks(Document.from_text("d", "Only one."), self.cfg)) == 1


class TestIndexDocuments:
    cfg = EmbeddingProviderConfig(dim=4096)

    def test_single_segment(self):
        idx = index_documents([Document.from_text("d", "Just one sentence.")], self.cfg, per_sentence)
        assert len(idx.records) == 1 and idx.vectors.shape == (2, 4096)
        assert idx.vectors[0].tobytes() == idx.vectors[1].tobytes()

    def test_merge_example_structure(self):
        texts = clique_texts([(0, 1, 5), (1, 3, 6), (2, 3, 4), (0, 5, 6)], 7)
        doc = Document.from_text("d", " ".join(t + "." for t in texts))
        idx = index_documents([doc], self.cfg, per_sentence, k=0.0)
        assert [len(r.vector_rows) for r in idx.records] == [6, 3]

    def test_empty(self):
        with pytest.raises(ValueError):
            index_documents([], self.cfg, per_sentence)

    def test_manifest(self):
        docs = [Document.from_text("a", "One. Two. Three."), Document.from_text("b", "Four.")]
        idx = index_documents(docs, EmbeddingProviderConfig(dim=32), FallbackSegmenter(EmbeddingProviderConfig(dim=32)))
        m = idx.manifest
        assert m["method"] == "segment_cluster" and m["params"] == {"k": 1.2}
        assert m["dim"] == 32 and m["record_count"] == len(idx.records)
        assert set(m["chunks_per_doc"]) == {"a", "b"}

    def test_cluster_only_storage(self):
        docs = [Document.from_text("a", "One two. Three four. Five six.")]
        idx = index_documents(docs, self.cfg, per_sentence, method="cluster_only_storage")
        assert all(len(r.vector_rows) == 1 for r in idx.records)

    def test_fixed_method(self):
        idx = index_documents([doc_with_counts([10] * 10)], EmbeddingProviderConfig(dim=16),
                              method="fixed", chunk_size=50)
        assert len(idx.records) == 2 and auto_top_k(idx) == budget_top_k(50)

    def test_parallel_matches_serial(self):
        docs = [Document.from_text(f"d{i}", f"Alpha {i} beta. Gamma delta {i}. Eps.") for i in range(6)]
        seg = FallbackSegmenter(self.cfg)
        a = index_documents(docs, self.cfg, seg, workers=1)
        b = index_documents(docs, self.cfg, seg, workers=4)
        assert a.records == b.records and a.vectors.tobytes() == b.vectors.tobytes()

    def test_embedding_failure_isolated(self, stub_server):
        def handler(body):
            if any("poison" in t for t in body["input"]):
                return 500, {}
            return 200, {"data": [{"index": i, "embedding": [1.0, float(i)]} for i in range(len(body["input"]))]}
        stub_server.handler = handler
        cfg = EmbeddingProviderConfig(kind="remote", dim=2, endpoint_url=stub_server.url, backoff=0)
        docs = [Document.from_text("ok", "Fine text."), Document.from_text("bad", "poison here.")]
        idx = index_documents(docs, cfg, per_sentence)
        assert list(idx.manifest["failures"]) == ["bad"]
        assert [r.doc_id for r in idx.records] == ["ok"]


class TestPersistence:
    def test_roundtrip(self, tmp_path):
        idx = random_index(np.random.default_rng(5), 30, 5, 12)
        save_index(idx, tmp_path / "ix")
        back = load_index(tmp_path / "ix")
        assert back == idx
        assert back.vectors.tobytes() == idx.vectors.tobytes()

    def test_truncated_vectors(self, tmp_path):
        save_index(random_index(np.random.default_rng(1), 5, 3, 4), tmp_path)
        p = tmp_path / "vectors.hvec"
        p.write_bytes(p.read_bytes()[:-9])
        with pytest.raises(ChecksumError):
            load_index(tmp_path)

    def test_flipped_byte(self, tmp_path):
        save_index(random_index(np.random.default_rng(1), 5, 3, 4), tmp_path)
        p = tmp_path / "vectors.hvec"
        data = bytearray(p.read_bytes())
        data[30] ^= 0xFF
        p.write_bytes(bytes(data))
        with pytest.raises(ChecksumError):
            load_index(tmp_path)

    def test_version_99(self, tmp_path):
        save_index(random_index(np.random.default_rng(1), 2, 2, 4), tmp_path)
        m = json.loads((tmp_path / "manifest.json").read_text())
        m["version"] = 99
        (tmp_path / "manifest.json").write_text(json.dumps(m))
        with pytest.raises(UnsupportedIndexVersionError):
            load_index(tmp_path)

    def test_missing_file(self, tmp_path):
        save_index(random_index(np.random.default_rng(1), 2, 2, 4), tmp_path)
        (tmp_path / "chunks.jsonl").unlink()
        with pytest.raises(MissingIndexFileError):
            load_index(tmp_path)

    def test_hvec_bad_magic(self):
        data = hvec.encode(np.ones((2, 3), dtype=np.float32))
        with pytest.raises(IndexFormatError):
            hvec.decode(b"NOPE" + data[4:])

    def test_hvec_layout(self):
        data = hvec.encode(np.arange(6, dtype=np.float32).reshape(2, 3))
        assert data[:4] == b"HVEC"
        assert int.from_bytes(data[4:8], "little") == 1
        assert int.from_bytes(data[8:12], "little") == 3
        assert int.from_bytes(data[12:20], "little") == 2
        assert len(data) == 20 + 6 * 4 + 4

    def test_invalid_row_map(self):
        with pytest.raises(ValueError):
            ChunkIndex({}, [ChunkRecord("a", "d", "", 1, (0,))], np.zeros((2, 2)))
        with pytest.raises(ValueError):
            ChunkIndex({}, [ChunkRecord("a", "d", "", 1, (0,)), ChunkRecord("a", "d", "", 1, (1,))],
                       np.zeros((2, 2)))
