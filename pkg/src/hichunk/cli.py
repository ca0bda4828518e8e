"""Command-line entry point: ``hichunk {index,query,segment,eval}``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .clustering import K_FOR_CHUNK_SIZE
from .document import Document, load_corpus
from .embedding import EmbeddingProviderConfig
from .errors import ConfigError, HichunkError, IndexFormatError, ReaderError
from .index import (
    METHODS,
    RetrievalMode,
    auto_top_k,
    index_documents,
    load_index,
    retrieve,
    save_index,
)
from .metrics import (
    UNSUPPORTED,
    QAExample,
    bleu_n,
    gold_token_hit_rate,
    load_qa_examples,
    parse_choice,
    pk_score,
    rouge_l,
    token_f1,
    write_report,
)
from .reader import ReaderConfig, answer
from .segmentation import FallbackSegmenter, HsegSegmenter, WordVectorTable, load_weights

log = logging.getLogger("hichunk")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    corpus: str | None = None
    method: str = "segment_cluster"
    k: float | None = None
    chunk_size: int = 512
    target_chunk_tokens: int | None = None
    breakpoint_quantile: float = 0.05
    embedder: dict = field(default_factory=dict)
    segmenter: dict = field(default_factory=lambda: {"kind": "fallback"})
    retrieval_mode: str = "segment_plus_cluster"
    top_k: int | None = None  # None means auto-budget
    reader: dict | None = None
    out: str = "hichunk-out"
    workers: int = 0
    grid: list = field(default_factory=list)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        if self.method == "fixed" and self.chunk_size < 1:
            raise ConfigError("fixed chunking needs chunk_size >= 1")
        try:
            RetrievalMode(self.retrieval_mode)
        except ValueError:
            raise ConfigError(f"unknown retrieval mode {self.retrieval_mode!r}") from None
        if self.top_k is not None and self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        self.embedder_config()
        if self.reader is not None:
            self.reader_config()

    @property
    def clustered(self) -> bool:
        return self.method in ("segment_cluster", "cluster_only_storage")

    def resolved_k(self) -> float:
        """Explicit k, else the k matching the target chunk size (512 by default)."""
        if self.k is not None:
            return self.k
        return K_FOR_CHUNK_SIZE.get(self.target_chunk_tokens or 512, 1.2)

    def resolved_target(self) -> int | None:
        if self.target_chunk_tokens is not None or not self.clustered:
            return self.target_chunk_tokens
        return 512 if self.k is None else None

    def embedder_config(self) -> EmbeddingProviderConfig:
        try:
            return EmbeddingProviderConfig.from_dict(self.embedder)
        except TypeError as e:
            raise ConfigError(f"bad embedder config: {e}") from None

    def reader_config(self) -> ReaderConfig | None:
        if self.reader is None:
            return None
        try:
            return ReaderConfig.from_dict(self.reader)
        except TypeError as e:
            raise ConfigError(f"bad reader config: {e}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hichunk", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON run config; flags override it")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="seed for the deterministic embedder")
    p.add_argument("--workers", type=int, help="indexing worker threads")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_segmenter_flags(sp):
        sp.add_argument("--segmenter", choices=["fallback", "hseg"])
        sp.add_argument("--weights", help="HSEG weight file (hseg segmenter)")
        sp.add_argument("--word-vectors", help="word-vector text table (hseg segmenter)")
        sp.add_argument("--threshold", type=float, help="boundary probability threshold")
        sp.add_argument("--min-sentences", type=int)
        sp.add_argument("--drop-quantile", type=float)

    sp = sub.add_parser("index", help="chunk, embed and index a corpus")
    sp.add_argument("--corpus")
    sp.add_argument("--method", choices=METHODS)
    sp.add_argument("--k", type=float)
    sp.add_argument("--chunk-size", type=int)
    add_segmenter_flags(sp)

    sp = sub.add_parser("query", help="retrieve chunks for a question")
    sp.add_argument("index_dir")
    sp.add_argument("question")
    sp.add_argument("--top-k", type=int)
    sp.add_argument("--mode", choices=[m.value for m in RetrievalMode])
    sp.add_argument("--doc-id")

    sp = sub.add_parser("segment", help="print predicted segments of one document")
    sp.add_argument("doc")
    sp.add_argument("--gold", help="file of gold boundary sentence indices")
    add_segmenter_flags(sp)

    sp = sub.add_parser("eval", help="retrieve (and optionally answer) over a QA file")
    sp.add_argument("qa_file")
    sp.add_argument("--index", dest="index_dir")
    sp.add_argument("--top-k", type=int)
    sp.add_argument("--mode", choices=[m.value for m in RetrievalMode])
    sp.add_argument("--grid", action="store_true", help="run every cell of the config grid")
    return p


def load_config(args) -> RunConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config {args.config}: {e}") from None
    cfg = RunConfig.from_dict(data)
    if args.out:
        cfg.out = args.out
    if args.workers is not None:
        cfg.workers = args.workers
    if args.seed is not None:
        cfg.embedder = {**cfg.embedder, "seed": args.seed}
    g = vars(args)
    for flag, attr in (("corpus", "corpus"), ("method", "method"), ("k", "k"),
                       ("chunk_size", "chunk_size"), ("top_k", "top_k"), ("mode", "retrieval_mode")):
        if g.get(flag) is not None:
            setattr(cfg, attr, g[flag])
    seg = dict(cfg.segmenter)
    for flag, key in (("segmenter", "kind"), ("weights", "weights"), ("word_vectors", "word_vectors"),
                      ("threshold", "threshold"), ("min_sentences", "min_sentences"),
                      ("drop_quantile", "drop_quantile")):
        if g.get(flag) is not None:
            seg[key] = g[flag]
    cfg.segmenter = seg
    cfg.validate()
    return cfg


def make_segmenter(seg: dict, embedder: EmbeddingProviderConfig):
    kind = seg.get("kind", "fallback")
    if kind == "fallback":
        return FallbackSegmenter(embedder, int(seg.get("min_sentences", 1)),
                                 float(seg.get("drop_quantile", 0.5)))
    if kind == "hseg":
        weights_path = seg.get("weights")
        if not weights_path or not Path(weights_path).is_file():
            raise UsageError(f"hseg segmenter needs an existing weights file (got {weights_path!r})")
        table = WordVectorTable.load(seg["word_vectors"]) if seg.get("word_vectors") else WordVectorTable()
        return HsegSegmenter(load_weights(weights_path), table, float(seg.get("threshold", 0.5)))
    raise UsageError(f"unknown segmenter kind {kind!r}")


def _workers(cfg: RunConfig) -> int:
    return cfg.workers or os.cpu_count() or 1


# ---------------------------------------------------------------------------
# commands

def build_index(cfg: RunConfig, out_dir: Path) -> tuple[Path, dict]:
    if not cfg.corpus or not Path(cfg.corpus).exists():
        raise UsageError(f"corpus not readable: {cfg.corpus!r}")
    try:
        docs = load_corpus(cfg.corpus)
    except (OSError, ValueError, UnicodeDecodeError) as e:
        raise UsageError(f"corpus not readable: {e}") from None
    if not docs:
        raise UsageError(f"no documents found in {cfg.corpus}")
    embedder = cfg.embedder_config()
    segmenter = None
    if cfg.clustered:
        segmenter = make_segmenter(cfg.segmenter, embedder)
    index = index_documents(
        docs, embedder, segmenter, k=cfg.resolved_k(), method=cfg.method,
        chunk_size=cfg.chunk_size, breakpoint_quantile=cfg.breakpoint_quantile,
        workers=_workers(cfg), target_chunk_tokens=cfg.resolved_target(),
    )
    index.manifest["embedder"] = dataclasses.asdict(embedder)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_index(index, out_dir)

    per_doc = {}
    for rec in index.records:
        d = per_doc.setdefault(rec.doc_id, {"chunks": 0, "segments": 0})
        d["chunks"] += 1
        d["segments"] += len(rec.segment_spans)
    failures = index.manifest.get("failures", {})
    run_log = {
        "documents": len(docs),
        "indexed": len(docs) - len(failures),
        "failures": failures,
        "per_document": per_doc,
        "records": len(index.records),
        "vectors": int(index.vectors.shape[0]),
    }
    (out_dir / "run_log.json").write_text(json.dumps(run_log, indent=2, sort_keys=True) + "\n")
    if len(failures) == len(docs):
        raise HichunkError("every document failed to index")
    return out_dir, run_log


def cmd_index(cfg: RunConfig) -> int:
    out_dir, run_log = build_index(cfg, Path(cfg.out))
    print(json.dumps({"index": str(out_dir), **{k: run_log[k] for k in ("documents", "indexed", "records")}}))
    return EXIT_OK


def _open_index(index_dir):
    if not index_dir or not Path(index_dir).is_dir():
        raise UsageError(f"index directory not found: {index_dir!r}")
    return load_index(index_dir)


def _query_embedder(cfg: RunConfig, index) -> EmbeddingProviderConfig:
    if cfg.embedder:
        return cfg.embedder_config()
    stored = index.manifest.get("embedder")
    if stored:
        return EmbeddingProviderConfig.from_dict(stored)
    return EmbeddingProviderConfig(dim=index.dim)


def cmd_query(cfg: RunConfig, index_dir: str, question: str, doc_id: str | None = None) -> int:
    index = _open_index(index_dir)
    if len(index) == 0:
        raise HichunkError("index is empty")
    top_k = cfg.top_k or auto_top_k(index)
    results = retrieve(question, index, _query_embedder(cfg, index),
                       RetrievalMode(cfg.retrieval_mode), top_k, doc_id)
    for r in results:
        rec = index.record(r.chunk_id)
        print(json.dumps({
            "rank": r.rank, "chunk_id": r.chunk_id, "doc_id": rec.doc_id,
            "score": r.score, "best_vector": r.best_vector, "text": rec.text[:200],
        }, ensure_ascii=False))
    return EXIT_OK


def _read_gold(path: str) -> list[int]:
    text = Path(path).read_text(encoding="utf-8").strip()
    if text.startswith("["):
        return [int(x) for x in json.loads(text)]
    return [int(x) for x in text.split()]


def cmd_segment(cfg: RunConfig, doc_path: str, gold: str | None) -> int:
    p = Path(doc_path)
    if not p.is_file():
        raise UsageError(f"document not readable: {doc_path}")
    doc = Document.from_text(p.stem, p.read_text(encoding="utf-8"))
    if len(doc) == 0:
        raise UsageError("document is empty")
    segmenter = make_segmenter(cfg.segmenter, cfg.embedder_config())
    segments = segmenter(doc)
    for s in segments:
        a, b = s.sentence_range
        print(f"{a}-{b}\t{s.text[:80]!s}".replace("\n", " "))
    if gold:
        hyp = [s.sentence_range[1] for s in segments]
        try:
            ref = _read_gold(gold)
        except (OSError, ValueError) as e:
            raise UsageError(f"cannot read gold boundaries: {e}") from None
        if len(doc) < 2:
            print("Pk: n/a (single sentence)")
        else:
            print(f"Pk: {pk_score(ref, hyp, len(doc)):.6f}")
    return EXIT_OK


def _question_text(ex: QAExample) -> str:
    if ex.choices is None:
        return ex.question
    opts = "\n".join(f"{i + 1}. {c}" for i, c in enumerate(ex.choices))
    return f"{ex.question}\n{opts}\nReply with the number of the correct option."


def evaluate(index, examples: list[QAExample], embedder: EmbeddingProviderConfig,
             mode: RetrievalMode, top_k: int | None, reader: ReaderConfig | None):
    """Score every example; returns (aggregate report, per-example rows)."""
    k = top_k or auto_top_k(index)
    doc_ids = {r.doc_id for r in index.records}

    def one(ex: QAExample) -> dict:
        hits = retrieve(ex.question, index, embedder, mode, k,
                        ex.doc_id if ex.doc_id in doc_ids else None)
        texts = [index.record(h.chunk_id).text for h in hits]
        row = {"question": ex.question, "doc_id": ex.doc_id,
               "retrieved": [h.chunk_id for h in hits]}
        if reader is None:
            row["gold_hit_rate"] = gold_token_hit_rate("\n".join(texts), ex.gold_answers)
            return row
        try:
            out = answer(_question_text(ex), texts, reader)
            row["answer"] = out
        except ReaderError as e:
            row["answer"] = None
            row["error"] = str(e)
            out = None
        if ex.choices is not None:
            pred = parse_choice(out, len(ex.choices)) if out is not None else None
            row["predicted_choice"] = pred
            row["correct"] = float(pred == ex.gold_choice)
        else:
            text = out or ""
            row["token_f1"] = token_f1(text, ex.gold_answers) if out is not None else 0.0
            row["rouge_l"] = max(rouge_l(text, g) for g in ex.gold_answers) if out is not None else 0.0
            row["bleu_1"] = bleu_n(text, ex.gold_answers, 1) if out is not None else 0.0
            row["bleu_4"] = bleu_n(text, ex.gold_answers, 4) if out is not None else 0.0
        return row

    workers = reader.max_in_flight if reader is not None else 1
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(one, examples))

    n = len(rows)
    report: dict = {"count": n, "top_k": k, "retrieval_mode": mode.value}
    if reader is None:
        report["gold_hit_rate"] = sum(r["gold_hit_rate"] for r in rows) / n if n else 0.0
    else:
        report["unanswered"] = sum(r.get("answer") is None for r in rows)
        mc = [r for r in rows if "correct" in r]
        free = [r for r in rows if "token_f1" in r]
        if mc:
            report["accuracy"] = sum(r["correct"] for r in mc) / len(mc)
        if free:
            for m in ("token_f1", "rouge_l", "bleu_1", "bleu_4"):
                report[m] = sum(r[m] for r in free) / len(free)
            report["meteor"] = UNSUPPORTED
    return report, rows


def _write_rows(path: Path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n")


def cmd_eval(cfg: RunConfig, qa_file: str, index_dir: str | None, grid: bool) -> int:
    if not Path(qa_file).is_file():
        raise UsageError(f"QA file not readable: {qa_file}")
    try:
        examples = load_qa_examples(qa_file)
    except ValueError as e:
        raise UsageError(str(e)) from None
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    if not grid:
        index = _open_index(index_dir)
        report, rows = evaluate(index, examples, _query_embedder(cfg, index),
                                RetrievalMode(cfg.retrieval_mode), cfg.top_k, cfg.reader_config())
        _write_rows(out / "examples.jsonl", rows)
        print(write_report(report, out / "report.json"))
        return EXIT_OK

    if not cfg.grid:
        raise UsageError("--grid needs a non-empty 'grid' list in the config")
    combined = {}
    base = dataclasses.asdict(cfg)
    base.pop("grid")
    for i, cell in enumerate(cfg.grid):
        name = cell.get("name", f"cell{i}")
        cell_cfg = RunConfig.from_dict({**base, **{k: v for k, v in cell.items() if k != "name"}})
        cell_cfg.validate()
        cell_dir = out / name
        index_path, _ = build_index(cell_cfg, cell_dir / "index")
        index = load_index(index_path)
        report, rows = evaluate(index, examples, cell_cfg.embedder_config(),
                                RetrievalMode(cell_cfg.retrieval_mode), cell_cfg.top_k,
                                cell_cfg.reader_config())
        _write_rows(cell_dir / "examples.jsonl", rows)
        write_report(report, cell_dir / "report.json")
        combined[name] = report
    print(write_report(combined, out / "grid_report.json"))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        if args.command == "index":
            return cmd_index(cfg)
        if args.command == "query":
            return cmd_query(cfg, args.index_dir, args.question, args.doc_id)
        if args.command == "segment":
            return cmd_segment(cfg, args.doc, args.gold)
        return cmd_eval(cfg, args.qa_file, args.index_dir, args.grid)
    except (UsageError, ConfigError) as e:
        print(f"hichunk: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (HichunkError, IndexFormatError, OSError, ValueError) as e:
        print(f"hichunk: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
