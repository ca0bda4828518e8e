"""Documents, sentences and token accounting.

Spans are byte offsets into the UTF-8 encoding of ``Document.text``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator, Literal

# a sentence ends after terminal punctuation followed by whitespace, or at a hard newline
_SENTENCE_CUT = re.compile(r"[.!?](?=\s)|\n")


@dataclass(frozen=True)
class TokenizerSpec:
    kind: Literal["whitespace", "custom-regex"] = "whitespace"
    pattern: str | None = None

    def __post_init__(self):
        if self.kind not in ("whitespace", "custom-regex"):
            raise ValueError(f"unknown tokenizer kind {self.kind!r}")
        if self.kind == "custom-regex":
            if not self.pattern:
                raise ValueError("custom-regex tokenizer needs a pattern")
            re.compile(self.pattern)

    def tokens(self, text: str) -> list[str]:
        if self.kind == "whitespace":
            return text.split()
        return re.findall(self.pattern, text)


WHITESPACE = TokenizerSpec()


def count_tokens(text: str, spec: TokenizerSpec = WHITESPACE) -> int:
    return len(spec.tokens(text))


@dataclass(frozen=True)
class Sentence:
    index: int
    span: tuple[int, int]
    token_count: int


def split_sentences(text: str, spec: TokenizerSpec = WHITESPACE) -> list[Sentence]:
    """Rule-based splitter. Whitespace-only text yields ``[]``."""
    pieces: list[tuple[int, int]] = []
    start = 0
    for m in _SENTENCE_CUT.finditer(text):
        cut = m.end() if m.group() != "\n" else m.start()
        pieces.append((start, cut))
        start = m.end()
    pieces.append((start, len(text)))

    sentences: list[Sentence] = []
    char_pos = 0
    byte_pos = 0

    def to_bytes(ci: int) -> int:
        nonlocal char_pos, byte_pos
        byte_pos += len(text[char_pos:ci].encode("utf-8"))
        char_pos = ci
        return byte_pos

    for a, b in pieces:
        piece = text[a:b]
        stripped = piece.strip()
        if not stripped:
            continue
        lo = a + (len(piece) - len(piece.lstrip()))
        hi = b - (len(piece) - len(piece.rstrip()))
        span = (to_bytes(lo), to_bytes(hi))
        sentences.append(Sentence(len(sentences), span, count_tokens(stripped, spec)))
    return sentences


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    sentences: tuple[Sentence, ...] = field(default=())

    @classmethod
    def from_text(cls, doc_id: str, text: str, spec: TokenizerSpec = WHITESPACE) -> "Document":
        return cls(doc_id, text, tuple(split_sentences(text, spec)))

    @cached_property
    def raw(self) -> bytes:
        return self.text.encode("utf-8")

    def slice(self, start: int, end: int) -> str:
        return self.raw[start:end].decode("utf-8")

    def sentence_text(self, i: int) -> str:
        return self.slice(*self.sentences[i].span)

    def sentence_texts(self) -> list[str]:
        return [self.slice(*s.span) for s in self.sentences]

    @property
    def token_count(self) -> int:
        return sum(s.token_count for s in self.sentences)

    def __len__(self) -> int:
        return len(self.sentences)


def iter_jsonl_corpus(path: str | Path, spec: TokenizerSpec = WHITESPACE) -> Iterator[Document]:
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            obj = json.loads(line)
            try:
                yield Document.from_text(str(obj["doc_id"]), obj["text"], spec)
            except KeyError as e:
                raise ValueError(f"{path}:{lineno}: missing field {e.args[0]!r}") from None


def load_corpus(path: str | Path, spec: TokenizerSpec = WHITESPACE) -> list[Document]:
    """Load a ``.jsonl`` corpus, a single text file, or a directory of ``*.txt`` files."""
    path = Path(path)
    if path.is_dir():
        return [
            Document.from_text(p.stem, p.read_text(encoding="utf-8"), spec)
            for p in sorted(path.glob("*.txt"))
        ]
    if path.suffix == ".jsonl":
        return list(iter_jsonl_corpus(path, spec))
    return [Document.from_text(path.stem, path.read_text(encoding="utf-8"), spec)]
