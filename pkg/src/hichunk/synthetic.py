"""Synthetic topic-block corpora with planted needle sentences.

Each document concatenates several topic blocks. Every block carries
one needle sentence built from tokens unique to it, so a query made of
those tokens has exactly one correct answer location.
"""

from __future__ import annotations

import random
import string
from dataclasses import dataclass

from .document import Document
from .embedding import bucket_of

COMMON_WORDS = (
    "the of and to in is was for on that with as by at from this it an be are "
    "which or were had has have not but they their its also more one two"
).split()


@dataclass(frozen=True)
class Needle:
    doc_id: str
    block: int
    sentence: str
    query: str


def _word(rng: random.Random, used: set[str], length: int = 7) -> str:
    while True:
        w = "".join(rng.choices(string.ascii_lowercase, k=length))
        if w not in used:
            used.add(w)
            return w


def make_topics(n_topics: int, words_per_topic: int, rng: random.Random, used: set[str]) -> list[list[str]]:
    return [[_word(rng, used) for _ in range(words_per_topic)] for _ in range(n_topics)]


def _sentence(rng: random.Random, topic: list[str], length: int, topic_share: float) -> str:
    words = [rng.choice(topic) if rng.random() < topic_share else rng.choice(COMMON_WORDS)
             for _ in range(length)]
    return " ".join(words).capitalize() + "."


def needle_corpus(n_docs: int = 50, blocks: int = 4, sentences_per_block: int = 20,
                  n_topics: int = 12, words_per_topic: int = 40, topic_share: float = 0.6,
                  sentence_len: tuple[int, int] = (10, 16), seed: int = 0
                  ) -> tuple[list[Document], list[Needle]]:
    rng = random.Random(seed)
    used = set(COMMON_WORDS)
    topics = make_topics(n_topics, words_per_topic, rng, used)
    docs, needles = [], []
    for d in range(n_docs):
        doc_id = f"doc{d:03d}"
        parts = []
        for b, t in enumerate(rng.sample(range(n_topics), blocks)):
            sents = [_sentence(rng, topics[t], rng.randint(*sentence_len), topic_share)
                     for _ in range(sentences_per_block)]
            keys = [_word(rng, used) for _ in range(3)]
            value = _word(rng, used)
            needle = f"The {' '.join(keys)} code is {value}."
            sents.insert(rng.randrange(1, sentences_per_block), needle)
            needles.append(Needle(doc_id, b, needle, f"What is the {' '.join(keys)} code?"))
            parts.append(" ".join(sents))
        docs.append(Document.from_text(doc_id, "\n".join(parts)))
    return docs, needles


def needle_recall(needles, retrieved_texts: list[list[str]]) -> float:
    """Fraction of needles whose sentence appears in any retrieved chunk text."""
    hits = sum(any(n.sentence in t for t in texts) for n, texts in zip(needles, retrieved_texts))
    return hits / len(needles) if needles else 0.0


def clique_texts(cliques, n: int, dim: int = 4096, seed: int = 0) -> list[str]:
    """One text per node whose hashed embeddings form the graph spanned by ``cliques``.

    Every edge gets a private token; a node's text lists the tokens of its
    incident edges. Tokens are picked so no two share a hash bucket, which
    makes edge cosines ``1/sqrt(deg_i * deg_j)`` and non-edge cosines 0.
    """
    edges = sorted({(a, b) for q in cliques for a in q for b in q if a < b})
    taken: set[int] = set()
    words: list[str] = []
    i = 0
    while len(words) < len(edges) + n:
        w = f"w{i}x"
        i += 1
        b = bucket_of(w, dim, seed)[0]
        if b not in taken:
            taken.add(b)
            words.append(w)
    texts: list[list[str]] = [[] for _ in range(n)]
    for (a, b), w in zip(edges, words):
        texts[a].append(w)
        texts[b].append(w)
    for node, own in zip(range(n), words[len(edges):]):
        if not texts[node]:
            texts[node].append(own)  # isolated node still needs a non-zero vector
    return [" ".join(t) for t in texts]
