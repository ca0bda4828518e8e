"""Segmentation and QA evaluation measures.

Pk for boundary quality; ROUGE-L, BLEU-n, token F1 and accuracy for
answers. METEOR is not provided.
"""

from __future__ import annotations

import json
import math
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

UNSUPPORTED = "unsupported"
_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT = str.maketrans("", "", string.punctuation)


@dataclass(frozen=True)
class QAExample:
    question: str
    gold_answers: tuple[str, ...]
    doc_id: str
    choices: tuple[str, ...] | None = None
    gold_choice: int | None = None

    def __post_init__(self):
        if not self.gold_answers and self.choices is None:
            raise ValueError("QA example needs at least one gold answer")
        if (self.choices is None) != (self.gold_choice is None):
            raise ValueError("choices and gold_choice must be given together")
        if self.choices is not None and not 0 <= self.gold_choice < len(self.choices):
            raise ValueError("gold_choice out of range")

    @classmethod
    def from_json(cls, d: dict) -> "QAExample":
        choices = d.get("choices")
        gold = d.get("gold_answers") or []
        if isinstance(gold, str):
            gold = [gold]
        if choices is not None and not gold:
            gold = [choices[d["gold_choice"]]]
        return cls(
            question=d["question"],
            gold_answers=tuple(gold),
            doc_id=str(d["doc_id"]),
            choices=tuple(choices) if choices is not None else None,
            gold_choice=d.get("gold_choice"),
        )


def load_qa_examples(path: str | Path) -> list[QAExample]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                out.append(QAExample.from_json(json.loads(line)))
            except (KeyError, ValueError, json.JSONDecodeError) as e:
                raise ValueError(f"{path}:{lineno}: {e}") from None
    return out


# ---------------------------------------------------------------------------
# segmentation

@dataclass(frozen=True)
class SegmentationReference:
    """Sorted sentence indices that end a segment; the last sentence always does."""
    boundaries: tuple[int, ...]
    n_sentences: int = field(default=0)

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "SegmentationReference":
        return cls(tuple(i for i, v in enumerate(labels) if v), len(labels))


def _segment_ids(boundaries: Sequence[int], n: int) -> list[int]:
    ends = set(boundaries)
    if not ends or max(ends) != n - 1 or min(ends) < 0:
        raise ValueError(f"boundary set must lie in [0, {n}) and include {n - 1}")
    ids, seg = [], 0
    for i in range(n):
        ids.append(seg)
        if i in ends:
            seg += 1
    return ids


def default_pk_window(reference: Sequence[int], n: int) -> int:
    mean_len = n / len(set(reference))
    return max(2, round(mean_len / 2))


def pk_score(reference, hypothesis, n_sentences: int, window: int | None = None) -> float:
    """Fraction of windows where reference and hypothesis disagree on whether
    sentences ``i`` and ``i + window - 1`` share a segment."""
    ref = reference.boundaries if isinstance(reference, SegmentationReference) else reference
    hyp = hypothesis.boundaries if isinstance(hypothesis, SegmentationReference) else hypothesis
    n = n_sentences
    if n < 2:
        raise ValueError("Pk needs at least two sentences")
    ref_ids = _segment_ids(ref, n)
    hyp_ids = _segment_ids(hyp, n)
    if window is None:
        window = default_pk_window(ref, n)
    window = min(window, n)
    positions = n - window + 1
    errors = 0
    for i in range(positions):
        j = i + window - 1
        if (ref_ids[i] == ref_ids[j]) != (hyp_ids[i] == hyp_ids[j]):
            errors += 1
    return errors / positions


# ---------------------------------------------------------------------------
# answer text

def _tokens(text: str) -> list[str]:
    return text.lower().split()


def normalize_answer(text: str) -> list[str]:
    """Lowercase, drop punctuation and English articles, split on whitespace."""
    text = text.lower().translate(_PUNCT)
    return _ARTICLES.sub(" ", text).split()


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> float:
    c, r = _tokens(candidate), _tokens(reference)
    lcs = lcs_length(c, r)
    if lcs == 0:
        return 0.0
    p, rec = lcs / len(c), lcs / len(r)
    return 2 * p * rec / (p + rec)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_n(candidate: str, references: Sequence[str] | str, max_n: int = 4) -> float:
    """Sentence BLEU with uniform weights up to ``max_n``.

    Zero n-gram precisions are floored at ``1 / (2 * len(candidate))``.
    Brevity penalty uses the reference length closest to the candidate's.
    """
    if not 1 <= max_n <= 4:
        raise ValueError("max_n must be in 1..4")
    if isinstance(references, str):
        references = [references]
    cand = _tokens(candidate)
    if not cand:
        return 0.0
    refs = [_tokens(r) for r in references]
    floor = 1.0 / (2 * len(cand))
    log_sum = 0.0
    for n in range(1, max_n + 1):
        c_counts = _ngrams(cand, n)
        total = sum(c_counts.values())
        max_ref: Counter = Counter()
        for r in refs:
            max_ref |= _ngrams(r, n)
        clipped = sum(min(v, max_ref[g]) for g, v in c_counts.items())
        p = clipped / total if total else 0.0
        log_sum += math.log(p if p > 0 else floor)
    ref_len = min((len(r) for r in refs), key=lambda L: (abs(L - len(cand)), L)) if refs else 0
    bp = 1.0 if len(cand) >= ref_len else math.exp(1 - ref_len / len(cand))
    return bp * math.exp(log_sum / max_n)


def token_f1(candidate: str, gold_answers: Sequence[str] | str) -> float:
    if isinstance(gold_answers, str):
        gold_answers = [gold_answers]
    if not gold_answers:
        raise ValueError("token_f1 needs at least one gold answer")
    cand = normalize_answer(candidate)
    best = 0.0
    for gold in gold_answers:
        g = normalize_answer(gold)
        if not cand or not g:
            best = max(best, float(cand == g))
            continue
        overlap = sum((Counter(cand) & Counter(g)).values())
        if overlap == 0:
            continue
        p, r = overlap / len(cand), overlap / len(g)
        best = max(best, 2 * p * r / (p + r))
    return best


def accuracy(predicted: Sequence[int], gold: Sequence[int]) -> float:
    if len(predicted) != len(gold):
        raise ValueError(f"length mismatch: {len(predicted)} predictions, {len(gold)} gold")
    if not gold:
        raise ValueError("accuracy over an empty list")
    return sum(p == g for p, g in zip(predicted, gold)) / len(gold)


_CHOICE_LETTER = re.compile(r"\b([A-H])\b")
_CHOICE_NUMBER = re.compile(r"\b(\d+)\b")


def parse_choice(answer: str, n_choices: int, one_based: bool = True) -> int | None:
    """Read a choice index from free reader output ("3", "C)", "Answer: 2")."""
    m = _CHOICE_NUMBER.search(answer)
    if m:
        idx = int(m.group(1)) - (1 if one_based else 0)
        if 0 <= idx < n_choices:
            return idx
    m = _CHOICE_LETTER.search(answer)
    if m:
        idx = ord(m.group(1)) - ord("A")
        if idx < n_choices:
            return idx
    return None


def gold_token_hit_rate(retrieved_text: str, gold_answers: Sequence[str]) -> float:
    """Best fraction of a gold answer's normalized tokens found in the retrieved text."""
    have = set(normalize_answer(retrieved_text))
    best = 0.0
    for g in gold_answers:
        toks = normalize_answer(g)
        if toks:
            best = max(best, sum(t in have for t in toks) / len(toks))
    return best


def write_report(report: dict, path: str | Path | None = None) -> str:
    text = json.dumps(report, indent=2, sort_keys=True)
    if path is not None:
        Path(path).write_text(text + "\n", encoding="utf-8")
    return text
