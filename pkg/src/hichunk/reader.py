"""Chat-completion reader that answers a question from retrieved chunks."""

from __future__ import annotations

import os
import time
from dataclasses import dataclass
from typing import Sequence

import httpx

from .document import count_tokens
from .errors import ConfigError, ReaderError

MAX_RETRIES = 3

DEFAULT_TEMPLATE = (
    "Answer the question using only the context below.\n\n"
    "Context:\n{context}\n\n"
    "Question: {question}\n"
    "Answer:"
)


@dataclass(frozen=True)
class ReaderConfig:
    endpoint_url: str
    model_name: str = ""
    api_key_env_var: str | None = None
    max_context_tokens: int = 4096
    temperature: float = 0.0
    prompt_template: str = DEFAULT_TEMPLATE
    timeout: float = 120.0
    backoff: float = 1.0
    max_in_flight: int = 4

    def __post_init__(self):
        for slot in ("{context}", "{question}"):
            if self.prompt_template.count(slot) != 1:
                raise ConfigError(f"prompt_template must contain {slot} exactly once")
        if self.max_context_tokens < 1:
            raise ConfigError("max_context_tokens must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ReaderConfig":
        return cls(**d)


def _fill(template: str, context: str, question: str) -> str:
    # plain replace: chunk text may contain braces
    return template.replace("{question}", question).replace("{context}", context)


def build_prompt(question: str, chunks: Sequence[str], cfg: ReaderConfig) -> str:
    """Fill the template with as many leading chunks as fit the token budget.

    Chunks are kept whole and in rank order; the tail is dropped.
    """
    if not chunks:
        raise ValueError("build_prompt needs at least one chunk")
    base = count_tokens(_fill(cfg.prompt_template, "", question))
    if base > cfg.max_context_tokens:
        raise ValueError(
            f"question and template alone take {base} tokens, budget is {cfg.max_context_tokens}"
        )
    used = base
    kept: list[str] = []
    for c in chunks:
        n = count_tokens(c)
        if used + n > cfg.max_context_tokens:
            break
        kept.append(c)
        used += n
    return _fill(cfg.prompt_template, "\n\n".join(kept), question)


def complete(prompt: str, cfg: ReaderConfig, client: httpx.Client | None = None) -> str:
    headers = {}
    if cfg.api_key_env_var:
        key = os.environ.get(cfg.api_key_env_var)
        if key:
            headers["Authorization"] = f"Bearer {key}"
    body = {
        "model": cfg.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": cfg.temperature,
    }
    own = client is None
    client = client or httpx.Client(timeout=cfg.timeout)
    try:
        delay = cfg.backoff
        last = None
        for attempt in range(MAX_RETRIES + 1):
            if attempt:
                time.sleep(delay)
                delay *= 2
            try:
                r = client.post(cfg.endpoint_url, json=body, headers=headers)
            except httpx.TransportError as e:
                last = e
                continue
            if r.status_code == 429 or r.status_code >= 500:
                last = f"HTTP {r.status_code}"
                continue
            if r.status_code >= 400:
                raise ReaderError(f"HTTP {r.status_code}: {r.text[:200]}")
            try:
                return r.json()["choices"][0]["message"]["content"].strip()
            except (KeyError, IndexError, TypeError, ValueError) as e:
                raise ReaderError(f"malformed completion response: {e}") from None
        raise ReaderError(f"reader failed after {MAX_RETRIES} retries: {last}")
    finally:
        if own:
            client.close()


def answer(question: str, chunks: Sequence[str], cfg: ReaderConfig,
           client: httpx.Client | None = None) -> str:
    return complete(build_prompt(question, chunks, cfg), cfg, client)
