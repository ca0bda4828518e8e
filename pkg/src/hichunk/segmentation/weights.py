"""HSEG weight files and word-vector tables for the boundary model."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from ..errors import (
    MagicMismatchError,
    MissingTensorError,
    NonFiniteTensorError,
    TensorShapeError,
    TruncatedWeightsError,
    UnsupportedWeightsVersionError,
)

WORD_DIM = 300
HIDDEN = 256
MAGIC = b"HSEG"
VERSION = 1


def _lstm_shapes(prefix: str, input_size: int) -> Iterator[tuple[str, tuple[int, ...]]]:
    for layer, in_size in ((1, input_size), (2, 2 * HIDDEN)):
        for direction in ("fwd", "bwd"):
            base = f"{prefix}.l{layer}.{direction}"
            yield f"{base}.W_ih", (4 * HIDDEN, in_size)
            yield f"{base}.W_hh", (4 * HIDDEN, HIDDEN)
            yield f"{base}.b_ih", (4 * HIDDEN,)
            yield f"{base}.b_hh", (4 * HIDDEN,)


# name -> shape for every tensor the model needs; gate order i, f, g, o
REQUIRED_SHAPES: dict[str, tuple[int, ...]] = {
    **dict(_lstm_shapes("enc", WORD_DIM)),
    **dict(_lstm_shapes("cls", 2 * HIDDEN)),
    "cls.out.W": (1, 2 * HIDDEN),
    "cls.out.b": (1,),
}


@dataclass(frozen=True)
class SegModelWeights:
    tensors: dict[str, np.ndarray]

    def __post_init__(self):
        for name, shape in REQUIRED_SHAPES.items():
            if name not in self.tensors:
                raise MissingTensorError(name)
            t = self.tensors[name]
            if t.shape != shape:
                raise TensorShapeError(name, shape, t.shape)
            if not np.all(np.isfinite(t)):
                raise NonFiniteTensorError(name)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    @classmethod
    def zeros(cls) -> "SegModelWeights":
        return cls({n: np.zeros(s, dtype=np.float32) for n, s in REQUIRED_SHAPES.items()})

    @classmethod
    def random(cls, seed: int = 0, scale: float = 0.1) -> "SegModelWeights":
        """Uniform(-scale, scale) weights, handy for demos and forward-pass checks."""
        rng = np.random.default_rng(seed)
        return cls({
            n: rng.uniform(-scale, scale, size=s).astype(np.float32)
            for n, s in REQUIRED_SHAPES.items()
        })


def dump_weights(weights: SegModelWeights | dict[str, np.ndarray]) -> bytes:
    tensors = weights.tensors if isinstance(weights, SegModelWeights) else weights
    out = [MAGIC, struct.pack("<HI", VERSION, len(tensors))]
    for name, t in tensors.items():
        t = np.ascontiguousarray(t, dtype="<f4")
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", t.ndim))
        out.append(struct.pack(f"<{t.ndim}I", *t.shape))
        out.append(t.tobytes())
    return b"".join(out)


def save_weights(path: str | Path, weights: SegModelWeights | dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(dump_weights(weights))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedWeightsError(f"file truncated while reading {what}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))


def parse_weights(data: bytes) -> SegModelWeights:
    r = _Reader(data)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise MagicMismatchError(f"expected magic {MAGIC!r}, got {magic!r}")
    version, count = r.unpack("<HI", "header")
    if version != VERSION:
        raise UnsupportedWeightsVersionError(f"HSEG version {version} not supported")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H", "tensor name length")
        name = r.take(name_len, "tensor name").decode("utf-8")
        (rank,) = r.unpack("<B", f"rank of {name!r}")
        dims = r.unpack(f"<{rank}I", f"dims of {name!r}")
        n = int(np.prod(dims, dtype=np.int64))
        raw = r.take(4 * n, f"data of {name!r}")
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float32)
    return SegModelWeights(tensors)


def load_weights(path: str | Path) -> SegModelWeights:
    return parse_weights(Path(path).read_bytes())


@dataclass
class WordVectorTable:
    entries: dict[str, np.ndarray] = field(default_factory=dict)
    oov_vector: np.ndarray = field(default_factory=lambda: np.zeros(WORD_DIM))
    dim: int = WORD_DIM

    def __post_init__(self):
        self.oov_vector = np.asarray(self.oov_vector, dtype=np.float64)
        if self.oov_vector.shape != (self.dim,):
            raise ValueError(f"oov_vector must have {self.dim} entries")
        for tok, v in self.entries.items():
            if len(v) != self.dim:
                raise ValueError(f"vector for {tok!r} has {len(v)} entries, expected {self.dim}")

    def lookup(self, token: str) -> np.ndarray:
        v = self.entries.get(token)
        if v is None:
            v = self.entries.get(token.lower())
        return self.oov_vector if v is None else v

    def matrix(self, tokens: list[str]) -> np.ndarray:
        return np.stack([np.asarray(self.lookup(t), dtype=np.float64) for t in tokens])

    @classmethod
    def load(cls, path: str | Path, dim: int = WORD_DIM) -> "WordVectorTable":
        """Text format, one ``token v1 ... v300`` line per word.

        A word2vec-style ``count dim`` header line is skipped.
        """
        entries: dict[str, np.ndarray] = {}
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                parts = line.rstrip("\n").split(" ")
                parts = [p for p in parts if p]
                if not parts:
                    continue
                if lineno == 1 and len(parts) == 2:
                    continue
                if len(parts) != dim + 1:
                    raise ValueError(f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
                entries[parts[0]] = np.array(parts[1:], dtype=np.float64)
        return cls(entries, dim=dim)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for tok, v in self.entries.items():
                f.write(tok + " " + " ".join(repr(float(x)) for x in v) + "\n")
