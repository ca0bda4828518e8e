"""HVEC dense-vector file format.

Layout (little-endian): ``b"HVEC"``, u32 version, u32 dim, u64 rows,
``rows * dim`` float32 values, then u32 CRC32 of the float payload.
"""

from __future__ import annotations

import os
import struct
import tempfile
import zlib
from pathlib import Path

import numpy as np

from .errors import ChecksumError, IndexFormatError, UnsupportedIndexVersionError

MAGIC = b"HVEC"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ")


def encode(matrix: np.ndarray) -> bytes:
    m = np.ascontiguousarray(matrix, dtype="<f4")
    if m.ndim != 2:
        raise ValueError("HVEC stores a 2-d matrix")
    payload = m.tobytes()
    return (
        _HEADER.pack(MAGIC, VERSION, m.shape[1], m.shape[0])
        + payload
        + struct.pack("<I", zlib.crc32(payload))
    )


def decode(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise ChecksumError("HVEC header truncated")
    magic, version, dim, rows = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise IndexFormatError(f"bad HVEC magic {magic!r}")
    if version != VERSION:
        raise UnsupportedIndexVersionError(f"HVEC version {version} not supported")
    n = rows * dim * 4
    if len(data) != _HEADER.size + n + 4:
        raise ChecksumError(
            f"HVEC length mismatch: expected {_HEADER.size + n + 4} bytes, got {len(data)}"
        )
    payload = data[_HEADER.size:_HEADER.size + n]
    (crc,) = struct.unpack_from("<I", data, _HEADER.size + n)
    if zlib.crc32(payload) != crc:
        raise ChecksumError("HVEC CRC32 mismatch")
    return np.frombuffer(payload, dtype="<f4").reshape(rows, dim).astype(np.float32)


def payload_crc(matrix: np.ndarray) -> int:
    return zlib.crc32(np.ascontiguousarray(matrix, dtype="<f4").tobytes())


def write(path: str | Path, matrix: np.ndarray) -> None:
    """Atomic write: readers never observe a partial file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(encode(matrix))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read(path: str | Path) -> np.ndarray:
    return decode(Path(path).read_bytes())
