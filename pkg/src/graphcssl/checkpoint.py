"""Binary parameter checkpoints.

Layout (little-endian)::

    b"GCSSLCKP"  u32 version  u32 count
    repeated:   u32 name_len  name(utf-8)  u32 ndim  u64*ndim shape  f64*prod(shape)
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import FormatError

MAGIC = b"GCSSLCKP"
VERSION = 1


def dumps(params: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name in sorted(params):
        arr = np.asarray(params[name], dtype="<f8", order="C")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


def loads(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:8] != MAGIC:
        raise FormatError("not a graphcssl checkpoint")
    if len(blob) < 16:
        raise FormatError("truncated checkpoint header")
    version, count = struct.unpack_from("<II", blob, 8)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    off = 16
    out = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<I", blob, off)
            off += 4
            name = blob[off:off + n].decode("utf-8")
            off += n
            (ndim,) = struct.unpack_from("<I", blob, off)
            off += 4
            shape = struct.unpack_from(f"<{ndim}Q", blob, off)
            off += 8 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            arr = np.frombuffer(blob, dtype="<f8", count=size, offset=off).reshape(shape)
            off += 8 * size
            out[name] = arr.astype(np.float64, copy=True)
    except (struct.error, ValueError) as exc:
        raise FormatError(f"truncated checkpoint: {exc}") from None
    if off != len(blob):
        raise FormatError("trailing bytes after checkpoint payload")
    return out


def save(path, params: Mapping[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(params))
    return path


def load(path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())


def digest(params: Mapping[str, np.ndarray]) -> str:
    """SHA-256 of the serialized parameters; equal iff bitwise equal."""
    return hashlib.sha256(dumps(params)).hexdigest()
