"""SMCD checkpoint format.

Layout (all integers little-endian u32 unless noted)::

    b"SMCD" | version | entry count
    per entry: name length | UTF-8 name | dtype tag (u8, 1 = float32) | rank | dims... | payload
    CRC-32 of every preceding byte

Entries are written in sorted name order so equal parameter sets give equal bytes.
"""
from __future__ import annotations

import os
import struct
import zlib

import numpy as np

MAGIC = b"SMCD"
VERSION = 1
DTYPE_F32 = 1


class CheckpointError(ValueError):
    pass


def encode(arrays: dict[str, np.ndarray]) -> bytes:
    out = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name in sorted(arrays):
        a = np.array(arrays[name], dtype="<f4", order="C")  # keeps 0-d arrays 0-d
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)))
        out.append(raw)
        out.append(struct.pack("<BI", DTYPE_F32, a.ndim))
        out.append(struct.pack(f"<{a.ndim}I", *a.shape))
        out.append(a.tobytes())
    body = b"".join(out)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError("truncated checkpoint")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode(buf: bytes) -> dict[str, np.ndarray]:
    if len(buf) < 16 or buf[:4] != MAGIC:
        raise CheckpointError(f"bad magic {buf[:4]!r}; not an SMCD checkpoint")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("CRC mismatch; checkpoint is corrupt")
    r = _Reader(body)
    r.take(4)
    version, count = r.unpack("<II")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    arrays = {}
    for _ in range(count):
        (n,) = r.unpack("<I")
        name = r.take(n).decode("utf-8")
        tag, rank = r.unpack("<BI")
        if tag != DTYPE_F32:
            raise CheckpointError(f"{name}: unknown dtype tag {tag}")
        shape = r.unpack(f"<{rank}I") if rank else ()
        size = int(np.prod(shape, dtype=np.int64))
        arrays[name] = np.frombuffer(r.take(4 * size), dtype="<f4").astype(np.float32).reshape(shape)
    if r.pos != len(body):
        raise CheckpointError("trailing bytes after last entry")
    return arrays


def save(path, arrays: dict[str, np.ndarray]):
    data = encode(arrays)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def load(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return decode(fh.read())


def checkpoint_io(mode: str, path, store=None):
    """``save`` writes ``store``; ``load`` fills ``store`` (if given) and returns the arrays."""
    if mode == "save":
        save(path, store.arrays())
        return None
    if mode == "load":
        arrays = load(path)
        if store is not None:
            store.load_arrays(arrays)
        return arrays
    raise ValueError(f"unknown mode {mode!r}")
