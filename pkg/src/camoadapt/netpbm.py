"""Binary netpbm (P5 grayscale / P6 RGB, maxval 255) reading and writing."""
from __future__ import annotations

import os

import numpy as np


class NetpbmError(ValueError):
    pass


def _tokens(buf: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping # comments.

    Returns the tokens and the offset of the first raster byte.
    """
    out = []
    i, n = 0, len(buf)
    while len(out) < count:
        while i < n and buf[i:i + 1].isspace():
            i += 1
        if i < n and buf[i:i + 1] == b"#":
            while i < n and buf[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not buf[i:i + 1].isspace() and buf[i:i + 1] != b"#":
            i += 1
        if start == i:
            raise NetpbmError("malformed netpbm header: unexpected end of data")
        out.append(buf[start:i])
    if i >= n or not buf[i:i + 1].isspace():
        raise NetpbmError("malformed netpbm header: missing whitespace before raster")
    return out, i + 1


def decode(buf: bytes, kind: str | None = None) -> np.ndarray:
    """Parse P5/P6 bytes into uint8 H×W or H×W×3."""
    if len(buf) < 2 or buf[:2] not in (b"P5", b"P6"):
        raise NetpbmError(f"unsupported or missing magic {buf[:2]!r}; expected P5 or P6")
    magic = buf[:2].decode()
    if kind is not None and kind != magic:
        raise NetpbmError(f"expected {kind} image, found {magic}")
    (w_tok, h_tok, max_tok), offset = _tokens(buf[2:], 3)
    offset += 2
    try:
        width, height, maxval = int(w_tok), int(h_tok), int(max_tok)
    except ValueError:
        raise NetpbmError("malformed netpbm header: non-integer field") from None
    if width <= 0 or height <= 0:
        raise NetpbmError(f"invalid image size {width}×{height}")
    if maxval != 255:
        raise NetpbmError(f"unsupported maxval {maxval}; only 255 is supported")
    channels = 3 if magic == "P6" else 1
    expected = width * height * channels
    raster = buf[offset:offset + expected]
    if len(raster) < expected:
        raise NetpbmError(f"truncated raster: expected {expected} bytes, found {len(raster)}")
    arr = np.frombuffer(raster, dtype=np.uint8).copy()
    return arr.reshape(height, width, 3) if channels == 3 else arr.reshape(height, width)


def encode(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise NetpbmError(f"netpbm writer needs uint8 data, got {img.dtype}")
    if img.ndim == 2:
        magic = "P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = "P6"
    else:
        raise NetpbmError(f"cannot encode array of shape {img.shape}")
    h, w = img.shape[:2]
    return f"{magic}\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img).tobytes()


def read(path, kind: str | None = None) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode(fh.read(), kind)


def write(path, img: np.ndarray):
    data = encode(img)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def io_netpbm(path, mode: str, kind: str, image: np.ndarray | None = None):
    """Single entry point: ``mode`` is 'read' or 'write', ``kind`` 'P5' or 'P6'."""
    if kind not in ("P5", "P6"):
        raise NetpbmError(f"unknown netpbm kind {kind!r}")
    if mode == "read":
        return read(path, kind)
    if mode == "write":
        if image is None:
            raise NetpbmError("write mode needs an image")
        expected_ndim = 2 if kind == "P5" else 3
        if np.asarray(image).ndim != expected_ndim:
            raise NetpbmError(f"{kind} expects a {expected_ndim}-D array, got shape {np.shape(image)}")
        write(path, image)
        return None
    raise NetpbmError(f"unknown mode {mode!r}")


def to_bytes(x: np.ndarray) -> np.ndarray:
    """Map [0, 1] floats to uint8 with rounding."""
    return np.clip(np.floor(np.asarray(x, dtype=np.float64) * 255.0 + 0.5), 0, 255).astype(np.uint8)


def binarize(img: np.ndarray) -> np.ndarray:
    return np.asarray(img) >= 128
