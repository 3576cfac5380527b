"""Single-level 2-D DWT and the high-frequency magnitude map.

Orientation convention: the first letter names the filter applied along the
width (rows), the second the filter applied along the height (columns).  So
``LH`` is low-pass horizontally and high-pass vertically; an image that is
constant along each row but varies from row to row puts all of its detail
energy into ``LH``.

Even-length axes use periodized filtering, which keeps the transform exactly
orthogonal.  Odd-length axes are first extended by one mirrored sample.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import numcore as nc
from .numcore import Value


@dataclass(frozen=True)
class WaveletKind:
    tag: str
    low: tuple

    @property
    def high(self) -> tuple:
        # quadrature mirror: g[n] = (-1)^n h[L-1-n]
        L = len(self.low)
        return tuple((-1) ** n * self.low[L - 1 - n] for n in range(L))

    @classmethod
    def from_name(cls, name: str) -> "WaveletKind":
        try:
            return {"haar": HAAR, "db2": DB2}[name]
        except KeyError:
            raise ValueError(f"unknown wavelet {name!r}; expected 'haar' or 'db2'") from None


_S3 = math.sqrt(3.0)
HAAR = WaveletKind("haar", (1 / math.sqrt(2), 1 / math.sqrt(2)))
DB2 = WaveletKind("db2", tuple(c / (4 * math.sqrt(2)) for c in (1 + _S3, 3 + _S3, 3 - _S3, 1 - _S3)))


@dataclass
class Subbands:
    LL: Value
    LH: Value
    HL: Value
    HH: Value

    @property
    def shape(self):
        return self.LL.shape


@lru_cache(maxsize=64)
def analysis_matrices(n: int, kind: WaveletKind) -> tuple[np.ndarray, np.ndarray]:
    """(low, high) analysis operators of shape ceil(n/2) × n."""
    L = len(kind.low)
    if n < L:
        raise ValueError(f"signal length {n} is shorter than the {kind.tag} filter ({L} taps)")
    m = n + (n % 2)
    ext = np.zeros((m, n))
    ext[:n, :n] = np.eye(n)
    if m > n:
        ext[n, n - 1] = 1.0
    half = m // 2
    lo = np.zeros((half, m))
    hi = np.zeros((half, m))
    for k in range(half):
        for j in range(L):
            lo[k, (2 * k + j) % m] += kind.low[j]
            hi[k, (2 * k + j) % m] += kind.high[j]
    return lo @ ext, hi @ ext


def dwt2_single_level(x: Value, kind: WaveletKind) -> Subbands:
    """Separable row-then-column analysis of a C×H×W map with stride 2."""
    x = x if isinstance(x, Value) else Value(x)
    if x.ndim != 3:
        raise nc.ShapeError(f"dwt2 expects C×H×W, got {x.shape}")
    _, H, W = x.shape
    lo_w, hi_w = analysis_matrices(W, kind)
    lo_h, hi_h = analysis_matrices(H, kind)
    dt = x.dtype
    row_lo = x @ Value(lo_w.T.astype(dt))
    row_hi = x @ Value(hi_w.T.astype(dt))
    lo_h_v, hi_h_v = Value(lo_h.astype(dt)), Value(hi_h.astype(dt))
    return Subbands(
        LL=lo_h_v @ row_lo,
        LH=hi_h_v @ row_lo,
        HL=lo_h_v @ row_hi,
        HH=hi_h_v @ row_hi,
    )


def highfreq_magnitude(s: Subbands, eps: float = 1e-12) -> Value:
    """Pointwise sqrt(LH² + HL² + HH² + eps)."""
    energy = s.LH * s.LH + s.HL * s.HL + s.HH * s.HH
    return nc.sqrt(energy + eps)
