"""Small building blocks shared by the encoder and the decoder."""
from __future__ import annotations

import math

import numpy as np

from . import numcore as nc
from .numcore import Value


def linear(x: Value, p, name: str, extra_weight: Value | None = None) -> Value:
    w = p[f"{name}.weight"]
    if extra_weight is not None:
        w = w + extra_weight
    out = x @ w
    if f"{name}.bias" in p:
        out = out + p[f"{name}.bias"]
    return out


def norm(x: Value, p, name: str) -> Value:
    return nc.layer_norm(x, p[f"{name}.gain"], p[f"{name}.bias"])


def _split_heads(x: Value, heads: int) -> Value:
    n, dim = x.shape
    return x.reshape(n, heads, dim // heads).transpose(1, 0, 2)


def attention(q: Value, k: Value, v: Value, p, name: str, heads: int) -> Value:
    """Multi-head scaled dot-product attention with separate q/k/v/out projections."""
    q = _split_heads(linear(q, p, f"{name}.q"), heads)
    k = _split_heads(linear(k, p, f"{name}.k"), heads)
    v = _split_heads(linear(v, p, f"{name}.v"), heads)
    dh = q.shape[-1]
    weights = nc.softmax(nc.scale(q @ k.transpose(0, 2, 1), 1.0 / math.sqrt(dh)), axis=-1)
    out = (weights @ v).transpose(1, 0, 2)
    out = out.reshape(out.shape[0], heads * dh)
    return linear(out, p, f"{name}.out")


def self_attention_qkv(x: Value, p, name: str, heads: int, qkv_delta: Value | None = None) -> Value:
    """Fused-projection self-attention as used inside ViT blocks."""
    n, dim = x.shape
    qkv = linear(x, p, f"{name}.qkv", extra_weight=qkv_delta)
    qkv = qkv.reshape(n, 3, heads, dim // heads).transpose(1, 2, 0, 3)
    q, k, v = qkv[0], qkv[1], qkv[2]
    weights = nc.softmax(nc.scale(q @ k.transpose(0, 2, 1), 1.0 / math.sqrt(dim // heads)), axis=-1)
    out = (weights @ v).transpose(1, 0, 2).reshape(n, dim)
    return linear(out, p, f"{name}.proj")


def mlp(x: Value, p, name: str, layers: int) -> Value:
    for i in range(layers):
        x = linear(x, p, f"{name}.fc{i}")
        if i < layers - 1:
            x = nc.relu(x)
    return x


def init_attention(store, name, dim, rng, trainable, zero_out=False):
    from .params import init_linear

    for part in ("q", "k", "v"):
        init_linear(store, f"{name}.{part}", dim, dim, rng, trainable)
    init_linear(store, f"{name}.out", dim, dim, rng, trainable, zero=zero_out)


def init_mlp(store, name, dims, rng, trainable):
    from .params import init_linear

    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        init_linear(store, f"{name}.fc{i}", a, b, rng, trainable, gain=math.sqrt(2.0) if i < len(dims) - 2 else 1.0)


def sinusoidal_grid_encoding(grid: int, dim: int) -> np.ndarray:
    """Fixed 2-D sine/cosine position code, (grid²) × dim, row-major tokens."""
    if dim % 4:
        raise ValueError(f"embedding dim {dim} must be divisible by 4")
    quarter = dim // 4
    freqs = 1.0 / (10000.0 ** (np.arange(quarter) / quarter))
    ys, xs = np.meshgrid(np.arange(grid), np.arange(grid), indexing="ij")
    ys, xs = ys.reshape(-1, 1) * freqs, xs.reshape(-1, 1) * freqs
    return np.concatenate([np.sin(ys), np.cos(ys), np.sin(xs), np.cos(xs)], axis=1).astype(np.float32)


def fourier_encoding(coords: np.ndarray, gaussian: np.ndarray) -> np.ndarray:
    """Random-Fourier code of normalized (x, y) coordinates in [0, 1]."""
    proj = (2.0 * np.asarray(coords, dtype=np.float64) - 1.0) @ gaussian.astype(np.float64)
    proj = 2.0 * math.pi * proj
    return np.concatenate([np.sin(proj), np.cos(proj)], axis=-1)


def tokens_to_grid(x: Value) -> Value:
    """N×D tokens → D×g×g map."""
    n, d = x.shape
    g = math.isqrt(n)
    if g * g != n:
        raise nc.ShapeError(f"token count {n} is not a perfect square")
    return x.T.reshape(d, g, g)


def grid_to_tokens(x: Value) -> Value:
    d, h, w = x.shape
    return x.reshape(d, h * w).T
