"""Toy SAM-style mask decoder: two-way attention, ×4 upsampler, hypernetwork head."""
from __future__ import annotations

import math

import numpy as np

from . import numcore as nc
from .layers import attention, init_attention, init_mlp, linear, mlp, norm
from .numcore import Value
from .params import ParamStore, init_linear, init_norm
from .prompting import PromptBundle


def upsample_channels(dim: int) -> tuple[int, int]:
    return max(dim // 2, 1), max(dim // 4, 1)


def init_decoder(store: ParamStore, prefix: str, dim: int, rng, layers: int = 2, mlp_dim: int | None = None):
    mlp_dim = mlp_dim or 2 * dim
    store.add(f"{prefix}.mask_token", rng.normal(0.0, 1.0, size=(dim,)), True)
    for i in range(layers):
        lp = f"{prefix}.layers.{i}"
        init_attention(store, f"{lp}.self_attn", dim, rng, True)
        init_norm(store, f"{lp}.norm1", dim, True)
        init_attention(store, f"{lp}.cross_t2i", dim, rng, True)
        init_norm(store, f"{lp}.norm2", dim, True)
        init_mlp(store, f"{lp}.mlp", (dim, mlp_dim, dim), rng, True)
        init_norm(store, f"{lp}.norm3", dim, True)
        init_attention(store, f"{lp}.cross_i2t", dim, rng, True)
        init_norm(store, f"{lp}.norm4", dim, True)
    c1, c2 = upsample_channels(dim)
    init_linear(store, f"{prefix}.up1", dim, 4 * c1, rng, True, bias=False)
    store.add(f"{prefix}.up1.bias", np.zeros(c1), True)
    init_norm(store, f"{prefix}.up_norm", c1, True)
    init_linear(store, f"{prefix}.up2", c1, 4 * c2, rng, True, bias=False, gain=math.sqrt(2.0))
    store.add(f"{prefix}.up2.bias", np.zeros(c2), True)
    init_mlp(store, f"{prefix}.hyper", (dim, dim, dim, c2), rng, True)


def copy_decoder(store: ParamStore, src: str, dst: str):
    """Register ``dst`` as an independent copy of decoder ``src`` (same init, separate weights)."""
    for name in list(store.names()):
        if name.startswith(src + "."):
            v = store[name]
            store.add(dst + name[len(src):], v.data.copy(), v.requires_grad)


def two_way_attention_layer(tokens: Value, image: Value, p, heads: int,
                            query_pe: Value, key_pe: Value) -> tuple[Value, Value]:
    """Token self-attention, token→image, MLP, image→token; each residual + norm."""
    if tokens.shape[-1] != image.shape[-1]:
        raise nc.ShapeError(f"token dim {tokens.shape[-1]} differs from image dim {image.shape[-1]}")
    q = tokens + query_pe
    tokens = norm(tokens + attention(q, q, tokens, p, "self_attn", heads), p, "norm1")
    q = tokens + query_pe
    k = image + key_pe
    tokens = norm(tokens + attention(q, k, image, p, "cross_t2i", heads), p, "norm2")
    tokens = norm(tokens + mlp(tokens, p, "mlp", 2), p, "norm3")
    q = tokens + query_pe
    image = norm(image + attention(k, q, tokens, p, "cross_i2t", heads), p, "norm4")
    return tokens, image


def _upsample2(x: Value, grid: int, w: Value, b: Value) -> Value:
    """Transposed 2×2 stride-2 convolution on (grid²)×C tokens → (2grid)²×C'."""
    c_out = b.shape[0]
    y = (x @ w).reshape(grid, grid, 2, 2, c_out) + b
    return y.transpose(0, 2, 1, 3, 4).reshape(4 * grid * grid, c_out)


def decode_mask(image_embed: Value, bundle: PromptBundle, p, out_size: tuple[int, int],
                image_pe: np.ndarray, heads: int, layers: int = 2, return_logits: bool = False) -> Value:
    """Single-mask decoder; returns a 1×H×W probability map."""
    n, dim = image_embed.shape
    grid = math.isqrt(n)
    if grid * grid != n:
        raise nc.ShapeError(f"image embedding has non-square token count {n}")
    if bundle.dense.shape != (dim, grid, grid):
        raise nc.ShapeError(f"dense prompt {bundle.dense.shape} does not match grid {(dim, grid, grid)}")
    tokens = nc.concat([p["mask_token"].reshape(1, dim), bundle.sparse], axis=0)
    query_pe = tokens
    key_pe = Value(image_pe)
    image = image_embed + bundle.dense.reshape(dim, n).T
    for i in range(layers):
        tokens, image = two_way_attention_layer(tokens, image, p.view(f"layers.{i}"), heads, query_pe, key_pe)
    up = _upsample2(image, grid, p["up1.weight"], p["up1.bias"])
    up = nc.relu(norm(up, p, "up_norm"))
    up = nc.relu(_upsample2(up, 2 * grid, p["up2.weight"], p["up2.bias"]))
    filt = mlp(tokens[0:1], p, "hyper", 3)
    logits = (up @ filt.T).reshape(1, 4 * grid, 4 * grid)
    logits = nc.bilinear_resize(logits, out_size[0], out_size[1])
    return logits if return_logits else nc.sigmoid(logits)
