"""Toy ViT image encoder with dual-stream frequency-separating adapters.

The backbone (patch projection, attention, Norm2, MLP) is frozen.  Norm1 is
trainable and shared by both streams; each block carries one adapter per
stream that runs in parallel with the frozen MLP branch and contributes an
additive delta.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .layers import grid_to_tokens, linear, mlp, norm, self_attention_qkv, sinusoidal_grid_encoding, tokens_to_grid
from .numcore import Value
from .params import ParamStore, init_linear, init_norm
from .wavelet import WaveletKind, dwt2_single_level, highfreq_magnitude

STREAMS = ("rgb", "depth")
ADAPTER_FORMS = ("dual", "lora", "rgb_only", "none")


@dataclass
class EncoderConfig:
    image_size: int = 64
    patch_size: int = 8
    embed_dim: int = 32
    heads: int = 4
    depth: int = 4
    adapter_bottleneck: int = 8
    wavelet: str = "db2"
    adapter_form: str = "dual"
    use_dwt: bool = True
    mlp_ratio: int = 4

    def __post_init__(self):
        if self.image_size % self.patch_size:
            raise ValueError(f"image_size {self.image_size} is not divisible by patch_size {self.patch_size}")
        if self.embed_dim % self.heads:
            raise ValueError(f"embed_dim {self.embed_dim} is not divisible by heads {self.heads}")
        if not 0 < self.adapter_bottleneck < self.embed_dim:
            raise ValueError("adapter_bottleneck must satisfy 0 < d < embed_dim")
        if self.adapter_form not in ADAPTER_FORMS:
            raise ValueError(f"adapter_form must be one of {ADAPTER_FORMS}")
        WaveletKind.from_name(self.wavelet)

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def tokens(self) -> int:
        return self.grid * self.grid

    @property
    def kind(self) -> WaveletKind:
        return WaveletKind.from_name(self.wavelet)

    def adapter_streams(self) -> tuple[str, ...]:
        if self.adapter_form in ("dual", "lora"):
            return STREAMS
        if self.adapter_form == "rgb_only":
            return ("rgb",)
        return ()


# ----------------------------------------------------------------------
# initialization
# ----------------------------------------------------------------------
def init_adapter(store: ParamStore, prefix: str, dim: int, bottleneck: int, rng, use_dwt: bool = True):
    init_linear(store, f"{prefix}.down", dim, bottleneck, rng, trainable=True)
    init_linear(store, f"{prefix}.up", bottleneck, dim, rng, trainable=True, zero=True)
    if use_dwt:
        init_linear(store, f"{prefix}.hf", bottleneck, bottleneck, rng, trainable=True, bias=False)


def init_encoder(store: ParamStore, cfg: EncoderConfig, backbone_rng, rng):
    D, p = cfg.embed_dim, cfg.patch_size
    init_linear(store, "encoder.patch", 3 * p * p, D, backbone_rng, trainable=False)
    hidden = cfg.mlp_ratio * D
    for i in range(cfg.depth):
        b = f"encoder.blocks.{i}"
        init_norm(store, f"{b}.norm1", D, trainable=True)
        init_linear(store, f"{b}.attn.qkv", D, 3 * D, backbone_rng, trainable=False)
        init_linear(store, f"{b}.attn.proj", D, D, backbone_rng, trainable=False, gain=0.5)
        init_norm(store, f"{b}.norm2", D, trainable=False)
        init_linear(store, f"{b}.mlp.fc0", D, hidden, backbone_rng, trainable=False, gain=math.sqrt(2.0))
        init_linear(store, f"{b}.mlp.fc1", hidden, D, backbone_rng, trainable=False, gain=0.5)
        for s in cfg.adapter_streams():
            if cfg.adapter_form == "lora":
                r = cfg.adapter_bottleneck
                store.add(f"{b}.lora_{s}.a", rng.normal(0.0, 1.0 / math.sqrt(D), size=(D, r)), True)
                store.add(f"{b}.lora_{s}.b", np.zeros((r, 3 * D)), True)
            else:
                init_adapter(store, f"{b}.adapter_{s}", D, cfg.adapter_bottleneck, rng, cfg.use_dwt)


# ----------------------------------------------------------------------
# forward
# ----------------------------------------------------------------------
def patch_embed(image: Value, p, cfg: EncoderConfig) -> Value:
    """3×H×W image → N×D tokens (linear patch projection + fixed position code)."""
    image = image if isinstance(image, Value) else Value(image)
    C, H, W = image.shape
    ps = cfg.patch_size
    if C != 3:
        raise nc.ShapeError(f"patch_embed expects 3 channels, got {C}")
    if H % ps or W % ps:
        raise nc.ShapeError(f"image size {H}×{W} is not divisible by patch size {ps}")
    gh, gw = H // ps, W // ps
    patches = image.reshape(C, gh, ps, gw, ps).transpose(1, 3, 0, 2, 4).reshape(gh * gw, C * ps * ps)
    tokens = linear(patches, p, "encoder.patch")
    if gh != gw:
        raise nc.ShapeError("patch_embed requires a square token grid")
    return tokens + Value(sinusoidal_grid_encoding(gh, cfg.embed_dim))


def adapter_delta(x: Value, ap, kind: WaveletKind, use_dwt: bool = True) -> Value:
    """L_up(relu(L_down(x) + upsampled high-frequency map))."""
    n, _ = x.shape
    g = math.isqrt(n)
    if g * g != n:
        raise nc.ShapeError(f"adapter needs a square token count, got {n}")
    h = linear(x, ap, "down")
    pre = h
    if use_dwt:
        hf = highfreq_magnitude(dwt2_single_level(tokens_to_grid(h), kind))
        hf = tokens_to_grid(grid_to_tokens(hf) @ ap["hf.weight"])
        hf = nc.bilinear_resize(hf, g, g)
        pre = h + grid_to_tokens(hf)
    return linear(nc.relu(pre), ap, "up")


def adapter_forward(x: Value, ap, kind: WaveletKind, use_dwt: bool = True) -> Value:
    return x + adapter_delta(x, ap, kind, use_dwt)


def encoder_block_forward(x: Value, bp, stream: str, cfg: EncoderConfig) -> Value:
    if stream not in STREAMS:
        raise ValueError(f"unknown stream {stream!r}")
    qkv_delta = None
    if cfg.adapter_form == "lora" and f"lora_{stream}.a" in bp:
        qkv_delta = bp[f"lora_{stream}.a"] @ bp[f"lora_{stream}.b"]
    a = x + self_attention_qkv(norm(x, bp, "norm1"), bp, "attn", cfg.heads, qkv_delta=qkv_delta)
    y = a + mlp(norm(a, bp, "norm2"), bp, "mlp", 2)
    if cfg.adapter_form in ("dual", "rgb_only") and f"adapter_{stream}.up.weight" in bp:
        y = y + adapter_delta(a, bp.view(f"adapter_{stream}"), cfg.kind, cfg.use_dwt)
    return y


def encode_stream(image: Value, store: ParamStore, cfg: EncoderConfig, stream: str) -> Value:
    x = patch_embed(image, store, cfg)
    for i in range(cfg.depth):
        x = encoder_block_forward(x, store.view(f"encoder.blocks.{i}"), stream, cfg)
    return x


def as_three_channel(image) -> Value:
    """Replicate a 1-channel depth map to 3 channels."""
    image = image if isinstance(image, Value) else Value(image)
    if image.shape[0] == 3:
        return image
    if image.shape[0] != 1:
        raise nc.ShapeError(f"expected 1 or 3 channels, got {image.shape[0]}")
    return nc.concat([image, image, image], axis=0)


def encode_dual_stream(rgb, depth, store: ParamStore, cfg: EncoderConfig):
    """Run both streams through the shared frozen backbone.

    Returns ``(rgb_embedding, depth_embedding)``; the depth entry is None when
    the configuration disables the depth stream.
    """
    rgb = rgb if isinstance(rgb, Value) else Value(rgb)
    x_rgb = encode_stream(rgb, store, cfg, "rgb")
    if cfg.adapter_form == "rgb_only" or depth is None:
        return x_rgb, None
    depth = as_three_channel(depth)
    if depth.shape != rgb.shape:
        raise nc.ShapeError(f"rgb {rgb.shape} and depth {depth.shape} differ in size")
    return x_rgb, encode_stream(depth, store, cfg, "depth")
