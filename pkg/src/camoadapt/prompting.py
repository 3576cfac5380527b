"""Box prompts: perturbation, sparse/dense encoding, and mixed dense prompts."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .layers import fourier_encoding, grid_to_tokens, tokens_to_grid
from .numcore import Value
from .params import ParamStore

PROMPT_MIX_MODES = ("full", "cat_only", "sum_only", "single", "off")


@dataclass(frozen=True)
class Box:
    """Pixel box, inclusive x0/y0 and exclusive x1/y1."""

    x0: int
    y0: int
    x1: int
    y1: int

    def is_valid(self, height: int, width: int) -> bool:
        return 0 <= self.x0 < self.x1 <= width and 0 <= self.y0 < self.y1 <= height

    def validate(self, height: int, width: int) -> "Box":
        if not self.is_valid(height, width):
            raise ValueError(f"{self} is not a valid box inside {height}×{width}")
        return self


@dataclass
class PromptBundle:
    sparse: Value  # 2×D, rows (top-left, bottom-right)
    dense: Value  # D×g×g


def perturb_box(box: Box, size: tuple[int, int], rng_seed, amplitude: float = 0.05) -> Box:
    """Jitter each coordinate by up to ±amplitude of the box extent.

    A degenerate result is retried with the noise halved, at most three times;
    after that the original box is returned.
    """
    H, W = size
    box.validate(H, W)
    rng = np.random.default_rng(rng_seed)
    amp = float(amplitude)
    w, h = box.x1 - box.x0, box.y1 - box.y0
    for _ in range(4):
        noise = rng.uniform(-1.0, 1.0, size=4) * amp * np.array([w, h, w, h], dtype=np.float64)
        x0, y0, x1, y1 = (int(np.floor(c + n + 0.5)) for c, n in zip((box.x0, box.y0, box.x1, box.y1), noise))
        cand = Box(min(max(x0, 0), W), min(max(y0, 0), H), min(max(x1, 0), W), min(max(y1, 0), H))
        if cand.is_valid(H, W):
            return cand
        amp /= 2.0
    return box


def init_prompt(store: ParamStore, dim: int, backbone_rng, rng):
    # fixed random-Fourier frequencies, scale 1
    store.add("prompt.gaussian", backbone_rng.normal(0.0, 1.0, size=(2, dim // 2)), False)
    store.add("prompt.corner", rng.normal(0.0, 0.02, size=(2, dim)), True)
    store.add("prompt.no_mask", rng.normal(0.0, 0.02, size=(dim,)), True)


def image_position_encoding(store: ParamStore, grid: int) -> np.ndarray:
    """Fourier code of token-cell centres, (grid²) × D."""
    centres = (np.arange(grid) + 0.5) / grid
    ys, xs = np.meshgrid(centres, centres, indexing="ij")
    coords = np.stack([xs.reshape(-1), ys.reshape(-1)], axis=1)
    return fourier_encoding(coords, store["prompt.gaussian"].data).astype(np.float32)


def encode_box_prompt(box: Box, store: ParamStore, image_size: tuple[int, int], grid: int) -> PromptBundle:
    H, W = image_size
    corners = np.array([[box.x0 / W, box.y0 / H], [box.x1 / W, box.y1 / H]])
    pe = fourier_encoding(corners, store["prompt.gaussian"].data).astype(np.float32)
    sparse = Value(pe) + store["prompt.corner"]
    dim = store["prompt.no_mask"].shape[0]
    dense = nc.broadcast_to(store["prompt.no_mask"].reshape(dim, 1, 1), (dim, grid, grid))
    return PromptBundle(sparse=sparse, dense=dense)


def hybrid_channels(mode: str, dim: int) -> int:
    return {"full": 2 * dim, "cat_only": 2 * dim, "sum_only": dim, "single": dim, "off": 0}[mode]


def init_mixer(store: ParamStore, dim: int, mode: str, rng):
    if mode == "off":
        return
    extra = hybrid_channels(mode, dim)
    delta = np.zeros((3, 3))
    delta[1, 1] = 1.0
    store.add("mixer.dw1", np.tile(delta, (dim, 1, 1)), True)
    store.add("mixer.dw2", np.tile(delta, (dim + extra, 1, 1)), True)
    pw = np.concatenate([np.eye(dim), rng.normal(0.0, 0.02, size=(extra, dim))], axis=0)
    store.add("mixer.pw.weight", pw, True)
    store.add("mixer.pw.bias", np.zeros(dim), True)


def build_hybrid(mode: str, x_expert: Value, x_rgb: Value, x_depth: Value | None) -> Value:
    """Channel-stacked image signal fed into the prompt mixer, as a D'×g×g map.

    For ``single`` pass the one stream embedding to mix as ``x_rgb``.
    """
    if x_depth is None:
        x_depth = Value(np.zeros(x_rgb.shape, dtype=x_rgb.dtype))
    if mode == "full":
        return nc.concat([tokens_to_grid(x_expert), tokens_to_grid(x_rgb + x_depth)], axis=0)
    if mode == "cat_only":
        return nc.concat([tokens_to_grid(x_rgb), tokens_to_grid(x_depth)], axis=0)
    if mode == "sum_only":
        return tokens_to_grid(x_rgb + x_depth)
    if mode == "single":
        return tokens_to_grid(x_rgb)
    raise ValueError(f"unknown prompt mix mode {mode!r}")


def mix_dense_prompt(bundle: PromptBundle, x_expert: Value, x_rgb: Value, x_depth: Value | None,
                     store: ParamStore, mode: str = "full") -> Value:
    """Updated dense prompt: pointwise(dwconv(cat[dwconv(dense), hybrid]))."""
    if mode not in PROMPT_MIX_MODES:
        raise ValueError(f"prompt_mix must be one of {PROMPT_MIX_MODES}")
    if mode == "off":
        return bundle.dense
    dim, gh, gw = bundle.dense.shape
    for name, x in (("expert", x_expert), ("rgb", x_rgb), ("depth", x_depth)):
        if x is not None and x.shape != (gh * gw, dim):
            raise nc.ShapeError(f"{name} embedding {x.shape} does not match the prompt grid {(gh * gw, dim)}")
    hybrid = build_hybrid(mode, x_expert, x_rgb, x_depth)
    dense = nc.depthwise_conv2d(bundle.dense, store["mixer.dw1"])
    mixed = nc.depthwise_conv2d(nc.concat([dense, hybrid], axis=0), store["mixer.dw2"])
    out = grid_to_tokens(mixed) @ store["mixer.pw.weight"] + store["mixer.pw.bias"]
    return tokens_to_grid(out)
