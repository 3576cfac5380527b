"""Expert-to-RGB and RGB-to-depth feature distillation.

The pretrained expert is replaced by a frozen strided convolution pyramid that
runs outside the tape, so no gradient can ever reach it.  A trainable
bias-calibration network maps its features into the encoder's embedding space.
"""
from __future__ import annotations

import math

import numpy as np

from . import numcore as nc
from .numcore import Value
from .params import ParamStore

EXPERT_CHANNELS = (12, 24, 48)


def init_expert(store: ParamStore, patch_size: int, backbone_rng):
    c_in = 3
    for i, c_out in enumerate(EXPERT_CHANNELS):
        w = backbone_rng.normal(0.0, math.sqrt(2.0 / (c_in * 9)), size=(c_out, c_in, 3, 3))
        store.add(f"expert.conv{i}.weight", w, False)
        store.add(f"expert.conv{i}.bias", np.zeros(c_out), False)
        c_in = c_out


def init_bc(store: ParamStore, expert_dim: int, dim: int, rng):
    store.add("bc.proj.weight", rng.normal(0.0, 1.0 / math.sqrt(expert_dim), size=(expert_dim, dim)), True)
    store.add("bc.alpha", np.ones(dim), True)
    store.add("bc.beta", np.zeros(dim), True)


def _conv3x3(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int) -> np.ndarray:
    C, H, W = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    Ho, Wo = (H - 1) // stride + 1, (W - 1) // stride + 1
    cols = np.empty((C, 3, 3, Ho, Wo), dtype=x.dtype)
    for u in range(3):
        for v in range(3):
            cols[:, u, v] = xp[:, u:u + stride * (Ho - 1) + 1:stride, v:v + stride * (Wo - 1) + 1:stride]
    out = w.reshape(w.shape[0], -1) @ cols.reshape(C * 9, Ho * Wo)
    return (out + b[:, None]).reshape(w.shape[0], Ho, Wo)


def expert_features(rgb: np.ndarray, store: ParamStore, patch_size: int) -> np.ndarray:
    """Frozen pyramid: 3×H×W → C_e×(H/p)×(W/p)."""
    levels = int(round(math.log2(patch_size)))
    if 2 ** levels != patch_size:
        raise ValueError(f"expert stub needs a power-of-two patch size, got {patch_size}")
    x = np.asarray(rgb, dtype=np.float32)
    if x.ndim != 3 or x.shape[0] != 3:
        raise nc.ShapeError(f"expert expects a 3×H×W image, got {x.shape}")
    strides = [2 if i < levels else 1 for i in range(len(EXPERT_CHANNELS))]
    if levels > len(EXPERT_CHANNELS):
        raise ValueError(f"patch size {patch_size} exceeds the expert's downsampling depth")
    for i, s in enumerate(strides):
        w = store[f"expert.conv{i}.weight"].data
        b = store[f"expert.conv{i}.bias"].data
        x = np.maximum(_conv3x3(x, w, b, s), 0.0)
    return x


def expert_forward(rgb, store: ParamStore, patch_size: int, image_size: int | None = None) -> Value:
    """BC(expert(rgb)) as N×D tokens; only the BC parameters are differentiable."""
    arr = rgb.data if isinstance(rgb, Value) else np.asarray(rgb)
    if image_size is not None and arr.shape[1:] != (image_size, image_size):
        raise nc.ShapeError(f"expert expects {image_size}×{image_size} input, got {arr.shape[1:]}")
    feats = expert_features(arr, store, patch_size)
    c, gh, gw = feats.shape
    tokens = Value(feats.reshape(c, gh * gw).T.copy())
    return calibrate(tokens, store.view("bc"))


def calibrate(tokens: Value, bc) -> Value:
    """alpha * proj(X) + beta, channel-wise."""
    return (tokens @ bc["proj.weight"]) * bc["alpha"] + bc["beta"]


def _np_log_softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def kl_feature_divergence(teacher: Value, student: Value) -> Value:
    """Mean over tokens of KL(softmax(teacher) || softmax(student)) across channels.

    The teacher is read as a constant: no adjoint flows back into it.
    """
    if teacher.shape != student.shape:
        raise nc.ShapeError(f"teacher {teacher.shape} and student {student.shape} differ")
    t = teacher.data.astype(np.result_type(teacher.data, student.data))
    log_p = _np_log_softmax(t)
    p = np.exp(log_p)
    log_q = nc.log_softmax(student, axis=-1)
    per_token = nc.sum(Value(p) * (Value(log_p) - log_q), axis=-1)
    return nc.mean(per_token)


def bikd_losses(x_expert: Value, x_rgb: Value, x_depth: Value) -> tuple[Value, Value]:
    """(expert → rgb, rgb → depth); permute the arguments for other orders."""
    return kl_feature_divergence(x_expert, x_rgb), kl_feature_divergence(x_rgb, x_depth)
