"""DiceCE supervision, the composite training loss, and inference fusion."""
from __future__ import annotations

import numpy as np

from . import numcore as nc
from .numcore import Value

PROB_FLOOR = 1e-7


def dice_ce_loss(pred: Value, gt, smooth: float = 1.0) -> Value:
    """0.5 * soft-Dice loss + 0.5 * mean binary cross-entropy."""
    g = np.asarray(gt.data if isinstance(gt, Value) else gt)
    if pred.shape[-g.ndim:] != g.shape or pred.size != g.size:
        raise nc.ShapeError(f"prediction {pred.shape} and mask {g.shape} differ")
    g = Value(g.reshape(pred.shape).astype(pred.dtype))
    inter = nc.sum(pred * g)
    dice = 1.0 - (2.0 * inter + smooth) / (nc.sum(pred) + nc.sum(g) + smooth)
    p = nc.clip(pred, PROB_FLOOR, 1.0 - PROB_FLOOR)
    ce = -nc.mean(g * nc.log(p) + (1.0 - g) * nc.log(1.0 - p))
    return 0.5 * dice + 0.5 * ce


def total_loss(y_rgb: Value, y_depth: Value | None, gt, kd: Value | float, lam: float = 0.9) -> Value:
    """lam * (DiceCE(rgb) + DiceCE(depth)) + (1 - lam) * kd; depth may be absent."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    sup = dice_ce_loss(y_rgb, gt)
    if y_depth is not None:
        sup = sup + dice_ce_loss(y_depth, gt)
    return lam * sup + (1.0 - lam) * kd


def fuse_predictions(y_rgb, y_depth=None, w_rgb: float = 0.5, w_depth: float = 0.5) -> np.ndarray:
    """Foreground iff w_rgb*y_rgb + w_depth*y_depth > 0.5 (strict)."""
    a = np.asarray(y_rgb.data if isinstance(y_rgb, Value) else y_rgb, dtype=np.float64)
    if y_depth is None:
        return a > 0.5
    b = np.asarray(y_depth.data if isinstance(y_depth, Value) else y_depth, dtype=np.float64)
    if a.shape != b.shape:
        raise nc.ShapeError(f"fusion inputs differ in shape: {a.shape} vs {b.shape}")
    return (w_rgb * a + w_depth * b) > 0.5
