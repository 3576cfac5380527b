"""Camouflaged/salient object detection metrics: MAE, max-F, weighted F, S-measure, E-measure.

Predictions are continuous maps in [0, 1]; ground truth is binary.  Where the
original definitions leave an edge case open, the convention used is noted
inline.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

EPS = np.finfo(np.float64).eps
THRESHOLDS = np.arange(256) / 255.0


@dataclass
class MetricsReport:
    M: float
    Fx: float
    Fw: float
    Sm: float
    Ex: float
    aE: float

    def as_dict(self):
        return asdict(self)

    def as_row(self):
        return [self.M, self.Fx, self.Fw, self.Sm, self.Ex, self.aE]


FIELDS = ("M", "Fx", "Fw", "Sm", "Ex", "aE")


def _prepare(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    return pred, gt


def mae(pred, gt) -> float:
    pred, gt = _prepare(pred, gt)
    return float(np.mean(np.abs(pred - gt)))


# ----------------------------------------------------------------------
# F-measures
# ----------------------------------------------------------------------
def f_beta(tp, fp, fn, beta2=0.3):
    """F-beta from counts; 0 when precision + recall is 0."""
    tp, fp, fn = (np.asarray(a, dtype=np.float64) for a in (tp, fp, fn))
    precision = np.divide(tp, tp + fp, out=np.zeros_like(tp), where=(tp + fp) > 0)
    recall = np.divide(tp, tp + fn, out=np.zeros_like(tp), where=(tp + fn) > 0)
    denom = beta2 * precision + recall
    return np.divide((1 + beta2) * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)


def max_f_measure(pred, gt, beta2=0.3) -> float:
    """Maximum F-beta over binarizations pred > t, t in {0..255}/255."""
    pred, gt = _prepare(pred, gt)
    binarized = pred.reshape(1, -1) > THRESHOLDS[:, None]
    g = gt.reshape(1, -1)
    tp = (binarized & g).sum(axis=1)
    fp = (binarized & ~g).sum(axis=1)
    fn = (~binarized & g).sum(axis=1)
    return float(f_beta(tp, fp, fn, beta2).max())


def _gaussian_kernel(size=7, sigma=5.0):
    r = (size - 1) / 2
    y, x = np.mgrid[-r:r + 1, -r:r + 1]
    k = np.exp(-(x * x + y * y) / (2 * sigma * sigma))
    return k / k.sum()


def _nearest_foreground(gt):
    """Distance to, and flat index of, the nearest foreground pixel.

    Ties are broken towards the earliest foreground pixel in row-major order.
    """
    h, w = gt.shape
    fg = np.flatnonzero(gt.reshape(-1))
    fy, fx = np.divmod(fg, w)
    yy, xx = np.divmod(np.arange(h * w), w)
    d2 = (yy[:, None] - fy[None, :]) ** 2 + (xx[:, None] - fx[None, :]) ** 2
    nearest = d2.argmin(axis=1)
    dist = np.sqrt(d2[np.arange(h * w), nearest].astype(np.float64))
    return dist.reshape(h, w), fg[nearest].reshape(h, w)


def weighted_f_measure(pred, gt, beta2=1.0) -> float:
    """Weighted F-beta (Margolin et al.): Gaussian error dependency + distance importance."""
    pred, gt = _prepare(pred, gt)
    if not gt.any():
        return 0.0
    E = np.abs(pred - gt)
    dist, idx = _nearest_foreground(gt)
    Et = E.copy()
    Et[~gt] = E.reshape(-1)[idx[~gt]]
    EA = ndimage.correlate(Et, _gaussian_kernel(), mode="constant", cval=0.0)
    min_e_ea = np.where(gt & (EA < E), EA, E)
    B = np.where(gt, 1.0, 2.0 - np.exp(np.log(0.5) / 5.0 * dist))
    Ew = min_e_ea * B
    tpw = gt.sum() - Ew[gt].sum()
    fpw = Ew[~gt].sum()
    R = 1.0 - Ew[gt].mean()
    P = tpw / (tpw + fpw + EPS)
    return float((1 + beta2) * R * P / (R + beta2 * P + EPS))


def f_measures(pred, gt):
    return max_f_measure(pred, gt), weighted_f_measure(pred, gt)


# ----------------------------------------------------------------------
# S-measure
# ----------------------------------------------------------------------
def _s_object(x, mask):
    vals = x[mask]
    mu = vals.mean()
    sigma = vals.std(ddof=1) if vals.size > 1 else 0.0
    return 2.0 * mu / (mu * mu + 1.0 + sigma + EPS)


def _object_score(pred, gt):
    fg = np.where(gt, pred, 0.0)
    bg = np.where(gt, 0.0, 1.0 - pred)
    u = gt.mean()
    return u * _s_object(fg, gt) + (1 - u) * _s_object(bg, ~gt)


def _round_half_up(v):
    return int(np.floor(v + 0.5))


def _centroid(gt):
    """1-based centroid column/row, rounded half away from zero."""
    h, w = gt.shape
    total = gt.sum()
    if total == 0:
        return _round_half_up(w / 2), _round_half_up(h / 2)
    cols = np.arange(1, w + 1)
    rows = np.arange(1, h + 1)
    x = _round_half_up((gt.sum(axis=0) * cols).sum() / total)
    y = _round_half_up((gt.sum(axis=1) * rows).sum() / total)
    return x, y


def _ssim(pred, gt):
    n = pred.size
    x, y = pred.mean(), gt.mean()
    sx = ((pred - x) ** 2).sum() / (n - 1 + EPS)
    sy = ((gt - y) ** 2).sum() / (n - 1 + EPS)
    sxy = ((pred - x) * (gt - y)).sum() / (n - 1 + EPS)
    alpha = 4 * x * y * sxy
    beta = (x * x + y * y) * (sx + sy)
    if alpha != 0:
        return alpha / (beta + EPS)
    if beta == 0:
        return 1.0
    return 0.0


def _region_score(pred, gt):
    h, w = gt.shape
    x, y = _centroid(gt)
    area = h * w
    weights = (x * y / area, (w - x) * y / area, x * (h - y) / area, (w - x) * (h - y) / area)
    parts = (
        (slice(0, y), slice(0, x)),
        (slice(0, y), slice(x, w)),
        (slice(y, h), slice(0, x)),
        (slice(y, h), slice(x, w)),
    )
    score = 0.0
    gtf = gt.astype(np.float64)
    for wgt, (rs, cs) in zip(weights, parts):
        p, g = pred[rs, cs], gtf[rs, cs]
        if p.size == 0:
            # empty quadrant carries zero weight
            continue
        score += wgt * _ssim(p, g)
    return score


def s_measure(pred, gt, alpha=0.5) -> float:
    pred, gt = _prepare(pred, gt)
    y = gt.mean()
    if y == 0:
        score = 1.0 - pred.mean()
    elif y == 1:
        score = pred.mean()
    else:
        score = alpha * _object_score(pred, gt) + (1 - alpha) * _region_score(pred, gt)
    return float(min(max(score, 0.0), 1.0))


# ----------------------------------------------------------------------
# E-measure
# ----------------------------------------------------------------------
def _enhanced_alignment(fm, gt):
    """Mean enhanced alignment of a binary map (mean over pixels, so perfect = 1)."""
    fm = fm.astype(np.float64)
    gtf = gt.astype(np.float64)
    if not gt.any():
        enhanced = 1.0 - fm
    elif gt.all():
        enhanced = fm
    else:
        a_fm = fm - fm.mean()
        a_gt = gtf - gtf.mean()
        align = 2.0 * a_gt * a_fm / (a_gt * a_gt + a_fm * a_fm + EPS)
        enhanced = (align + 1.0) ** 2 / 4.0
    return float(enhanced.mean())


def e_measures(pred, gt):
    """(max E over 256 thresholds, E at the adaptive threshold min(2·mean, 1))."""
    pred, gt = _prepare(pred, gt)
    n = pred.size
    g = gt.reshape(1, -1).astype(np.float64)
    fm = (pred.reshape(1, -1) > THRESHOLDS[:, None]).astype(np.float64)
    if not gt.any():
        curve = (1.0 - fm).mean(axis=1)
    elif gt.all():
        curve = fm.mean(axis=1)
    else:
        a_fm = fm - fm.mean(axis=1, keepdims=True)
        a_gt = g - g.mean()
        align = 2.0 * a_gt * a_fm / (a_gt * a_gt + a_fm * a_fm + EPS)
        curve = ((align + 1.0) ** 2 / 4.0).sum(axis=1) / n
    threshold = min(2.0 * pred.mean(), 1.0)
    adaptive = _enhanced_alignment(pred >= threshold, gt)
    return float(curve.max()), adaptive


# ----------------------------------------------------------------------
# aggregation
# ----------------------------------------------------------------------
def evaluate_pair(pred, gt) -> MetricsReport:
    fx, fw = f_measures(pred, gt)
    ex, ae = e_measures(pred, gt)
    return MetricsReport(M=mae(pred, gt), Fx=fx, Fw=fw, Sm=s_measure(pred, gt), Ex=ex, aE=ae)


def average_reports(reports) -> MetricsReport:
    reports = list(reports)
    if not reports:
        raise ValueError("cannot average an empty list of reports")
    rows = np.array([r.as_row() for r in reports], dtype=np.float64)
    return MetricsReport(*(float(v) for v in rows.mean(axis=0)))


def evaluate_report(preds, gts) -> MetricsReport:
    preds, gts = list(preds), list(gts)
    if not preds or len(preds) != len(gts):
        raise ValueError(f"need equal-length non-empty lists, got {len(preds)} predictions and {len(gts)} masks")
    return average_reports(evaluate_pair(p, g) for p, g in zip(preds, gts))
