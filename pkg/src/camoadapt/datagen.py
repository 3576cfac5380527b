"""Synthetic camouflage scenes (RGB + depth + mask + box) and their on-disk layout.

The raster path uses only the PCG64 bit stream, IEEE arithmetic and square
roots, so a seed reproduces the same bytes everywhere.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from . import netpbm
from .prompting import Box


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    texture_band: tuple[int, int] = (1, 4)  # inner/outer box-blur radii of the band-pass
    camouflage: float = 0.8
    depth_noise: float = 0.02
    height_offset: float = 0.3

    def __post_init__(self):
        if not 0.0 <= self.camouflage <= 1.0:
            raise ValueError(f"camouflage strength must lie in [0, 1], got {self.camouflage}")


@dataclass
class Sample:
    rgb: np.ndarray  # 3×H×W float32 in [0, 1]
    depth: np.ndarray  # 1×H×W float32 in [0, 1], larger = nearer
    gt: np.ndarray  # H×W bool
    box: Box
    id: str


def derive_box_from_mask(gt) -> Box:
    gt = np.asarray(gt).astype(bool)
    if not gt.any():
        raise ValueError("cannot derive a box from an empty mask")
    rows = np.flatnonzero(gt.any(axis=1))
    cols = np.flatnonzero(gt.any(axis=0))
    return Box(int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)


def _box_blur(x: np.ndarray, radius: int, axis: int) -> np.ndarray:
    if radius <= 0:
        return x
    pad = [(0, 0)] * x.ndim
    pad[axis] = (radius + 1, radius)
    c = np.cumsum(np.pad(x, pad, mode="reflect"), axis=axis)
    n = x.shape[axis]
    hi = np.take(c, np.arange(2 * radius + 1, 2 * radius + 1 + n), axis=axis)
    lo = np.take(c, np.arange(0, n), axis=axis)
    return (hi - lo) / (2 * radius + 1)


def _smooth(x: np.ndarray, radius: int, passes: int = 2) -> np.ndarray:
    for _ in range(passes):
        x = _box_blur(_box_blur(x, radius, -1), radius, -2)
    return x


def _standardize(x: np.ndarray) -> np.ndarray:
    x = x - x.mean()
    sd = np.sqrt((x * x).mean())
    return x / sd if sd > 0 else x


def band_noise(rng, shape, band) -> np.ndarray:
    """Zero-mean, unit-RMS band-pass noise (difference of two box blurs)."""
    white = rng.random(shape)
    inner, outer = band
    return _standardize(_smooth(white, inner) - _smooth(white, outer))


def _object_mask(rng, size: int) -> np.ndarray:
    cy, cx = rng.uniform(0.35, 0.65, size=2) * size
    ay, ax = rng.uniform(0.14, 0.26, size=2) * size
    shear = rng.uniform(-0.6, 0.6)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dy, dx = (yy + 0.5 - cy) / ay, (xx + 0.5 - cx) / ax
    quad = dy * dy + dx * dx + shear * dx * dy
    wobble = _standardize(_smooth(rng.random((size, size)), max(size // 16, 1), passes=3))
    return quad + 0.25 * wobble < 1.0


def generate_scene(spec: SceneSpec, size: int = 64, sample_id: str | None = None, max_retries: int = 10) -> Sample:
    if size < 16:
        raise ValueError(f"scene size must be at least 16, got {size}")
    for attempt in range(max_retries + 1):
        rng = np.random.default_rng([spec.seed, attempt])
        mask = _object_mask(rng, size)
        if mask.sum() >= 16:
            break
    else:
        raise RuntimeError(f"could not draw a non-empty object for seed {spec.seed}")

    base = rng.uniform(0.3, 0.7, size=3)
    # foreground offset points away from the nearer intensity bound
    direction = -1.0 if base.mean() > 0.5 else 1.0
    contrast = 0.35 * direction
    bg = base[:, None, None] + 0.12 * band_noise(rng, (3, size, size), spec.texture_band)
    fg = base[:, None, None] + 0.12 * band_noise(rng, (3, size, size), spec.texture_band)
    fg = fg + (1.0 - spec.camouflage) * contrast
    rgb = np.clip(np.where(mask[None], fg, bg), 0.0, 1.0)

    ramp = 0.2 + 0.05 * (np.arange(size, dtype=np.float64) + 0.5)[:, None] / size * np.ones((1, size))
    depth = np.where(mask, ramp.max() + spec.height_offset, ramp)
    half_width = np.sqrt(3.0) * spec.depth_noise
    depth = depth + rng.uniform(-half_width, half_width, size=(size, size))
    depth = np.clip(depth, 0.0, 1.0)[None]

    sid = sample_id if sample_id is not None else f"scene{spec.seed:05d}"
    return Sample(rgb=rgb.astype(np.float32), depth=depth.astype(np.float32), gt=mask,
                  box=derive_box_from_mask(mask), id=sid)


def generate_set(n: int, seed: int = 0, size: int = 64, **spec_kw) -> list[Sample]:
    """``n`` scenes with seeds seed, seed+1, ..."""
    return [generate_scene(SceneSpec(seed=seed + i, **spec_kw), size, sample_id=f"scene{seed + i:05d}") for i in range(n)]


# ----------------------------------------------------------------------
# on-disk layout: <dir>/<id>_rgb.ppm, <id>_depth.pgm, <id>_gt.pgm, index.txt
# ----------------------------------------------------------------------
def quantize(sample: Sample) -> Sample:
    """Round-trip a sample through 8-bit storage precision."""
    rgb = netpbm.to_bytes(sample.rgb).astype(np.float32) / 255.0
    depth = netpbm.to_bytes(sample.depth).astype(np.float32) / 255.0
    return replace(sample, rgb=rgb, depth=depth)


def save_dataset(samples, directory):
    os.makedirs(directory, exist_ok=True)
    for s in samples:
        netpbm.write(os.path.join(directory, f"{s.id}_rgb.ppm"), netpbm.to_bytes(s.rgb.transpose(1, 2, 0)))
        netpbm.write(os.path.join(directory, f"{s.id}_depth.pgm"), netpbm.to_bytes(s.depth[0]))
        netpbm.write(os.path.join(directory, f"{s.id}_gt.pgm"), np.where(s.gt, 255, 0).astype(np.uint8))
    with open(os.path.join(directory, "index.txt"), "w") as fh:
        fh.write("".join(f"{s.id}\n" for s in samples))


def load_image_pair(rgb_path, depth_path):
    rgb = netpbm.read(rgb_path, "P6").astype(np.float32).transpose(2, 0, 1) / 255.0
    depth = netpbm.read(depth_path, "P5").astype(np.float32)[None] / 255.0
    return rgb, depth


def load_dataset(directory) -> list[Sample]:
    index = os.path.join(directory, "index.txt")
    if not os.path.exists(index):
        raise FileNotFoundError(f"no index.txt in {directory}")
    with open(index) as fh:
        ids = [line.strip() for line in fh if line.strip()]
    samples = []
    for sid in ids:
        rgb, depth = load_image_pair(os.path.join(directory, f"{sid}_rgb.ppm"),
                                     os.path.join(directory, f"{sid}_depth.pgm"))
        gt = netpbm.binarize(netpbm.read(os.path.join(directory, f"{sid}_gt.pgm"), "P5"))
        samples.append(Sample(rgb=rgb, depth=depth, gt=gt, box=derive_box_from_mask(gt), id=sid))
    return samples
