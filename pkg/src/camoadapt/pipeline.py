"""Training, evaluation and inference drivers behind the CLI."""
from __future__ import annotations

import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import checkpoint as ckpt
from . import netpbm
from . import numcore as nc
from .config import Config
from .datagen import Sample, generate_set, load_dataset, quantize, save_dataset
from .metrics import FIELDS, MetricsReport, average_reports, evaluate_pair
from .model import SamCod
from .objective import fuse_predictions
from .optim import AdamW
from .prompting import Box, perturb_box

LOSS_HEADER = "step,L,L_DiceCE,L_KD_model,L_KD_modal"
STREAM_CHOICES = ("rgb", "depth", "fused")


class TrainingError(RuntimeError):
    pass


class DataError(RuntimeError):
    pass


@dataclass
class TrainResult:
    model: SamCod
    losses: list[tuple[float, float, float, float]]
    out_dir: str


# ----------------------------------------------------------------------
# data
# ----------------------------------------------------------------------
def synth_dataset(config: Config, n: int, directory, seed: int | None = None) -> list[Sample]:
    """Generate ``n`` scenes, write them to ``directory`` and return the 8-bit versions."""
    samples = generate_set(n, seed=config.seed if seed is None else seed, size=config.image_size,
                           camouflage=config.synth_camouflage)
    save_dataset(samples, directory)
    return [quantize(s) for s in samples]


def resolve_data(data_dir) -> list[Sample]:
    if not os.path.isdir(data_dir):
        raise DataError(f"data directory {data_dir!r} does not exist")
    try:
        samples = load_dataset(data_dir)
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from None
    if not samples:
        raise DataError(f"no samples listed in {data_dir!r}")
    return samples


def _check_size(samples, config: Config):
    for s in samples:
        if s.rgb.shape[1:] != (config.image_size, config.image_size):
            raise DataError(f"{s.id}: image is {s.rgb.shape[1]}×{s.rgb.shape[2]}, "
                            f"config expects {config.image_size}×{config.image_size}")


# ----------------------------------------------------------------------
# training
# ----------------------------------------------------------------------
def training_schedule(config: Config, n: int) -> list[int]:
    """Sample index for every step: a fresh seeded permutation per epoch."""
    total = config.steps if config.steps > 0 else config.epochs * n
    rng = np.random.default_rng([config.seed, 1])
    order: list[int] = []
    while len(order) < total:
        order.extend(int(i) for i in rng.permutation(n))
    return order[:total]


def train_step(model: SamCod, opt: AdamW, sample: Sample, step: int):
    cfg = model.config
    size = (cfg.image_size, cfg.image_size)
    box = sample.box
    if cfg.box_jitter > 0:
        box = perturb_box(box, size, [cfg.seed, 2, step], cfg.box_jitter)
    with nc.fresh_tape():
        try:
            out = model.forward(sample.rgb, sample.depth, box)
            total, sup, kd_model, kd_modal = model.loss(out, sample.gt)
        except nc.NonFiniteError as exc:
            raise TrainingError(f"{exc} at step {step}") from None
        value = float(total.data)
        if not np.isfinite(value):
            raise TrainingError(f"non-finite loss {value} at step {step}")
        opt.zero_grad()
        nc.backward(total)
    opt.step()
    return value, sup, kd_model, kd_modal


def _fmt(v: float) -> str:
    return f"{v:.8e}"


def run_train(config: Config, samples: list[Sample] | None = None, out_dir=None, log=None) -> TrainResult:
    out_dir = out_dir or config.out_dir
    if samples is None:
        samples = resolve_data(config.data_dir)
    if not samples:
        raise DataError("training needs at least one sample")
    _check_size(samples, config)
    os.makedirs(out_dir, exist_ok=True)

    model = SamCod(config)
    ckpt.save(os.path.join(out_dir, "init.smcd"), model.params.arrays())
    opt = AdamW(model.params.trainable(), lr=config.lr, weight_decay=config.weight_decay)
    losses = []
    with open(os.path.join(out_dir, "loss.csv"), "w") as fh:
        fh.write(LOSS_HEADER + "\n")
        for step, idx in enumerate(training_schedule(config, len(samples))):
            row = train_step(model, opt, samples[idx], step)
            losses.append(row)
            fh.write(",".join([str(step)] + [_fmt(v) for v in row]) + "\n")
            if log is not None and (step % 50 == 0):
                log(f"step {step:5d}  L={row[0]:.4f}")
    ckpt.save(os.path.join(out_dir, "final.smcd"), model.params.arrays())
    return TrainResult(model, losses, out_dir)


# ----------------------------------------------------------------------
# evaluation / inference
# ----------------------------------------------------------------------
def load_model(config: Config, checkpoint_path) -> SamCod:
    model = SamCod(config)
    try:
        ckpt.checkpoint_io("load", checkpoint_path, model.params)
    except OSError as exc:
        raise ckpt.CheckpointError(f"cannot read checkpoint: {exc}") from None
    except KeyError as exc:
        raise ckpt.CheckpointError(f"checkpoint does not match config: {exc.args[0]}") from None
    except ValueError as exc:
        raise ckpt.CheckpointError(f"checkpoint does not match config: {exc}") from None
    return model


def predict(model: SamCod, rgb, depth, box) -> tuple[np.ndarray, np.ndarray | None]:
    """Soft maps (rgb, depth-or-None), each H×W float32."""
    with nc.no_grad(), nc.fresh_tape():
        out = model.forward(rgb, depth, box)
    y_rgb = out.y_rgb.data.reshape(out.y_rgb.shape[-2:])
    y_depth = None if out.y_depth is None else out.y_depth.data.reshape(out.y_depth.shape[-2:])
    return y_rgb, y_depth


def select_stream(model: SamCod, y_rgb, y_depth, stream: str) -> np.ndarray:
    if stream == "rgb":
        return y_rgb
    if stream == "depth":
        if y_depth is None:
            raise ValueError("this configuration has no depth stream")
        return y_depth
    if stream == "fused":
        cfg = model.config
        return fuse_predictions(y_rgb, y_depth, cfg.w_rgb, cfg.w_depth).astype(np.float64)
    raise ValueError(f"stream must be one of {STREAM_CHOICES}")


def evaluate_samples(model: SamCod, samples, stream: str = "fused", workers: int = 1):
    """Per-image reports in input order, plus their mean."""
    def one(s: Sample):
        y_rgb, y_depth = predict(model, s.rgb, s.depth, s.box)
        return evaluate_pair(select_stream(model, y_rgb, y_depth, stream), s.gt)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            reports = list(pool.map(one, samples))
    else:
        reports = [one(s) for s in samples]
    return reports, average_reports(reports)


def metrics_csv(ids, reports, mean: MetricsReport) -> str:
    lines = ["id," + ",".join(FIELDS)]
    for sid, r in zip(ids, reports):
        lines.append(sid + "," + ",".join(f"{v:.6f}" for v in r.as_row()))
    lines.append("mean," + ",".join(f"{v:.6f}" for v in mean.as_row()))
    return "\n".join(lines) + "\n"


def format_table(mean: MetricsReport, label: str = "mean") -> str:
    width = max(len(label), 6)
    head = f"{'':<{width}}" + "".join(f"{f:>8}" for f in FIELDS)
    row = f"{label:<{width}}" + "".join(f"{v:>8.4f}" for v in mean.as_row())
    return head + "\n" + row


def run_eval(config: Config, checkpoint_path, samples=None, out_dir=None, stream: str = "fused",
             workers: int = 1, stdout=None) -> MetricsReport:
    if samples is None:
        samples = resolve_data(config.data_dir)
    _check_size(samples, config)
    model = load_model(config, checkpoint_path)
    reports, mean = evaluate_samples(model, samples, stream, workers)
    out_dir = out_dir or config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "metrics.csv"), "w") as fh:
        fh.write(metrics_csv([s.id for s in samples], reports, mean))
    print(format_table(mean, stream), file=stdout or sys.stdout)
    return mean


def run_infer(config: Config, checkpoint_path, rgb_path, depth_path, out_path,
              box: Box | None = None, soft: bool = False) -> np.ndarray:
    """Write the fused binary mask as P5; with ``soft`` also ``*_rgb.pgm`` / ``*_depth.pgm`` soft maps."""
    model = load_model(config, checkpoint_path)
    try:
        rgb = netpbm.read(rgb_path, "P6").astype(np.float32).transpose(2, 0, 1) / 255.0
        depth = None
        if model.depth_enabled:
            depth = netpbm.read(depth_path, "P5").astype(np.float32)[None] / 255.0
        elif depth_path is not None:
            warnings.warn("rgb_only configuration: ignoring the depth input", stacklevel=2)
    except OSError as exc:
        raise DataError(f"cannot read input image: {exc}") from None
    size = config.image_size
    if rgb.shape[1:] != (size, size) or (depth is not None and depth.shape[1:] != (size, size)):
        raise DataError(f"inputs must be {size}×{size}")
    box = box if box is not None else Box(0, 0, size, size)
    y_rgb, y_depth = predict(model, rgb, depth, box)
    mask = fuse_predictions(y_rgb, y_depth, config.w_rgb, config.w_depth)
    netpbm.write(out_path, np.where(mask, 255, 0).astype(np.uint8))
    if soft:
        stem = os.path.splitext(out_path)[0]
        netpbm.write(f"{stem}_rgb.pgm", netpbm.to_bytes(y_rgb))
        if y_depth is not None:
            netpbm.write(f"{stem}_depth.pgm", netpbm.to_bytes(y_depth))
    return mask
