"""What the six scores do on a few hand-made predictions.

    python3 demos/metrics_tour.py
"""
import numpy as np

from camoadapt.metrics import FIELDS, evaluate_pair

gt = np.zeros((32, 32), bool)
gt[8:24, 10:22] = True

rng = np.random.default_rng(0)
cases = {
    "perfect": gt.astype(float),
    "soft but right": np.where(gt, 0.8, 0.2),
    "shifted 3 px": np.roll(gt, 3, axis=1).astype(float),
    "noisy": np.clip(gt + rng.normal(0, 0.3, gt.shape), 0, 1),
    "all background": np.zeros(gt.shape),
    "inverted": (~gt).astype(float),
}

print(f"{'prediction':<16}" + "".join(f"{f:>8}" for f in FIELDS))
for name, pred in cases.items():
    r = evaluate_pair(pred, gt)
    print(f"{name:<16}" + "".join(f"{v:>8.3f}" for v in r.as_row()))
