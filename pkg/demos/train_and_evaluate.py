"""Train a small model on synthetic camouflage scenes, then score it.

Run from the repository root:

    python3 demos/train_and_evaluate.py [steps]

Writes everything under ./demo_run/.  With the default 200 steps this takes
well under a minute on one core.
"""
import sys

from camoadapt import Config
from camoadapt.pipeline import evaluate_samples, format_table, run_train, synth_dataset

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 200
cfg = Config(steps=steps, seed=0)

# Four training scenes and eight fresh ones for a held-out check.
train = synth_dataset(cfg, 4, "demo_run/train", seed=0)
test = synth_dataset(cfg, 8, "demo_run/test", seed=500)

res = run_train(cfg, train, out_dir="demo_run", log=print)
first, last = res.losses[0][0], res.losses[-1][0]
print(f"\nloss {first:.3f} -> {last:.3f} over {steps} steps")

for name, samples in (("train", train), ("held-out", test)):
    _, mean = evaluate_samples(res.model, samples, "fused")
    print(format_table(mean, name))
