"""Every ablation row is a config switch; this builds each one and runs a step.

    python3 demos/ablation_switches.py

Prints the trainable parameter count and the first loss for every setting, so
you can see which parts of the model each switch removes.
"""
from camoadapt import Config, SamCod
from camoadapt import numcore as nc
from camoadapt.datagen import generate_scene, quantize, SceneSpec

scene = quantize(generate_scene(SceneSpec(seed=3)))

ROWS = [
    ("full model", {}),
    ("no distillation", {"kd": "off"}),
    ("expert -> rgb only", {"kd": "model_only"}),
    ("rgb -> depth only", {"kd": "modal_only"}),
    ("reversed distillation", {"kd": "reversed"}),
    ("no prompt mixing", {"prompt_mix": "off"}),
    ("concat only", {"prompt_mix": "cat_only"}),
    ("sum only", {"prompt_mix": "sum_only"}),
    ("per-stream prompts", {"prompt_mix": "single"}),
    ("adapter without DWT", {"dwt": "off"}),
    ("LoRA instead of adapters", {"adapter_form": "lora"}),
    ("rgb stream only", {"adapter_form": "rgb_only"}),
    ("frozen encoder", {"adapter_form": "none"}),
]

print(f"{'setting':<26}{'trainable':>10}{'loss':>9}{'kd':>9}")
for label, switches in ROWS:
    model = SamCod(Config(**switches))
    n = sum(v.data.size for v in model.params.trainable().values())
    with nc.no_grad(), nc.fresh_tape():
        out = model.forward(scene.rgb, scene.depth, scene.box)
        total, sup, km, kmod = model.loss(out, scene.gt)
    print(f"{label:<26}{n:>10}{float(total.data):>9.4f}{km + kmod:>9.4f}")
