"""Finite-difference checks for every differentiable composite.

Each case builds a tiny float64 fixture, reduces the output to a scalar with a
fixed random projection, and compares tape gradients against central
differences.  Shared by ``camoadapt gradcheck`` and the test suite.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .decoder import decode_mask, init_decoder, two_way_attention_layer
from .distillation import calibrate, init_bc, kl_feature_divergence
from .encoder import EncoderConfig, adapter_forward, encode_stream, encoder_block_forward, init_adapter, init_encoder
from .numcore import Value
from .objective import dice_ce_loss
from .params import ParamStore
from .prompting import Box, encode_box_prompt, image_position_encoding, init_mixer, init_prompt, mix_dense_prompt
from .wavelet import DB2, dwt2_single_level, highfreq_magnitude

TOLERANCE = 1e-4
STEP = 1e-5
FLOOR = 1e-5  # absolute scale below which a gradient counts as zero
DIM, GRID, HEADS = 8, 4, 2


@dataclass
class CheckResult:
    name: str
    error: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.error < TOLERANCE


def _float64(store: ParamStore) -> ParamStore:
    for _, v in store.items():
        v.data = v.data.astype(np.float64)
    return store


def _randomize(store: ParamStore, rng, prefix: str = "", scale: float = 0.3):
    """Replace zero-initialized tensors so every path carries gradient."""
    for name, v in store.items():
        if name.startswith(prefix) and not np.any(v.data):
            v.data = rng.normal(0.0, scale, size=v.shape)


def _projected(out_fn, shape, rng):
    r = Value(rng.normal(size=shape))
    return lambda: nc.sum(out_fn() * r)


def _leaf(rng, *shape, scale=1.0):
    return Value(rng.normal(0.0, scale, size=shape), requires_grad=True)


def _trainables(store: ParamStore, prefix: str = ""):
    return [v for k, v in store.items() if k.startswith(prefix)]


# ----------------------------------------------------------------------
# cases: each returns (scalar function, parameter list)
# ----------------------------------------------------------------------
def case_dwt_highfreq(rng):
    x = _leaf(rng, DIM, 2 * GRID, 2 * GRID)
    f = _projected(lambda: highfreq_magnitude(dwt2_single_level(x, DB2)), (DIM, GRID, GRID), rng)
    return f, [x]


def case_adapter(rng):
    store = ParamStore()
    init_adapter(store, "ad", DIM, 4, rng)
    _float64(store)
    _randomize(store, rng)
    x = _leaf(rng, GRID * GRID, DIM)
    f = _projected(lambda: adapter_forward(x, store.view("ad"), DB2), (GRID * GRID, DIM), rng)
    return f, [x] + _trainables(store)


def _tiny_encoder(rng, depth=1, image_size=16):
    cfg = EncoderConfig(image_size=image_size, patch_size=4, embed_dim=DIM, heads=HEADS, depth=depth,
                        adapter_bottleneck=4, mlp_ratio=2)
    store = ParamStore()
    init_encoder(store, cfg, rng, rng)
    _float64(store)
    _randomize(store, rng, "encoder.blocks", scale=0.2)
    return cfg, store


def case_encoder_block(rng):
    cfg, store = _tiny_encoder(rng)
    x = _leaf(rng, GRID * GRID, DIM)
    f = _projected(lambda: encoder_block_forward(x, store.view("encoder.blocks.0"), "rgb", cfg),
                   (GRID * GRID, DIM), rng)
    return f, [x] + _trainables(store, "encoder.blocks.0")


def case_encoder(rng):
    cfg, store = _tiny_encoder(rng, depth=2)
    img = _leaf(rng, 3, 16, 16, scale=0.5)
    f = _projected(lambda: encode_stream(img, store, cfg, "depth"), (GRID * GRID, DIM), rng)
    return f, [img] + _trainables(store)


def case_kl(rng):
    store = ParamStore()
    init_bc(store, 6, DIM, rng)
    _float64(store)
    store["bc.alpha"].data = rng.uniform(0.5, 1.5, size=DIM)
    feats = Value(rng.normal(size=(GRID * GRID, 6)))
    teacher = Value(rng.normal(size=(GRID * GRID, DIM)))
    # student side of model distillation: calibrated expert features
    f = lambda: kl_feature_divergence(teacher, calibrate(feats, store.view("bc")))
    return f, _trainables(store, "bc")


def case_mix_prompt(rng):
    store = ParamStore()
    init_prompt(store, DIM, rng, rng)
    init_mixer(store, DIM, "full", rng)
    _float64(store)
    # move the delta kernels off their one-hot init
    for k in ("mixer.dw1", "mixer.dw2"):
        store[k].data = store[k].data + rng.normal(0.0, 0.3, size=store[k].shape)
    xs = [_leaf(rng, GRID * GRID, DIM) for _ in range(3)]

    def out():
        bundle = encode_box_prompt(Box(2, 3, 12, 14), store, (16, 16), GRID)
        return mix_dense_prompt(bundle, *xs, store, "full")

    return _projected(out, (DIM, GRID, GRID), rng), xs + _trainables(store)


def _tiny_decoder(rng):
    store = ParamStore()
    init_prompt(store, DIM, rng, rng)
    init_decoder(store, "dec", DIM, rng)
    _float64(store)
    return store


def case_two_way(rng):
    store = _tiny_decoder(rng)
    tokens = _leaf(rng, 3, DIM)
    image = _leaf(rng, GRID * GRID, DIM)
    pe = Value(image_position_encoding(store, GRID).astype(np.float64))

    def out():
        t, i = two_way_attention_layer(tokens, image, store.view("dec.layers.0"), HEADS, tokens, pe)
        return nc.concat([t, i], axis=0)

    return _projected(out, (3 + GRID * GRID, DIM), rng), [tokens, image] + _trainables(store, "dec.layers.0")


def case_decode_mask(rng):
    store = _tiny_decoder(rng)
    image = _leaf(rng, GRID * GRID, DIM)
    pe = image_position_encoding(store, GRID).astype(np.float64)

    def out():
        bundle = encode_box_prompt(Box(2, 3, 12, 14), store, (16, 16), GRID)
        return decode_mask(image, bundle, store.view("dec"), (16, 16), pe, HEADS)

    params = [image] + _trainables(store, "dec") + [store["prompt.corner"], store["prompt.no_mask"]]
    return _projected(out, (1, 16, 16), rng), params


def case_dice_ce(rng):
    z = _leaf(rng, 1, 8, 8)
    gt = rng.random((8, 8)) < 0.4
    return (lambda: dice_ce_loss(nc.sigmoid(z), gt)), [z]


CASES = {
    "dwt_highfreq": case_dwt_highfreq,
    "adapter_forward": case_adapter,
    "encoder_block": case_encoder_block,
    "encoder_stream": case_encoder,
    "kl_feature_divergence": case_kl,
    "mix_dense_prompt": case_mix_prompt,
    "two_way_attention_layer": case_two_way,
    "decode_mask": case_decode_mask,
    "dice_ce_loss": case_dice_ce,
}


def run_case(name: str, seed: int = 0, samples: int = 48) -> CheckResult:
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    f, params = CASES[name](rng)
    err = nc.finite_diff_check(f, params, h=STEP, samples=samples, seed=seed, floor=FLOOR)
    return CheckResult(name, float(err), time.perf_counter() - t0)


def run_all(seed: int = 0, names=None) -> list[CheckResult]:
    return [run_case(n, seed) for n in (names or CASES)]


def format_results(results) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'composite':<{width}}  {'max rel err':>12}  result"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {r.error:>12.3e}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
