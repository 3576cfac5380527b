"""End-to-end dual-stream model: encoder, expert + BC, prompts, two decoders."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import Config
from .decoder import copy_decoder, decode_mask, init_decoder
from .distillation import bikd_losses, expert_forward, init_bc, init_expert, EXPERT_CHANNELS, kl_feature_divergence
from .encoder import encode_dual_stream, init_encoder
from .numcore import Value
from .objective import dice_ce_loss, total_loss
from .params import ParamStore
from .prompting import PromptBundle, encode_box_prompt, image_position_encoding, init_mixer, init_prompt, mix_dense_prompt

ZERO = 0.0


@dataclass
class Outputs:
    y_rgb: Value
    y_depth: Value | None
    kd_model: Value | float
    kd_modal: Value | float
    x_rgb: Value
    x_depth: Value | None
    x_expert: Value

    @property
    def kd(self):
        return self.kd_model + self.kd_modal


def kd_terms(mode: str, x_expert, x_rgb, x_depth):
    """(model term, modal term) for one KD configuration."""
    if mode == "off":
        return ZERO, ZERO
    if x_depth is None:
        if mode in ("both", "model_only"):
            return kl_feature_divergence(x_expert, x_rgb), ZERO
        return ZERO, ZERO
    if mode == "both":
        return bikd_losses(x_expert, x_rgb, x_depth)
    if mode == "model_only":
        return bikd_losses(x_expert, x_rgb, x_depth)[0], ZERO
    if mode == "modal_only":
        return ZERO, bikd_losses(x_expert, x_rgb, x_depth)[1]
    if mode == "reversed":
        # expert → depth, then depth → rgb
        return bikd_losses(x_expert, x_depth, x_rgb)
    raise ValueError(f"unknown kd mode {mode!r}")


class SamCod:
    """Parameters plus forward pass for one configuration."""

    def __init__(self, config: Config, store: ParamStore | None = None):
        self.config = config
        self.enc = config.encoder_config()
        if store is None:
            store = ParamStore()
            self._init(store)
        self.params = store
        self._image_pe = image_position_encoding(self.params, self.enc.grid)

    @property
    def depth_enabled(self) -> bool:
        return self.config.adapter_form != "rgb_only"

    def _init(self, store: ParamStore):
        cfg, enc = self.config, self.enc
        backbone_rng = np.random.default_rng(cfg.backbone_seed)
        rng = np.random.default_rng(cfg.seed)
        init_encoder(store, enc, backbone_rng, rng)
        init_expert(store, enc.patch_size, backbone_rng)
        init_prompt(store, enc.embed_dim, backbone_rng, rng)
        init_bc(store, EXPERT_CHANNELS[-1], enc.embed_dim, rng)
        init_mixer(store, enc.embed_dim, cfg.prompt_mix, rng)
        init_decoder(store, "decoder_rgb", enc.embed_dim, rng)
        if self.depth_enabled:
            copy_decoder(store, "decoder_rgb", "decoder_depth")

    def prompt(self, box) -> PromptBundle:
        s = self.enc.image_size
        return encode_box_prompt(box, self.params, (s, s), self.enc.grid)

    def decode(self, x, bundle, stream: str):
        s = self.enc.image_size
        return decode_mask(x, bundle, self.params.view(f"decoder_{stream}"), (s, s), self._image_pe, self.enc.heads)

    def forward(self, rgb, depth, box) -> Outputs:
        cfg, enc = self.config, self.enc
        rgb = Value(np.asarray(rgb, dtype=np.float32))
        depth_in = Value(np.asarray(depth, dtype=np.float32)) if self.depth_enabled and depth is not None else None
        x_rgb, x_depth = encode_dual_stream(rgb, depth_in, self.params, enc)
        x_expert = expert_forward(rgb, self.params, enc.patch_size, enc.image_size)
        kd_model, kd_modal = kd_terms(cfg.kd, x_expert, x_rgb, x_depth)

        bundle = self.prompt(box)
        if cfg.prompt_mix == "single":
            b_rgb = PromptBundle(bundle.sparse, mix_dense_prompt(bundle, x_expert, x_rgb, None, self.params, "single"))
            y_rgb = self.decode(x_rgb, b_rgb, "rgb")
            y_depth = None
            if x_depth is not None:
                b_depth = PromptBundle(bundle.sparse,
                                       mix_dense_prompt(bundle, x_expert, x_depth, None, self.params, "single"))
                y_depth = self.decode(x_depth, b_depth, "depth")
        else:
            mixed = PromptBundle(bundle.sparse,
                                 mix_dense_prompt(bundle, x_expert, x_rgb, x_depth, self.params, cfg.prompt_mix))
            y_rgb = self.decode(x_rgb, mixed, "rgb")
            y_depth = self.decode(x_depth, mixed, "depth") if x_depth is not None else None
        return Outputs(y_rgb, y_depth, kd_model, kd_modal, x_rgb, x_depth, x_expert)

    def loss(self, out: Outputs, gt):
        """(total, supervision term, kd_model, kd_modal); the last three as floats."""
        sup = dice_ce_loss(out.y_rgb, gt)
        if out.y_depth is not None:
            sup = sup + dice_ce_loss(out.y_depth, gt)
        total = total_loss(out.y_rgb, out.y_depth, gt, out.kd, self.config.lam)
        as_float = lambda v: float(v.data) if isinstance(v, Value) else float(v)
        return total, as_float(sup), as_float(out.kd_model), as_float(out.kd_modal)
