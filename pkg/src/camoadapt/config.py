"""Run configuration: plain-text ``key = value`` files with ``#`` comments."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from .encoder import ADAPTER_FORMS, EncoderConfig
from .prompting import PROMPT_MIX_MODES

KD_MODES = ("both", "model_only", "modal_only", "reversed", "off")
DWT_MODES = ("on", "off")
ALIASES = {"lambda": "lam"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    # encoder
    image_size: int = 64
    patch_size: int = 8
    embed_dim: int = 32
    heads: int = 4
    depth: int = 4
    adapter_bottleneck: int = 8
    mlp_ratio: int = 4
    wavelet: str = "db2"
    # ablation switches
    adapter_form: str = "dual"
    dwt: str = "on"
    kd: str = "both"
    prompt_mix: str = "full"
    # training
    lam: float = 0.9
    epochs: int = 60
    steps: int = 0  # > 0 overrides epochs
    lr: float = 1e-4
    weight_decay: float = 0.01
    seed: int = 0
    backbone_seed: int = 1234
    box_jitter: float = 0.05
    # inference
    w_rgb: float = 0.5
    w_depth: float = 0.5
    # synthetic data
    synth_camouflage: float = 0.8
    # paths
    data_dir: str = "data"
    out_dir: str = "runs"

    def __post_init__(self):
        for name, allowed in (("adapter_form", ADAPTER_FORMS), ("dwt", DWT_MODES),
                              ("kd", KD_MODES), ("prompt_mix", PROMPT_MIX_MODES)):
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lam must lie in [0, 1], got {self.lam}")
        if self.epochs < 0 or self.steps < 0:
            raise ConfigError("epochs and steps must be non-negative")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        try:
            self.encoder_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            image_size=self.image_size, patch_size=self.patch_size, embed_dim=self.embed_dim,
            heads=self.heads, depth=self.depth, adapter_bottleneck=self.adapter_bottleneck,
            wavelet=self.wavelet, adapter_form=self.adapter_form, use_dwt=self.dwt == "on",
            mlp_ratio=self.mlp_ratio,
        )

    def with_(self, **kw) -> "Config":
        return replace(self, **kw)

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())


_TYPES = {f.name: f.type for f in fields(Config)}


def _coerce(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None
    return raw


def parse_config(text: str, **overrides) -> Config:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        key = ALIASES.get(key, key)
        if key not in _TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return Config(**values)


def load_config(path, **overrides) -> Config:
    with open(path) as fh:
        return parse_config(fh.read(), **overrides)
