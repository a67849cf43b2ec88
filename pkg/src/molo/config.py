"""Run configuration: dataclasses, JSON round-trip, and dotted-path overrides."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

METRIC_KINDS = ("bimhm", "otam")
TOKEN_MODES = ("token", "tap", "none")
CONTRAST_SCOPES = ("cross", "within")
RECON_SCOPES = ("support", "all")
DTYPES = ("f32", "f64")

ABLATION_FLAGS = (
    "use_contrastive",
    "use_autodecoder",
    "use_base_head",
    "use_motion_head",
    "contrast_scope",
    "token_mode",
)


@dataclass
class GenConfig:
    """Knobs for the MotionShapes clip generator."""

    frames: int = 8
    size: int = 32
    half_min: float = 3.0
    half_max: float = 5.0
    margin: float = 1.0
    bg_min: float = 0.05
    bg_max: float = 0.25
    color_min: float = 0.45
    translate_min: float = 9.0
    translate_max: float = 13.0
    orbit_radius_min: float = 4.5
    orbit_radius_max: float = 7.0
    orbit_turns_min: float = 0.55
    orbit_turns_max: float = 0.80
    osc_amp_min: float = 4.0
    osc_amp_max: float = 6.5
    osc_cycles_min: float = 1.25
    osc_cycles_max: float = 1.75
    grow_min: float = 1.9
    grow_max: float = 2.5
    fade_gamma_min: float = 0.7
    fade_gamma_max: float = 1.4
    crop_size: int = 28
    jitter: float = 0.1


@dataclass
class ModelConfig:
    """Network sizes; defaults give a 32x32 -> 4x4 feature grid at 64 channels."""

    feat_dim: int = 64
    enc_channels: tuple[int, ...] = (32, 64, 64)
    attn_heads: int = 4
    ffn_mult: int = 4
    transformer_layers: int = 1
    decoder_channels: tuple[int, ...] = (32, 16)
    temporal_kernel: int = 3


@dataclass
class RunConfig:
    n_way: int = 5
    k_shot: int = 1
    q_queries: int = 5
    train_episodes: int = 20000
    eval_episodes: int = 600
    seed: int = 0
    dtype: str = "f32"

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999

    metric: str = "bimhm"
    otam_gamma: float = 0.1
    temperature: float = 0.07
    alpha: float = 0.5
    lambda_contrast: float = 0.1
    lambda_recon: float = 0.1
    lambda_aux: float = 0.3

    use_contrastive: bool = True
    use_autodecoder: bool = True
    use_base_head: bool = True
    use_motion_head: bool = True
    contrast_scope: str = "cross"
    token_mode: str = "token"
    recon_scope: str = "support"

    log_every: int = 100
    train_classes: tuple[int, ...] = (2, 3, 4, 6, 9, 10, 12, 13, 14, 15)
    test_classes: tuple[int, ...] = (0, 1, 5, 7, 8, 11)

    gen: GenConfig = field(default_factory=GenConfig)
    model: ModelConfig = field(default_factory=ModelConfig)

    def validate(self) -> "RunConfig":
        if not (self.use_base_head or self.use_motion_head):
            raise ValueError("config: at least one head must be enabled")
        if self.dtype not in DTYPES:
            raise ValueError(f"config: dtype must be one of {DTYPES}, got {self.dtype!r}")
        if self.metric not in METRIC_KINDS:
            raise ValueError(f"config: metric must be one of {METRIC_KINDS}, got {self.metric!r}")
        if self.token_mode not in TOKEN_MODES:
            raise ValueError(f"config: token_mode must be one of {TOKEN_MODES}")
        if self.contrast_scope not in CONTRAST_SCOPES:
            raise ValueError(f"config: contrast_scope must be one of {CONTRAST_SCOPES}")
        if self.recon_scope not in RECON_SCOPES:
            raise ValueError(f"config: recon_scope must be one of {RECON_SCOPES}")
        if self.use_contrastive and self.token_mode == "none":
            raise ValueError("config: use_contrastive requires token_mode 'token' or 'tap'")
        if self.otam_gamma <= 0:
            raise ValueError("config: otam_gamma must be > 0")
        if self.temperature <= 0:
            raise ValueError("config: temperature must be > 0")
        if self.alpha < 0:
            raise ValueError("config: alpha must be >= 0")
        train, test = set(self.train_classes), set(self.test_classes)
        if train & test:
            raise ValueError(f"config: train/test class overlap {sorted(train & test)}")
        if not (train | test) <= set(range(16)):
            raise ValueError("config: class ids must lie in [0, 15]")
        if self.n_way < 2:
            raise ValueError("config: n_way must be >= 2")
        return self


def to_dict(cfg: RunConfig) -> dict[str, Any]:
    return dataclasses.asdict(cfg)


def from_dict(d: dict[str, Any]) -> RunConfig:
    d = dict(d)
    gen = GenConfig(**d.pop("gen", {}))
    model_d = dict(d.pop("model", {}))
    for key in ("enc_channels", "decoder_channels"):
        if key in model_d:
            model_d[key] = tuple(model_d[key])
    model = ModelConfig(**model_d)
    for key in ("train_classes", "test_classes"):
        if key in d:
            d[key] = tuple(d[key])
    return RunConfig(gen=gen, model=model, **d)


def to_json(cfg: RunConfig) -> str:
    return json.dumps(to_dict(cfg), sort_keys=True)


def from_json(text: str) -> RunConfig:
    return from_dict(json.loads(text))


def load(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return from_json(fh.read())


def save(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(to_dict(cfg), sort_keys=True, indent=2) + "\n")


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(to_json(cfg).encode()).hexdigest()[:16]


def _coerce(value: str, current: Any) -> Any:
    if isinstance(current, bool):
        low = value.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"cannot parse {value!r} as bool")
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float):
        return float(value)
    if isinstance(current, tuple):
        parts = [p for p in value.split(",") if p]
        elem = current[0] if current else 0
        return tuple(type(elem)(p) for p in parts)
    return value


def apply_override(cfg: RunConfig, spec: str) -> None:
    """Apply one 'key=value' override in place; dotted keys reach sub-configs."""
    if "=" not in spec:
        raise ValueError(f"override must look like key=value, got {spec!r}")
    key, value = spec.split("=", 1)
    obj: Any = cfg
    parts = key.split(".")
    for part in parts[:-1]:
        if not hasattr(obj, part):
            raise ValueError(f"unknown config section {part!r} in {key!r}")
        obj = getattr(obj, part)
    leaf = parts[-1]
    if not hasattr(obj, leaf):
        raise ValueError(f"unknown config key {key!r}")
    setattr(obj, leaf, _coerce(value, getattr(obj, leaf)))
