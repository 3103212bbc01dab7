"""Training configuration and its flat ``key = value`` file format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .encoder import RESNET50_CHANNELS, TOY_CHANNELS, BackboneConfig
from .losses import DEFAULT_AUX_WEIGHTS, LossWeights
from .network import ModelConfig


@dataclass
class TrainConfig:
    input_size: int = 256
    batch_size: int = 32
    momentum: float = 0.9
    weight_decay: float = 5e-4
    max_lr_backbone: float = 5e-3
    max_lr_other: float = 0.05
    epochs: int = 30
    max_iters: int = 0  # 0 = derive from epochs
    warmup_fraction: float = 0.05
    seed: int = 0
    fusion_mode: str = "multiply"
    gate_mode: str = "soft"
    depth_branch: bool = True
    backbone: str = "resnet50-shape"
    stage_channels: tuple[int, ...] = RESNET50_CHANNELS
    channels: int = 256
    gate_hidden: int = 512
    lambda_aux: tuple[float, ...] = DEFAULT_AUX_WEIGHTS
    lambda_reg: float = 1.0
    gamma: float = 0.3
    augment: bool = True
    deterministic: bool = True
    pretrained: str = ""
    out_dir: str = ""
    ckpt_every: int = 0
    val_every: int = 0

    def __post_init__(self):
        self.stage_channels = tuple(int(c) for c in self.stage_channels)
        self.lambda_aux = tuple(float(w) for w in self.lambda_aux)
        for name in ("max_lr_backbone", "max_lr_other"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not 0 <= self.warmup_fraction < 1:
            raise ValueError("warmup_fraction must lie in [0, 1)")
        if self.momentum < 0 or self.weight_decay < 0:
            raise ValueError("momentum and weight_decay must be non-negative")
        self.model_config()  # validates the architecture fields
        LossWeights(self.lambda_aux, self.lambda_reg)

    @classmethod
    def toy(cls, **overrides) -> "TrainConfig":
        """Desk-scale preset: 64x64 inputs, toy backbone, 32 decoder channels."""
        base = dict(
            input_size=64,
            batch_size=8,
            backbone="toy",
            stage_channels=TOY_CHANNELS,
            channels=32,
            gate_hidden=64,
            max_lr_backbone=0.05,
            max_lr_other=0.05,
            epochs=1,
        )
        base.update(overrides)
        return cls(**base)

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            backbone=BackboneConfig(self.backbone, self.stage_channels, self.input_size),
            channels=self.channels,
            gate_hidden=self.gate_hidden,
            fusion_mode=self.fusion_mode,
            gate_mode=self.gate_mode,
            depth_branch=self.depth_branch,
        )

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda_aux, self.lambda_reg)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in fields(TrainConfig)}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_value(key: str, text: str) -> Any:
    if key not in _FIELDS:
        raise KeyError(f"unknown config key {key!r}")
    default = _FIELDS[key].default
    if default is dataclasses.MISSING:
        default = _FIELDS[key].default_factory()
    text = text.strip()
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        return tuple(type(default[0])(v) for v in text.replace(",", " ").split())
    return text


def parse_overrides(pairs) -> dict[str, Any]:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"expected key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        key = key.strip().replace("-", "_")
        out[key] = parse_value(key, value)
    return out


def read_config_file(path) -> dict[str, Any]:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    lines = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    return parse_overrides(lines)


def format_config(cfg: TrainConfig) -> str:
    rows = []
    for name, value in cfg.to_dict().items():
        if isinstance(value, (tuple, list)):
            value = ",".join(str(v) for v in value)
        rows.append(f"{name} = {value}")
    return "\n".join(rows) + "\n"


def load_config(path=None, overrides: dict[str, Any] | None = None, preset: str = "full") -> TrainConfig:
    values: dict[str, Any] = {}
    if path:
        values.update(read_config_file(path))
    values.update(overrides or {})
    if preset == "toy":
        return TrainConfig.toy(**values)
    return TrainConfig(**values)


def config_from_dict(d: dict[str, Any]) -> TrainConfig:
    known = {k: v for k, v in d.items() if k in _FIELDS}
    return TrainConfig(**known)
