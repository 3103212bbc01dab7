"""Backbones for the two non-weight-shared encoder streams.

Both kinds expose five stages at strides (2, 4, 8, 16, 32). ``resnet50-shape``
follows the ResNet-50 stage split; ``toy`` is a small strided CNN with the same
stride contract, cheap enough to train on a CPU.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

STRIDES = (2, 4, 8, 16, 32)
RESNET50_CHANNELS = (64, 256, 512, 1024, 2048)
TOY_CHANNELS = (8, 16, 32, 32, 32)


@dataclass
class BackboneConfig:
    kind: str = "toy"
    stage_channels: tuple[int, ...] = TOY_CHANNELS
    input_size: int = 64

    def __post_init__(self):
        self.stage_channels = tuple(int(c) for c in self.stage_channels)
        if self.kind not in ("toy", "resnet50-shape"):
            raise ValueError(f"unknown backbone kind {self.kind!r}")
        if len(self.stage_channels) != 5:
            raise ValueError("a backbone needs exactly 5 stage channel counts")
        if self.kind == "resnet50-shape" and self.stage_channels != RESNET50_CHANNELS:
            raise ValueError(f"resnet50-shape has fixed channels {RESNET50_CHANNELS}")
        if self.kind == "toy" and max(self.stage_channels) > 64:
            raise ValueError("toy backbones are limited to 64 channels per stage")
        if self.input_size % STRIDES[-1]:
            raise ValueError(f"input size {self.input_size} is not divisible by {STRIDES[-1]}")

    @classmethod
    def resnet50(cls, input_size: int = 256) -> "BackboneConfig":
        return cls("resnet50-shape", RESNET50_CHANNELS, input_size)


@dataclass
class FeaturePyramid:
    stages: list[torch.Tensor]
    strides: tuple[int, ...] = field(default=STRIDES)

    def __post_init__(self):
        if len(self.stages) != 5:
            raise ValueError(f"expected 5 stages, got {len(self.stages)}")

    def __getitem__(self, level: int) -> torch.Tensor:
        """1-based stage access, ``pyramid[5]`` is the top stage."""
        return self.stages[level - 1]

    @property
    def channels(self) -> tuple[int, ...]:
        return tuple(s.shape[1] for s in self.stages)


def _conv_bn_relu(cin: int, cout: int, stride: int = 1) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
    )


class ToyBackbone(nn.Module):
    def __init__(self, channels=TOY_CHANNELS, in_channels: int = 3):
        super().__init__()
        stages = []
        cin = in_channels
        for cout in channels:
            stages.append(nn.Sequential(_conv_bn_relu(cin, cout, stride=2), _conv_bn_relu(cout, cout)))
            cin = cout
        self.stages = nn.ModuleList(stages)

    def forward(self, x):
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return feats


class ResNet50Backbone(nn.Module):
    """ResNet-50 split into five stages. Weights start random; pretrained
    values are loaded from a parameter archive (see :mod:`dpanet.checkpoint`)."""

    def __init__(self):
        super().__init__()
        from torchvision.models import resnet50

        net = resnet50(weights=None)
        self.stem = nn.Sequential(net.conv1, net.bn1, net.relu)
        self.maxpool = net.maxpool
        self.layer1 = net.layer1
        self.layer2 = net.layer2
        self.layer3 = net.layer3
        self.layer4 = net.layer4

    def forward(self, x):
        s1 = self.stem(x)
        s2 = self.layer1(self.maxpool(s1))
        s3 = self.layer2(s2)
        s4 = self.layer3(s3)
        s5 = self.layer4(s4)
        return [s1, s2, s3, s4, s5]


def build_backbone(cfg: BackboneConfig) -> nn.Module:
    if cfg.kind == "toy":
        return ToyBackbone(cfg.stage_channels)
    return ResNet50Backbone()


def encode_branch(x: torch.Tensor, backbone: nn.Module) -> FeaturePyramid:
    """Run one encoder stream on a ``(B, 3, H, W)`` batch."""
    if x.ndim != 4 or x.shape[1] != 3:
        raise ValueError(f"expected a (B, 3, H, W) batch, got {tuple(x.shape)}")
    h, w = x.shape[-2:]
    if h % STRIDES[-1] or w % STRIDES[-1]:
        raise ValueError(f"input size {h}x{w} is not divisible by {STRIDES[-1]}")
    return FeaturePyramid(list(backbone(x)))


def depth_to_3ch(depth):
    """Replicate a single-channel depth map to three channels.

    Accepts ``(H, W)`` numpy arrays (returns ``(H, W, 3)``) or ``(B, 1, H, W)``
    tensors (returns ``(B, 3, H, W)``).
    """
    if isinstance(depth, torch.Tensor):
        if depth.ndim != 4 or depth.shape[1] != 1:
            raise ValueError(f"expected a (B, 1, H, W) tensor, got {tuple(depth.shape)}")
        return depth.expand(-1, 3, -1, -1).contiguous()
    depth = np.asarray(depth)
    if depth.ndim != 2:
        raise ValueError(f"expected an (H, W) depth map, got shape {depth.shape}")
    return np.repeat(depth[:, :, None], 3, axis=2)
