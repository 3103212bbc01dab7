"""Confidence heads on the top encoder stage.

Both heads read the concatenated global-average-pooled ``rb_5`` and ``db_5``:
one regresses the scalar depth potentiality ``g_hat``, the other emits the
per-channel mixing weights ``alpha`` used in the final fusion.
"""
from __future__ import annotations

import torch
from torch import nn


def pooled_concat(rb5: torch.Tensor, db5: torch.Tensor) -> torch.Tensor:
    if rb5.ndim != 4 or db5.ndim != 4 or rb5.shape[0] != db5.shape[0]:
        raise ValueError(f"incompatible top features {tuple(rb5.shape)} and {tuple(db5.shape)}")
    if rb5.shape[-2:].numel() == 0 or db5.shape[-2:].numel() == 0:
        raise ValueError("top features are spatially empty")
    return torch.cat([rb5.mean(dim=(2, 3)), db5.mean(dim=(2, 3))], dim=1)


class GateHead(nn.Module):
    """GAP-concat -> FC -> ReLU -> FC -> sigmoid."""

    def __init__(self, rgb_channels: int, depth_channels: int, hidden: int = 512):
        super().__init__()
        self.fc1 = nn.Linear(rgb_channels + depth_channels, hidden)
        self.fc2 = nn.Linear(hidden, 1)

    def logit(self, rb5, db5):
        return self.fc2(torch.relu(self.fc1(pooled_concat(rb5, db5)))).squeeze(1)

    def forward(self, rb5, db5):
        return torch.sigmoid(self.logit(rb5, db5))


class AlphaHead(nn.Module):
    def __init__(self, rgb_channels: int, depth_channels: int, channels: int = 256):
        super().__init__()
        self.fc = nn.Linear(rgb_channels + depth_channels, channels)

    def forward(self, rb5, db5):
        return torch.sigmoid(self.fc(pooled_concat(rb5, db5)))


def predict_gate(rb5, db5, head: GateHead) -> torch.Tensor:
    return head(rb5, db5)


def predict_alpha(rb5, db5, head: AlphaHead) -> torch.Tensor:
    return head(rb5, db5)
