"""Gated multi-modality attention.

Each branch feature first goes through spatial attention, then two symmetric
cross-modal attentions exchange information between the streams, and a gate
pair ``(g_hat, 1 - g_hat)`` decides how much of each exchange is admitted.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn
import torch.nn.functional as F


class SpatialAttention(nn.Module):
    """``relu(W * f + B)`` with ``f = conv_1(x)`` and ``(W; B) = conv_2(f)``."""

    def __init__(self, in_channels: int, channels: int = 256):
        super().__init__()
        self.channels = channels
        self.conv1 = nn.Sequential(
            nn.Conv2d(in_channels, channels, 3, padding=1, bias=False),
            nn.BatchNorm2d(channels),
        )
        self.conv2 = nn.Conv2d(channels, 2 * channels, 3, padding=1)

    def forward(self, x):
        f = self.conv1(x)
        weight, bias = torch.split(self.conv2(f), self.channels, dim=1)
        return F.relu(weight * f + bias)


class CrossModalAttention(nn.Module):
    """Non-local attention where one modality supplies queries/keys and the
    other supplies values.

    The affinity ``q^T k`` is ``(HW, HW)``; softmax runs down each column, so
    output position ``j`` is a convex mix of the value vectors.
    """

    def __init__(self, channels: int, reduced: int | None = None):
        super().__init__()
        reduced = reduced or max(1, channels // 8)
        # a query bias shifts every entry of a column equally; softmax cancels it
        self.query = nn.Conv2d(channels, reduced, 1, bias=False)
        self.key = nn.Conv2d(channels, reduced, 1)
        self.value = nn.Conv2d(channels, channels, 1)

    def attention(self, guide):
        q = self.query(guide).flatten(2)  # (B, C1, N)
        k = self.key(guide).flatten(2)
        return torch.softmax(torch.bmm(q.transpose(1, 2), k), dim=1)  # (B, N, N)

    def forward(self, guide, source, return_attention: bool = False):
        if guide.shape != source.shape:
            raise ValueError(f"guide {tuple(guide.shape)} and source {tuple(source.shape)} differ")
        b, c, h, w = source.shape
        if h * w == 0:
            raise ValueError("cross-modal attention needs a nonempty spatial grid")
        attn = self.attention(guide)
        v = self.value(source).flatten(2)  # (B, C, N)
        out = torch.bmm(v, attn).view(b, c, h, w)
        if return_attention:
            return out, attn
        return out


@dataclass
class GmaOutput:
    rf: torch.Tensor
    df: torch.Tensor | None
    rb_att: torch.Tensor
    db_att: torch.Tensor | None = None
    f_dr: torch.Tensor | None = None
    f_rd: torch.Tensor | None = None
    attn_dr: torch.Tensor | None = None
    attn_rd: torch.Tensor | None = None


def gate_pair(g_hat: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Gates for the depth-to-RGB and RGB-to-depth exchanges, summing to 1."""
    return g_hat, 1.0 - g_hat


def check_unit_interval(name: str, value: torch.Tensor) -> None:
    if not torch.all((value >= 0) & (value <= 1)):
        raise ValueError(f"{name} must lie in [0, 1]")


class GMA(nn.Module):
    def __init__(self, rgb_channels: int, depth_channels: int, channels: int = 256, use_depth: bool = True):
        super().__init__()
        self.use_depth = use_depth
        self.sa_rgb = SpatialAttention(rgb_channels, channels)
        if use_depth:
            self.sa_depth = SpatialAttention(depth_channels, channels)
            self.depth_to_rgb = CrossModalAttention(channels)
            self.rgb_to_depth = CrossModalAttention(channels)

    def forward(self, rb, db, g_hat) -> GmaOutput:
        """``g_hat`` is a ``(B,)`` tensor in [0, 1], one gate per sample."""
        rb_att = self.sa_rgb(rb)
        if not self.use_depth:
            return GmaOutput(rf=rb_att, df=None, rb_att=rb_att)
        check_unit_interval("g_hat", g_hat)
        db_att = self.sa_depth(db)
        f_dr, attn_dr = self.depth_to_rgb(db_att, rb_att, return_attention=True)
        f_rd, attn_rd = self.rgb_to_depth(rb_att, db_att, return_attention=True)
        g1, g2 = gate_pair(g_hat.view(-1, 1, 1, 1))
        return GmaOutput(
            rf=rb_att + g1 * f_dr,
            df=db_att + g2 * f_rd,
            rb_att=rb_att,
            db_att=db_att,
            f_dr=f_dr,
            f_rd=f_rd,
            attn_dr=attn_dr,
            attn_rd=attn_rd,
        )
