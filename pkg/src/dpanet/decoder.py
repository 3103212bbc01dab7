"""Progressive per-branch decoding and the final cross-modal fusion."""
from __future__ import annotations

import torch
from torch import nn
import torch.nn.functional as F

from .gma import check_unit_interval

FUSION_MODES = ("multiply", "concat", "sum")
DECODE_STAGES = (5, 4, 3, 2)


def upsample_to(x: torch.Tensor, ref_or_size) -> torch.Tensor:
    size = tuple(ref_or_size.shape[-2:]) if isinstance(ref_or_size, torch.Tensor) else tuple(ref_or_size)
    if tuple(x.shape[-2:]) == size:
        return x
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


def conv_bn(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(nn.Conv2d(cin, cout, 3, padding=1, bias=False), nn.BatchNorm2d(cout))


class MultiScaleFusion(nn.Module):
    """Fuse a coarse decoder feature into a finer encoder feature.

    In ``multiply`` mode each operand gates the other; ``concat`` and ``sum``
    are the ablation replacements for the two element-wise products.
    """

    def __init__(self, channels: int = 256, mode: str = "multiply"):
        super().__init__()
        if mode not in FUSION_MODES:
            raise ValueError(f"fusion mode must be one of {FUSION_MODES}, got {mode!r}")
        self.mode = mode
        self.channels = channels
        self.conv3 = conv_bn(channels, channels)
        self.conv4 = conv_bn(channels, channels)
        width = 4 * channels if mode == "concat" else 2 * channels
        self.conv5 = conv_bn(width, channels)

    def _combine(self, a, b):
        if self.mode == "multiply":
            return a * b
        if self.mode == "sum":
            return a + b
        return torch.cat([a, b], dim=1)

    def forward(self, high, low):
        if high.shape[1] != self.channels or low.shape[1] != self.channels:
            raise ValueError(
                f"expected {self.channels} channels, got high={high.shape[1]} low={low.shape[1]}"
            )
        f1 = F.relu(self._combine(upsample_to(self.conv3(high), low), low))
        f2 = F.relu(self._combine(self.conv4(low), upsample_to(high, low)))
        return F.relu(self.conv5(torch.cat([f1, f2], dim=1)))


class BranchDecoder(nn.Module):
    def __init__(self, channels: int = 256, mode: str = "multiply"):
        super().__init__()
        self.fuse = nn.ModuleDict({str(i): MultiScaleFusion(channels, mode) for i in (4, 3, 2)})

    def forward(self, feats: dict[int, torch.Tensor]) -> dict[int, torch.Tensor]:
        """``feats`` maps stage index (2..5) to the refined GMA feature."""
        missing = [i for i in DECODE_STAGES if i not in feats]
        if missing:
            raise ValueError(f"decoder is missing stage features {missing}")
        out = {5: feats[5]}
        for i in (4, 3, 2):
            out[i] = self.fuse[str(i)](out[i + 1], feats[i])
        return out


class MultiModalityFusion(nn.Module):
    """Channel-weighted, gated merge of the two finest decoder features into a
    one-channel saliency logit map."""

    def __init__(self, channels: int = 256):
        super().__init__()
        self.conv = conv_bn(2 * channels, channels)
        self.head = nn.Conv2d(channels, 1, 3, padding=1)

    @staticmethod
    def mix(rd2, dd2, alpha, g_hat):
        a = alpha[:, :, None, None]
        g = g_hat.view(-1, 1, 1, 1)
        f3 = a * rd2 + g * (1 - a) * dd2
        f4 = rd2 * dd2
        return f3, f4

    def forward(self, rd2, dd2, alpha, g_hat, out_size):
        if dd2 is None:
            # RGB-only network: no depth stream to mix in
            f3, f4 = rd2, torch.zeros_like(rd2)
        else:
            if rd2.shape != dd2.shape:
                raise ValueError(f"rd2 {tuple(rd2.shape)} and dd2 {tuple(dd2.shape)} differ")
            check_unit_interval("alpha", alpha)
            check_unit_interval("g_hat", g_hat)
            f3, f4 = self.mix(rd2, dd2, alpha, g_hat)
        f_sal = F.relu(self.conv(torch.cat([f3, f4], dim=1)))
        return upsample_to(self.head(f_sal), out_size)


class AuxHead(nn.Module):
    def __init__(self, channels: int = 256):
        super().__init__()
        self.conv = nn.Conv2d(channels, 1, 3, padding=1)

    def logit(self, x, out_size):
        return upsample_to(self.conv(x), out_size)

    def forward(self, x, out_size):
        return torch.sigmoid(self.logit(x, out_size))
