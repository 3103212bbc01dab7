"""Training objectives: per-map BCE, deep-supervision sum, gate regression."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import torch

BCE_EPS = 1e-7
DEFAULT_AUX_WEIGHTS = (1.0, 0.8, 0.6, 0.4, 1.0, 0.8, 0.6, 0.4)


@dataclass
class LossWeights:
    """``lambda_aux`` binds to (rd_5, rd_4, rd_3, rd_2, dd_5, dd_4, dd_3, dd_2)."""

    lambda_aux: tuple[float, ...] = DEFAULT_AUX_WEIGHTS
    lambda_reg: float = 1.0

    def __post_init__(self):
        self.lambda_aux = tuple(float(w) for w in self.lambda_aux)
        if len(self.lambda_aux) != 8:
            raise ValueError("need exactly 8 auxiliary loss weights")
        if min(self.lambda_aux) < 0 or self.lambda_reg < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class LossTerms:
    final: torch.Tensor
    dominant: torch.Tensor
    aux: torch.Tensor
    reg: torch.Tensor
    cls: torch.Tensor = field(init=False)

    def __post_init__(self):
        self.cls = self.dominant + self.aux


def bce_loss(pred: torch.Tensor, gt: torch.Tensor, eps: float = BCE_EPS) -> torch.Tensor:
    """Mean binary cross-entropy of a probability map against a binary mask."""
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {tuple(pred.shape)} and ground truth {tuple(gt.shape)} differ")
    s = pred.clamp(eps, 1.0 - eps)
    gt = gt.to(s.dtype)
    return -(gt * torch.log(s) + (1 - gt) * torch.log(1 - s)).mean()


def classification_loss(
    dominant: torch.Tensor,
    aux: Sequence[torch.Tensor],
    gt: torch.Tensor,
    weights: Sequence[float] = DEFAULT_AUX_WEIGHTS,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Return ``(dominant_loss, weighted_aux_sum)``."""
    if len(aux) != len(weights):
        raise ValueError(f"got {len(aux)} auxiliary maps for {len(weights)} weights")
    dom = bce_loss(dominant, gt)
    aux_sum = dom.new_zeros(())
    for w, a in zip(weights, aux):
        aux_sum = aux_sum + w * bce_loss(a, gt)
    return dom, aux_sum


def smooth_l1(g, g_hat) -> torch.Tensor:
    """Batch mean of the Huber-style loss with unit transition point."""
    g_hat = torch.as_tensor(g_hat)
    g = torch.as_tensor(g, dtype=g_hat.dtype)
    diff = (g - g_hat).abs()
    return torch.where(diff < 1, 0.5 * diff**2, diff - 0.5).mean()


def gate_bce(g, g_hat, threshold: float = 0.5) -> torch.Tensor:
    """Hard-manner gate loss: BCE against the pseudo label binarized at ``threshold``."""
    g_hat = torch.as_tensor(g_hat)
    target = (torch.as_tensor(g, dtype=g_hat.dtype) > threshold).to(g_hat.dtype)
    return bce_loss(g_hat, target)


def final_loss(cls, reg, lambda_reg: float = 1.0):
    if lambda_reg < 0:
        raise ValueError("lambda_reg must be non-negative")
    return cls + lambda_reg * reg
