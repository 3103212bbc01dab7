"""Central finite-difference gradient checks at toy sizes in double precision.

Each check builds a small module, reduces its output to a scalar with fixed
random weights, and compares autograd gradients against
``(f(x + eps) - f(x - eps)) / (2 eps)`` on a random subset of coordinates of
every input and parameter tensor. The relative error of a tensor is
``||analytic - numeric|| / max(||analytic||, ||numeric||)`` over its sampled
coordinates. A tensor whose gradient is too small for the check to resolve
(below ``resolution / tol``, where ``resolution`` is the roundoff of a central
difference of ``f``) is reported under ``unresolved`` with its absolute error
instead of a relative one. With ``kink_guard`` a coordinate whose left and
right one-sided slopes disagree is taken to straddle a relu kink, counted,
and left out.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import torch

from . import losses
from .decoder import FUSION_MODES, AuxHead, MultiModalityFusion, MultiScaleFusion
from .encoder import BackboneConfig, ToyBackbone
from .gma import GMA, CrossModalAttention, SpatialAttention
from .heads import AlphaHead, GateHead
from .network import DPANet, ModelConfig

DTYPE = torch.float64
DEFAULT_TOL = 1e-4


@dataclass
class GradCheckResult:
    name: str
    per_tensor: dict[str, float]
    unresolved: dict[str, float] = field(default_factory=dict)
    kinks: int = 0

    @property
    def max_rel_error(self) -> float:
        return max(self.per_tensor.values()) if self.per_tensor else 0.0

    def passed(self, tol: float = DEFAULT_TOL) -> bool:
        return self.max_rel_error < tol


def check_gradients(
    fn: Callable[[], torch.Tensor],
    tensors: dict[str, torch.Tensor],
    eps: float = 1e-5,
    max_coords: int = 24,
    seed: int = 0,
    name: str = "",
    floor: float = 1e-10,
    tol: float = DEFAULT_TOL,
    kink_guard: bool = False,
) -> GradCheckResult:
    """Compare autograd against central differences for ``fn`` w.r.t. ``tensors``."""
    names = list(tensors)
    leaves = [tensors[n] for n in names]
    value = fn()
    analytic = torch.autograd.grad(value, leaves, allow_unused=True)
    step_noise = abs(value.item()) * torch.finfo(value.dtype).eps / eps
    gen = torch.Generator().manual_seed(seed)
    f0 = value.item()
    per_tensor, unresolved, kinks = {}, {}, 0
    with torch.no_grad():
        for n, t, a in zip(names, leaves, analytic):
            a = torch.zeros_like(t) if a is None else a
            flat = t.view(-1)
            k = min(max_coords, flat.numel())
            idx = torch.randperm(flat.numel(), generator=gen)[:k]
            num = torch.empty(k, dtype=t.dtype)
            keep = torch.ones(k, dtype=torch.bool)
            for j, i in enumerate(idx.tolist()):
                orig = flat[i].item()
                flat[i] = orig + eps
                f_plus = fn().item()
                flat[i] = orig - eps
                f_minus = fn().item()
                flat[i] = orig
                num[j] = (f_plus - f_minus) / (2 * eps)
                if kink_guard:
                    right, left = (f_plus - f0) / eps, (f0 - f_minus) / eps
                    if abs(right - left) > 1e-2 * max(abs(right), abs(left)) + 10 * step_noise:
                        keep[j] = False
            kinks += int((~keep).sum())
            idx, num = idx[keep], num[keep]
            k = len(idx)
            if k == 0:
                continue
            ana = a.reshape(-1)[idx]
            err = (ana - num).norm().item()
            scale = max(ana.norm().item(), num.norm().item())
            if scale < step_noise * k**0.5 / tol:
                unresolved[n] = err
            else:
                per_tensor[n] = err / max(scale, floor)
    return GradCheckResult(name, per_tensor, unresolved, kinks)


def _leaf(gen, *shape, low=None, high=None):
    x = torch.randn(*shape, generator=gen, dtype=DTYPE)
    if low is not None:
        x = low + (high - low) * torch.rand(*shape, generator=gen, dtype=DTYPE)
    return x.requires_grad_(True)


def _module_check(name, module, inputs: dict[str, torch.Tensor], call, seed, **kw) -> GradCheckResult:
    module = module.to(DTYPE).train()
    gen = torch.Generator().manual_seed(seed + 1)
    with torch.no_grad():
        probe = call(module, **inputs)
    weights = torch.randn(probe.shape, generator=gen, dtype=DTYPE)

    def fn():
        return (call(module, **inputs) * weights).sum()

    tensors = dict(inputs)
    tensors.update({f"param.{n}": p for n, p in module.named_parameters()})
    return check_gradients(fn, tensors, name=name, seed=seed, **kw)


def run_all(seed: int = 0, max_coords: int = 24, include_network: bool = True) -> list[GradCheckResult]:
    """Gradient checks for every learnable building block and every loss."""
    torch.manual_seed(seed)
    g = torch.Generator().manual_seed(seed)
    c, h = 8, 4
    results = []
    kw = {"max_coords": max_coords}

    results.append(
        _module_check("spatial_attention", SpatialAttention(4, c), {"x": _leaf(g, 2, 4, h, h)},
                      lambda m, x: m(x), seed, **kw)
    )
    results.append(
        _module_check("cross_modal_attention", CrossModalAttention(c),
                      {"guide": _leaf(g, 2, c, h, h), "source": _leaf(g, 2, c, h, h)},
                      lambda m, guide, source: m(guide, source), seed, **kw)
    )

    def gma_call(m, rb, db, g_hat):
        out = m(rb, db, g_hat)
        return torch.cat([out.rf, out.df], dim=1)

    results.append(
        _module_check("gma", GMA(4, 6, c),
                      {"rb": _leaf(g, 2, 4, h, h), "db": _leaf(g, 2, 6, h, h),
                       "g_hat": _leaf(g, 2, low=0.2, high=0.8)},
                      gma_call, seed, **kw)
    )
    for mode in FUSION_MODES:
        results.append(
            _module_check(f"multi_scale_fuse[{mode}]", MultiScaleFusion(c, mode),
                          {"high": _leaf(g, 2, c, h // 2, h // 2), "low": _leaf(g, 2, c, h, h)},
                          lambda m, high, low: m(high, low), seed, **kw)
        )
    results.append(
        _module_check("multi_modality_fuse", MultiModalityFusion(c),
                      {"rd2": _leaf(g, 2, c, h, h), "dd2": _leaf(g, 2, c, h, h),
                       "alpha": _leaf(g, 2, c, low=0.1, high=0.9), "g_hat": _leaf(g, 2, low=0.2, high=0.8)},
                      lambda m, rd2, dd2, alpha, g_hat: m(rd2, dd2, alpha, g_hat, (2 * h, 2 * h)), seed, **kw)
    )
    results.append(
        _module_check("aux_head", AuxHead(c), {"x": _leaf(g, 2, c, h, h)},
                      lambda m, x: m(x, (2 * h, 2 * h)), seed, **kw)
    )
    top = {"rb5": _leaf(g, 2, c, 2, 2), "db5": _leaf(g, 2, c, 2, 2)}
    results.append(_module_check("gate_head", GateHead(c, c, 16), dict(top), lambda m, rb5, db5: m(rb5, db5), seed, **kw))
    results.append(_module_check("alpha_head", AlphaHead(c, c, c), dict(top), lambda m, rb5, db5: m(rb5, db5), seed, **kw))
    results.append(
        _module_check("toy_backbone", ToyBackbone((4, 4, 8, 8, 8)), {"x": _leaf(g, 2, 3, 32, 32)},
                      lambda m, x: torch.cat([f.flatten(1) for f in m(x)], dim=1), seed, **kw)
    )

    pred = _leaf(g, 2, 1, h, h, low=0.05, high=0.95)
    gt = (torch.rand(2, 1, h, h, generator=g) > 0.5).to(DTYPE)
    results.append(check_gradients(lambda: losses.bce_loss(pred, gt), {"pred": pred}, name="bce_loss", **kw))
    aux = [_leaf(g, 2, 1, h, h, low=0.05, high=0.95) for _ in range(8)]

    def cls_fn():
        dom, aux_sum = losses.classification_loss(pred, aux, gt)
        return dom + aux_sum

    results.append(
        check_gradients(cls_fn, {"dominant": pred, **{f"aux{i}": a for i, a in enumerate(aux)}},
                        name="classification_loss", **kw)
    )
    g_true = torch.tensor([0.1, 0.9, 0.4, 2.5], dtype=DTYPE)
    g_pred = torch.tensor([0.6, 0.2, 0.45, 0.3], dtype=DTYPE, requires_grad=True)
    results.append(check_gradients(lambda: losses.smooth_l1(g_true, g_pred), {"g_hat": g_pred}, name="smooth_l1", **kw))
    g_prob = _leaf(g, 4, low=0.1, high=0.9)
    results.append(
        check_gradients(lambda: losses.gate_bce(torch.tensor([0.2, 0.7, 0.9, 0.4]), g_prob), {"g_hat": g_prob},
                        name="gate_bce", **kw)
    )

    if include_network:
        results.append(network_check(seed=seed, max_coords=max(4, max_coords // 4)))
    return results


def _calibrate_norms(model: DPANet, gen) -> None:
    """Evaluate batch norms as fixed affine maps with shifts moved off zero.

    Train-mode normalization over a 2-sample batch at 1x1 resolution is nearly
    singular, and zero shifts park every unit of a collapsed activation on a
    relu kink; either breaks central differences.
    """
    with torch.no_grad():
        for bn in model.modules():
            if isinstance(bn, torch.nn.BatchNorm2d):
                bn.weight.copy_(1 + 0.2 * torch.randn(bn.weight.shape, generator=gen, dtype=DTYPE))
                bn.bias.copy_(0.5 * torch.randn(bn.bias.shape, generator=gen, dtype=DTYPE))
    model.eval()


def network_check(seed: int = 0, max_coords: int = 6, gate_mode: str = "soft") -> GradCheckResult:
    """Full forward + final loss, w.r.t. every parameter of a tiny network."""
    torch.manual_seed(seed)
    cfg = ModelConfig(
        backbone=BackboneConfig("toy", (4, 4, 8, 8, 8), 32), channels=8, gate_hidden=8, gate_mode=gate_mode
    )
    model = DPANet(cfg).to(DTYPE)
    g = torch.Generator().manual_seed(seed)
    rgb = torch.randn(2, 3, 32, 32, generator=g, dtype=DTYPE)
    depth = torch.randn(2, 3, 32, 32, generator=g, dtype=DTYPE)
    gt = (torch.rand(2, 1, 32, 32, generator=g) > 0.5).to(DTYPE)
    _calibrate_norms(model, g)
    g_label = torch.tensor([0.3, 0.8], dtype=DTYPE)

    def fn():
        out = model(rgb, depth, with_aux=True)
        dom, aux = losses.classification_loss(out.saliency, out.aux, gt)
        return losses.final_loss(dom + aux, losses.smooth_l1(g_label, out.g_hat))

    tensors = {n: p for n, p in model.named_parameters()}
    return check_gradients(fn, tensors, max_coords=max_coords, seed=seed, name="network", kink_guard=True)
