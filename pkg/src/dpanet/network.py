"""The full two-stream network: encoders, confidence heads, GMA stages 2-5,
branch decoders and the final fusion."""
from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from .decoder import DECODE_STAGES, FUSION_MODES, AuxHead, BranchDecoder, MultiModalityFusion
from .encoder import BackboneConfig, build_backbone, encode_branch
from .gma import GMA, GmaOutput
from .heads import AlphaHead, GateHead

GATE_MODES = ("soft", "hard", "off")
GMA_STAGES = (2, 3, 4, 5)


@dataclass
class ModelConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    channels: int = 256
    gate_hidden: int = 512
    fusion_mode: str = "multiply"
    gate_mode: str = "soft"
    depth_branch: bool = True

    def __post_init__(self):
        if isinstance(self.backbone, dict):
            self.backbone = BackboneConfig(**self.backbone)
        if self.fusion_mode not in FUSION_MODES:
            raise ValueError(f"fusion_mode must be one of {FUSION_MODES}")
        if self.gate_mode not in GATE_MODES:
            raise ValueError(f"gate_mode must be one of {GATE_MODES}")
        if self.channels < 8 or self.channels % 8:
            raise ValueError("decoder channels must be a positive multiple of 8")

    @property
    def uses_gate_head(self) -> bool:
        return self.depth_branch and self.gate_mode != "off"

    @property
    def n_aux(self) -> int:
        return 8 if self.depth_branch else 4


@dataclass
class NetworkOutput:
    saliency: torch.Tensor
    logits: torch.Tensor
    aux: list[torch.Tensor]
    g_hat: torch.Tensor
    g_logit: torch.Tensor | None
    alpha: torch.Tensor | None
    gma: dict[int, GmaOutput]
    rd: dict[int, torch.Tensor]
    dd: dict[int, torch.Tensor] | None


class DPANet(nn.Module):
    def __init__(self, cfg: ModelConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg or ModelConfig()
        chans = cfg.backbone.stage_channels
        c = cfg.channels
        self.rgb = build_backbone(cfg.backbone)
        if cfg.depth_branch:
            self.depth = build_backbone(cfg.backbone)
            if cfg.uses_gate_head:
                self.gate_head = GateHead(chans[4], chans[4], cfg.gate_hidden)
            self.alpha_head = AlphaHead(chans[4], chans[4], c)
            self.depth_decoder = BranchDecoder(c, cfg.fusion_mode)
        self.gma = nn.ModuleDict(
            {str(i): GMA(chans[i - 1], chans[i - 1], c, use_depth=cfg.depth_branch) for i in GMA_STAGES}
        )
        self.rgb_decoder = BranchDecoder(c, cfg.fusion_mode)
        self.fusion = MultiModalityFusion(c)
        self.aux_heads = nn.ModuleList(AuxHead(c) for _ in range(cfg.n_aux))

    def backbone_parameters(self):
        yield from self.rgb.parameters()
        if self.cfg.depth_branch:
            yield from self.depth.parameters()

    def other_parameters(self):
        backbone = {id(p) for p in self.backbone_parameters()}
        return (p for p in self.parameters() if id(p) not in backbone)

    def forward(self, rgb, depth=None, with_aux: bool | None = None) -> NetworkOutput:
        """``rgb`` and ``depth`` are ``(B, 3, H, W)`` normalized batches.

        Auxiliary maps are computed in training mode only unless ``with_aux``
        says otherwise.
        """
        cfg = self.cfg
        with_aux = self.training if with_aux is None else with_aux
        out_size = rgb.shape[-2:]
        rb = encode_branch(rgb, self.rgb)
        b = rgb.shape[0]

        g_logit = alpha = None
        if cfg.depth_branch:
            if depth is None or depth.shape != rgb.shape:
                raise ValueError("depth batch must match the rgb batch shape")
            db = encode_branch(depth, self.depth)
            alpha = self.alpha_head(rb[5], db[5])
            if cfg.uses_gate_head:
                g_logit = self.gate_head.logit(rb[5], db[5])
                g_hat = torch.sigmoid(g_logit)
            else:
                g_hat = rgb.new_ones(b)
        else:
            db = None
            g_hat = rgb.new_ones(b)

        gma = {}
        for i in GMA_STAGES:
            try:
                gma[i] = self.gma[str(i)](rb[i], db[i] if db is not None else None, g_hat)
            except (ValueError, RuntimeError) as exc:
                raise type(exc)(f"GMA stage {i}: {exc}") from exc

        rd = self.rgb_decoder({i: gma[i].rf for i in GMA_STAGES})
        dd = self.depth_decoder({i: gma[i].df for i in GMA_STAGES}) if cfg.depth_branch else None
        logits = self.fusion(rd[2], dd[2] if dd is not None else None, alpha, g_hat, out_size)

        aux = []
        if with_aux:
            feats = [rd[i] for i in DECODE_STAGES]
            if dd is not None:
                feats += [dd[i] for i in DECODE_STAGES]
            aux = [head(f, out_size) for head, f in zip(self.aux_heads, feats)]

        return NetworkOutput(
            saliency=torch.sigmoid(logits),
            logits=logits,
            aux=aux,
            g_hat=g_hat,
            g_logit=g_logit,
            alpha=alpha,
            gma=gma,
            rd=rd,
            dd=dd,
        )


def network_forward(rgb, depth, model: DPANet, with_aux: bool | None = None) -> NetworkOutput:
    return model(rgb, depth, with_aux=with_aux)
