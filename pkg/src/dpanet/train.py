"""SGD training loop with warm-up / linear-decay schedule, plus inference helpers."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from . import metrics
from .checkpoint import (
    Checkpoint,
    load_backbone_archive,
    make_checkpoint,
    restore_model,
    restore_momentum,
    save_checkpoint,
)
from .config import TrainConfig
from .data import RgbdSample, augment, collate, resize_sample
from .depth_potentiality import depth_label
from .losses import LossTerms, classification_loss, final_loss, gate_bce, smooth_l1
from .network import DPANet, NetworkOutput

log = logging.getLogger(__name__)

LOG_COLUMNS = ("iter", "lr", "lr_backbone", "l_dom", "l_aux", "l_reg", "l_final")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainResult:
    model: DPANet
    checkpoint: Checkpoint
    log: list[dict] = field(default_factory=list)
    val_log: list[dict] = field(default_factory=list)

    @property
    def losses(self) -> list[float]:
        return [row["l_final"] for row in self.log]


def total_iterations(cfg: TrainConfig, n_samples: int) -> int:
    if cfg.max_iters:
        return cfg.max_iters
    return cfg.epochs * math.ceil(n_samples / cfg.batch_size)


def warmup_iterations(total: int, fraction: float) -> int:
    if fraction <= 0 or total < 2:
        return 0
    return min(max(1, int(round(fraction * total))), total - 1)


def lr_schedule(it: int, total: int, cfg: TrainConfig) -> tuple[float, float]:
    """Linear ramp from 0 to the maxima over the warm-up, then linear decay to 0 at ``total``."""
    if not 0 <= it < total:
        raise ValueError(f"iteration {it} outside [0, {total})")
    warm = warmup_iterations(total, cfg.warmup_fraction)
    if it < warm:
        factor = it / warm
    else:
        factor = (total - it) / (total - warm)
    return cfg.max_lr_backbone * factor, cfg.max_lr_other * factor


def build_model(cfg: TrainConfig) -> DPANet:
    torch.manual_seed(cfg.seed)
    model = DPANet(cfg.model_config())
    if cfg.pretrained:
        names = load_backbone_archive(model, cfg.pretrained)
        log.info("loaded %d backbone arrays from %s", len(names), cfg.pretrained)
    return model


def build_optimizer(model: DPANet, cfg: TrainConfig) -> torch.optim.SGD:
    return torch.optim.SGD(
        [
            {"params": list(model.backbone_parameters()), "name": "backbone"},
            {"params": list(model.other_parameters()), "name": "other"},
        ],
        lr=cfg.max_lr_other,
        momentum=cfg.momentum,
        weight_decay=cfg.weight_decay,
    )


def compute_losses(out: NetworkOutput, batch: dict, cfg: TrainConfig) -> LossTerms:
    weights = cfg.loss_weights
    n_aux = len(out.aux)
    dom, aux = classification_loss(out.saliency, out.aux, batch["gt"], weights.lambda_aux[:n_aux])
    if cfg.depth_branch and cfg.gate_mode == "soft":
        reg = smooth_l1(batch["g"], out.g_hat)
    elif cfg.depth_branch and cfg.gate_mode == "hard":
        reg = gate_bce(batch["g"], out.g_hat)
    else:
        reg = dom.new_zeros(())
    return LossTerms(final=final_loss(dom + aux, reg, weights.lambda_reg), dominant=dom, aux=aux, reg=reg)


def _prepare(samples: Sequence[RgbdSample], cfg: TrainConfig) -> list[RgbdSample]:
    out = []
    for s in samples:
        if s.label is None:
            s = RgbdSample(s.stem, s.rgb, s.depth, s.gt, depth_label(s.depth, s.gt, cfg.gamma))
        if s.gt.shape != (cfg.input_size, cfg.input_size):
            s = resize_sample(s, cfg.input_size)
        out.append(s)
    return out


def _write_log(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in LOG_COLUMNS})


def train(
    cfg: TrainConfig,
    dataset: Sequence[RgbdSample],
    val_dataset: Sequence[RgbdSample] | None = None,
    model: DPANet | None = None,
    resume: Checkpoint | None = None,
    on_iteration: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Train end to end; returns the model, a final checkpoint and the loss log.

    With ``cfg.deterministic`` the loss trace is a pure function of the config,
    the data and the seed.
    """
    if not dataset:
        raise ValueError("training dataset is empty")
    torch.use_deterministic_algorithms(cfg.deterministic, warn_only=True)
    samples = _prepare(dataset, cfg)
    val = _prepare(val_dataset, cfg) if val_dataset else []
    if model is None:
        model = build_model(cfg)
    optimizer = build_optimizer(model, cfg)
    start = 0
    if resume is not None:
        restore_model(model, resume)
        restore_momentum(model, optimizer, resume)
        start = resume.iteration

    rng = np.random.default_rng(cfg.seed)
    total = total_iterations(cfg, len(samples))
    out_dir = Path(cfg.out_dir) if cfg.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)

    rows, val_rows = [], []
    order: list[int] = []
    it = 0
    while it < total:
        if not order:
            order = list(rng.permutation(len(samples)))
        idx, order = order[: cfg.batch_size], order[cfg.batch_size :]
        if it < start:
            # replay the sampling stream so a resumed run sees the same batches
            if cfg.augment:
                for i in idx:
                    augment(samples[i], rng)
            it += 1
            continue
        lr_b, lr_o = lr_schedule(it, total, cfg)
        optimizer.param_groups[0]["lr"] = lr_b
        optimizer.param_groups[1]["lr"] = lr_o
        batch_samples = [augment(samples[i], rng) if cfg.augment else samples[i] for i in idx]
        batch = collate(batch_samples)

        model.train()
        out = model(batch["rgb"], batch["depth"] if cfg.depth_branch else None, with_aux=True)
        terms = compute_losses(out, batch, cfg)
        if not torch.isfinite(terms.final):
            raise TrainingDiverged(
                f"non-finite loss at iteration {it}: dom={terms.dominant.item()} "
                f"aux={terms.aux.item()} reg={terms.reg.item()}"
            )
        optimizer.zero_grad(set_to_none=True)
        terms.final.backward()
        optimizer.step()

        row = {
            "iter": it,
            "lr": lr_o,
            "lr_backbone": lr_b,
            "l_dom": terms.dominant.item(),
            "l_aux": terms.aux.item(),
            "l_reg": terms.reg.item(),
            "l_final": terms.final.item(),
        }
        rows.append(row)
        if on_iteration:
            on_iteration(row)
        it += 1
        if val and cfg.val_every and (it % cfg.val_every == 0 or it == total):
            rep = evaluate_model(model, val)
            val_rows.append({"iter": it, "max_f": rep.max_f, "mae": rep.mae, "s_measure": rep.s_measure})
            log.info("iter %d val max_f=%.4f mae=%.4f", it, rep.max_f, rep.mae)
        if out_dir and cfg.ckpt_every and it % cfg.ckpt_every == 0 and it < total:
            save_checkpoint(out_dir / f"ckpt_{it:06d}.npz", make_checkpoint(model, optimizer, it, cfg.to_dict()))

    ckpt = make_checkpoint(model, optimizer, total, cfg.to_dict())
    if out_dir:
        save_checkpoint(out_dir / "final.npz", ckpt)
        _write_log(out_dir / "train_log.csv", rows)
        if val_rows:
            with open(out_dir / "val_log.csv", "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=list(val_rows[0]))
                w.writeheader()
                w.writerows(val_rows)
    return TrainResult(model, ckpt, rows, val_rows)


@torch.no_grad()
def predict(model: DPANet, samples: Sequence[RgbdSample], batch_size: int = 8) -> tuple[list[np.ndarray], list[float]]:
    """Saliency maps in [0, 1] at network input size, plus the gate estimate per sample."""
    model.eval()
    size = model.cfg.backbone.input_size
    maps, gates = [], []
    for start in range(0, len(samples), batch_size):
        chunk = [s if s.gt.shape == (size, size) else resize_sample(s, size) for s in samples[start : start + batch_size]]
        batch = collate(chunk)
        out = model(batch["rgb"], batch["depth"] if model.cfg.depth_branch else None, with_aux=False)
        maps.extend(m[0].double().numpy() for m in out.saliency)
        gates.extend(float(g) for g in out.g_hat)
    return maps, gates


def evaluate_model(model: DPANet, samples: Sequence[RgbdSample]) -> metrics.EvalReport:
    size = model.cfg.backbone.input_size
    resized = [s if s.gt.shape == (size, size) else resize_sample(s, size) for s in samples]
    maps, gates = predict(model, resized)
    return metrics.evaluate_dataset((s.stem, m, s.gt, g) for s, m, g in zip(resized, maps, gates))
