"""Saliency evaluation: precision-recall curves, max F-measure, MAE, S-measure.

Predictions are real maps in [0, 1] (or ``uint8`` maps in [0, 255]); they are
quantized to 256 levels and binarized with ``level > t`` for ``t = 0..255``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

EPS = np.spacing(1)
N_LEVELS = 256


class EmptyGroundTruthError(ValueError):
    """Raised for curve-based metrics on a ground truth with no foreground."""


@dataclass
class PrCurve:
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray


@dataclass
class SampleScores:
    sample_id: str
    max_f: float | None
    mae: float
    s_measure: float | None
    g_hat: float | None = None

    @property
    def excluded(self) -> bool:
        return self.max_f is None


@dataclass
class EvalReport:
    max_f: float
    mae: float
    s_measure: float
    precision: np.ndarray
    recall: np.ndarray
    f_curve: np.ndarray
    samples: list[SampleScores] = field(default_factory=list)

    @property
    def n_excluded(self) -> int:
        return sum(s.excluded for s in self.samples)


def to_levels(pred: np.ndarray) -> np.ndarray:
    pred = np.asarray(pred)
    if pred.dtype == np.uint8:
        return pred
    return np.clip(np.rint(pred.astype(np.float64) * 255.0), 0, 255).astype(np.uint8)


def to_unit(pred: np.ndarray) -> np.ndarray:
    pred = np.asarray(pred)
    if pred.dtype == np.uint8:
        return pred.astype(np.float64) / 255.0
    return pred.astype(np.float64)


def _check_shapes(pred, gt):
    if np.shape(pred) != np.shape(gt):
        raise ValueError(f"prediction {np.shape(pred)} and ground truth {np.shape(gt)} differ")


def pr_curve(pred: np.ndarray, gt: np.ndarray) -> PrCurve:
    _check_shapes(pred, gt)
    levels = to_levels(pred).ravel()
    gt = np.asarray(gt).astype(bool).ravel()
    n_fg = int(gt.sum())
    if n_fg == 0:
        raise EmptyGroundTruthError("ground truth has no foreground pixels")
    fg_hist = np.bincount(levels[gt], minlength=N_LEVELS)
    bg_hist = np.bincount(levels[~gt], minlength=N_LEVELS)
    # positives at threshold t are the pixels with level > t
    tp = n_fg - np.cumsum(fg_hist)
    fp = bg_hist.sum() - np.cumsum(bg_hist)
    predicted = tp + fp
    precision = np.where(predicted > 0, tp / np.maximum(predicted, 1), 1.0)
    recall = tp / n_fg
    return PrCurve(np.arange(N_LEVELS), precision.astype(np.float64), recall.astype(np.float64))


def f_measure_curve(precision: np.ndarray, recall: np.ndarray, beta_sq: float = 0.3) -> np.ndarray:
    p = np.asarray(precision, dtype=np.float64)
    r = np.asarray(recall, dtype=np.float64)
    den = beta_sq * p + r
    safe = np.where(den > 0, den, 1.0)
    return np.where(den > 0, (1 + beta_sq) * p * r / safe, 0.0)


def max_f_measure(curve: PrCurve, beta_sq: float = 0.3) -> float:
    return float(f_measure_curve(curve.precision, curve.recall, beta_sq).max())


def mae(pred: np.ndarray, gt: np.ndarray) -> float:
    _check_shapes(pred, gt)
    return float(np.mean(np.abs(to_unit(pred) - np.asarray(gt, dtype=np.float64))))


def _object_score(x: np.ndarray) -> float:
    if x.size == 0:
        return 0.0
    mean = x.mean()
    std = x.std(ddof=1) if x.size > 1 else 0.0
    return 2.0 * mean / (mean**2 + 1.0 + std + EPS)


def s_object(pred: np.ndarray, gt: np.ndarray) -> float:
    """Object-aware term: foreground and background distributions compared
    separately and weighted by the foreground area."""
    u = gt.mean()
    o_fg = _object_score(pred[gt])
    o_bg = _object_score(1.0 - pred[~gt])
    return float(u * o_fg + (1 - u) * o_bg)


def _round_half_up(v: float) -> int:
    return int(np.floor(v + 0.5))


def _centroid(gt: np.ndarray) -> tuple[int, int]:
    """1-based (x, y) foreground centroid; used as exclusive split indices."""
    h, w = gt.shape
    if not gt.any():
        return _round_half_up(w / 2), _round_half_up(h / 2)
    rows, cols = np.nonzero(gt)
    return _round_half_up(cols.mean() + 1), _round_half_up(rows.mean() + 1)


def _ssim(pred: np.ndarray, gt: np.ndarray) -> float:
    n = pred.size
    if n == 0:
        return 0.0
    x, y = pred.mean(), gt.mean()
    sigma_x = np.sum((pred - x) ** 2) / (n - 1 + EPS)
    sigma_y = np.sum((gt - y) ** 2) / (n - 1 + EPS)
    sigma_xy = np.sum((pred - x) * (gt - y)) / (n - 1 + EPS)
    alpha = 4 * x * y * sigma_xy
    beta = (x**2 + y**2) * (sigma_x + sigma_y)
    if alpha != 0:
        return float(alpha / (beta + EPS))
    if beta == 0:
        return 1.0
    return 0.0


def s_region(pred: np.ndarray, gt: np.ndarray) -> float:
    """Region-aware term: SSIM of the four quadrants around the foreground
    centroid, weighted by quadrant area."""
    h, w = gt.shape
    x, y = _centroid(gt)
    area = h * w
    gt_f = gt.astype(np.float64)
    w1 = x * y / area
    w2 = (w - x) * y / area
    w3 = x * (h - y) / area
    w4 = 1.0 - w1 - w2 - w3
    quads = [
        (np.s_[:y, :x], w1),
        (np.s_[:y, x:], w2),
        (np.s_[y:, :x], w3),
        (np.s_[y:, x:], w4),
    ]
    return float(sum(wt * _ssim(pred[sl], gt_f[sl]) for sl, wt in quads if wt > 0))


def s_measure(pred: np.ndarray, gt: np.ndarray, alpha: float = 0.5) -> float:
    _check_shapes(pred, gt)
    pred = to_unit(pred)
    gt = np.asarray(gt).astype(bool)
    y = gt.mean()
    if y == 0:
        return float(1.0 - pred.mean())
    if y == 1:
        return float(pred.mean())
    score = alpha * s_object(pred, gt) + (1 - alpha) * s_region(pred, gt)
    return float(max(score, 0.0))


def evaluate_sample(sample_id: str, pred, gt, g_hat: float | None = None) -> tuple[SampleScores, PrCurve | None]:
    gt = np.asarray(gt).astype(bool)
    err = mae(pred, gt)
    if not gt.any():
        return SampleScores(sample_id, None, err, None, g_hat), None
    curve = pr_curve(pred, gt)
    return SampleScores(sample_id, max_f_measure(curve), err, s_measure(pred, gt), g_hat), curve


def evaluate_dataset(
    items: Iterable[tuple[str, np.ndarray, np.ndarray] | tuple[str, np.ndarray, np.ndarray, float | None]],
    beta_sq: float = 0.3,
) -> EvalReport:
    """Dataset-level scores.

    MAE and S-measure are per-sample means. Max F is taken over the
    dataset-mean precision and recall curves. Samples whose ground truth is
    empty count toward MAE only.
    """
    samples, curves = [], []
    for item in items:
        sample_id, pred, gt, *rest = item
        scores, curve = evaluate_sample(sample_id, pred, gt, rest[0] if rest else None)
        samples.append(scores)
        if curve is not None:
            curves.append(curve)
    if not samples:
        raise ValueError("nothing to evaluate")
    if curves:
        precision = np.mean([c.precision for c in curves], axis=0)
        recall = np.mean([c.recall for c in curves], axis=0)
        f_curve = f_measure_curve(precision, recall, beta_sq)
        max_f = float(f_curve.max())
        sm = float(np.mean([s.s_measure for s in samples if not s.excluded]))
    else:
        precision = recall = f_curve = np.full(N_LEVELS, np.nan)
        max_f = sm = float("nan")
    return EvalReport(
        max_f=max_f,
        mae=float(np.mean([s.mae for s in samples])),
        s_measure=sm,
        precision=precision,
        recall=recall,
        f_curve=f_curve,
        samples=samples,
    )
