"""Saliency-oriented depth quality pseudo labels.

A depth map is Otsu-binarized and compared against the ground-truth mask with
two overlap scores, IoU and coverage, which are merged F-measure style into a
single potentiality value ``g`` in [0, 1].
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .imaging import to_binary

DEFAULT_GAMMA = 0.3


@dataclass(frozen=True)
class DepthPotentialityLabel:
    d_iou: float
    d_cov: float
    g: float
    gamma: float = DEFAULT_GAMMA


@dataclass
class DpReport:
    mean_g: float
    labels: list[DepthPotentialityLabel]
    sample_ids: list[str]


def _between_class_terms(hist: np.ndarray) -> list[tuple[int, int]]:
    """Per-threshold between-class variance as an exact (numerator, denominator) pair.

    With ``n0`` pixels at or below ``t``, intensity sum ``s0``, and totals
    ``n``/``s``, the variance ``w0 * w1 * (mu0 - mu1)**2`` equals
    ``(n * s0 - n0 * s)**2 / (n**2 * n0 * n1)``. Python ints keep ties exact.
    """
    counts = [int(c) for c in hist]
    n = sum(counts)
    s = sum(level * c for level, c in enumerate(counts))
    terms = []
    n0 = s0 = 0
    for level, c in enumerate(counts):
        n0 += c
        s0 += level * c
        n1 = n - n0
        if n0 == 0 or n1 == 0:
            terms.append((0, 1))
        else:
            terms.append(((n * s0 - n0 * s) ** 2, n * n * n0 * n1))
    return terms


def otsu_threshold(depth: np.ndarray) -> int:
    """Threshold in [0, 255] maximizing between-class variance; smallest on ties.

    Pixels ``> t`` form the foreground class. A constant image has no split
    with positive variance; its own level is returned so that binarizing
    yields an empty mask.
    """
    depth = np.asarray(depth)
    if depth.size == 0:
        raise ValueError("empty image")
    if depth.min() < 0 or depth.max() > 255:
        raise ValueError("otsu_threshold expects 8-bit intensities")
    hist = np.bincount(depth.astype(np.int64).ravel(), minlength=256)
    terms = _between_class_terms(hist)
    best_t, (best_num, best_den) = 0, terms[0]
    for t in range(1, 256):
        num, den = terms[t]
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    if best_num == 0:
        return int(depth.max())
    return best_t


def binarize_depth(depth: np.ndarray) -> np.ndarray:
    return to_binary(depth, otsu_threshold(depth))


def _check_pair(pred: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    return pred, gt


def d_iou(pred: np.ndarray, gt: np.ndarray) -> float:
    pred, gt = _check_pair(pred, gt)
    union = np.count_nonzero(pred | gt)
    if union == 0:
        return 0.0
    return np.count_nonzero(pred & gt) / union


def d_cov(pred: np.ndarray, gt: np.ndarray) -> float:
    pred, gt = _check_pair(pred, gt)
    area = np.count_nonzero(gt)
    if area == 0:
        return 0.0
    return np.count_nonzero(pred & gt) / area


def combine(iou: float, cov: float, gamma: float = DEFAULT_GAMMA) -> float:
    """``(1 + gamma) * iou * cov / (iou + gamma * cov)``, zero when the numerator is."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    num = (1.0 + gamma) * iou * cov
    if num == 0:
        return 0.0
    return num / (iou + gamma * cov)


def dp_score(pred: np.ndarray, gt: np.ndarray, gamma: float = DEFAULT_GAMMA) -> DepthPotentialityLabel:
    iou = d_iou(pred, gt)
    cov = d_cov(pred, gt)
    return DepthPotentialityLabel(d_iou=iou, d_cov=cov, g=combine(iou, cov, gamma), gamma=gamma)


def depth_label(depth: np.ndarray, gt: np.ndarray, gamma: float = DEFAULT_GAMMA) -> DepthPotentialityLabel:
    """Pseudo label for one raw 8-bit depth map against its ground truth."""
    return dp_score(binarize_depth(depth), gt, gamma)


def dataset_dp_report(
    samples: Iterable[tuple[np.ndarray, np.ndarray]],
    gamma: float = DEFAULT_GAMMA,
    sample_ids: Sequence[str] | None = None,
) -> DpReport:
    labels = [depth_label(depth, gt, gamma) for depth, gt in samples]
    if not labels:
        raise ValueError("dataset_dp_report needs at least one sample")
    ids = list(sample_ids) if sample_ids is not None else [str(i) for i in range(len(labels))]
    if len(ids) != len(labels):
        raise ValueError("sample_ids length does not match the number of samples")
    mean_g = float(np.mean([lab.g for lab in labels]))
    return DpReport(mean_g=mean_g, labels=labels, sample_ids=ids)
