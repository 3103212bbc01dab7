"""Figure files for evaluation reports, training logs and intermediate maps.

Everything renders with the non-interactive Agg backend and is written to
disk; nothing opens a window.
"""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .imaging import save_png, to_uint8  # noqa: E402

GOLDEN = (5 ** 0.5 - 1) / 2


def figure(width: float = 5.0, height: float | None = None):
    fig, ax = plt.subplots(figsize=(width, height or width * GOLDEN))
    return fig, ax


def save_figure(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_pr_curves(curves: Mapping[str, tuple[np.ndarray, np.ndarray]], path) -> Path:
    """``curves`` maps a label to ``(precision, recall)`` over the thresholds."""
    fig, ax = figure()
    for label, (precision, recall) in curves.items():
        ax.plot(recall, precision, label=label)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower left")
    return save_figure(fig, path)


def plot_f_curves(curves: Mapping[str, np.ndarray], path) -> Path:
    """F-measure against the 8-bit binarization threshold."""
    fig, ax = figure()
    for label, f in curves.items():
        ax.plot(np.arange(len(f)), f, label=f"{label} (max {np.max(f):.3f})")
    ax.set_xlabel("threshold")
    ax.set_ylabel("F-measure")
    ax.set_xlim(0, 255)
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower center")
    return save_figure(fig, path)


def plot_loss(rows: Sequence[Mapping[str, float]], path, keys=("l_final", "l_dom", "l_aux", "l_reg")) -> Path:
    """Training-log curves on a log scale."""
    fig, ax = figure()
    it = [r["iter"] for r in rows]
    for key in keys:
        values = np.array([r[key] for r in rows], dtype=float)
        if np.any(values > 0):
            ax.plot(it, np.where(values > 0, values, np.nan), label=key, lw=1)
    ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.grid(alpha=0.3, which="both")
    ax.legend()
    return save_figure(fig, path)


def plot_dp_hist(scores: Sequence[float], path, bins: int = 20) -> Path:
    fig, ax = figure()
    ax.hist(np.asarray(scores, dtype=float), bins=bins, range=(0, 1), color="0.4", edgecolor="white")
    ax.axvline(float(np.mean(scores)), color="C3", lw=1.5, label=f"mean {np.mean(scores):.3f}")
    ax.set_xlabel("depth potentiality g")
    ax.set_ylabel("samples")
    ax.legend()
    return save_figure(fig, path)


def save_heatmap(values: np.ndarray, path) -> Path:
    """Min-max scale a 2-D array into an 8-bit grayscale PNG."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    unit = (values - lo) / (hi - lo) if hi > lo else np.zeros_like(values)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_png(path, to_uint8(unit))
    return path


def dump_intermediates(gma: Mapping, out_dir, channels: int = 4) -> list[Path]:
    """Write the first ``channels`` slices of every GMA tensor of sample 0.

    Files are named ``stage<i>_<tensor>_c<k>.png``.
    """
    out_dir = Path(out_dir)
    written = []
    for stage, out in sorted(gma.items()):
        for name in ("rb_att", "db_att", "f_dr", "f_rd", "rf", "df"):
            t = getattr(out, name)
            if t is None:
                continue
            t = t.detach()[0].double().numpy()
            for k in range(min(channels, t.shape[0])):
                written.append(save_heatmap(t[k], out_dir / f"stage{stage}_{name}_c{k}.png"))
    return written
