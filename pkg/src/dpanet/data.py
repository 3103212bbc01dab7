"""Dataset ingestion, joint augmentation, batching, and synthetic data."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from . import imaging
from .depth_potentiality import DEFAULT_GAMMA, DepthPotentialityLabel, depth_label
from .encoder import depth_to_3ch

DATA_ROOT_ENV = "DPANET_DATA_ROOT"
SUBDIRS = ("rgb", "depth", "gt")
SCALES = (0.75, 1.0, 1.25)
LABEL_CACHE = "dp_labels.csv"
DEPTH_MEAN = (0.5, 0.5, 0.5)
DEPTH_STD = (0.25, 0.25, 0.25)


class DatasetError(ValueError):
    pass


@dataclass
class RgbdSample:
    stem: str
    rgb: np.ndarray  # (H, W, 3) uint8
    depth: np.ndarray  # (H, W) uint8, larger = closer
    gt: np.ndarray  # (H, W) uint8 in {0, 1}
    label: DepthPotentialityLabel | None = None


@dataclass
class DatasetSpec:
    root: str
    split: str = "train"
    invert_depth: bool = False
    list_file: str | None = None
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if self.split not in ("train", "val", "test"):
            raise DatasetError(f"unknown split {self.split!r}")


def resolve_root(path: str | None) -> str:
    """Relative dataset paths are taken under ``$DPANET_DATA_ROOT`` when set."""
    if path is None:
        path = os.environ.get(DATA_ROOT_ENV)
        if not path:
            raise DatasetError(f"no dataset given and ${DATA_ROOT_ENV} is unset")
        return path
    base = os.environ.get(DATA_ROOT_ENV)
    if base and not os.path.isabs(path) and not os.path.exists(path):
        return os.path.join(base, path)
    return path


def index_folder(folder: Path) -> dict[str, Path]:
    if not folder.is_dir():
        raise DatasetError(f"missing directory {folder}")
    out = {}
    for p in folder.iterdir():
        if p.suffix.lower() in imaging.IMAGE_EXTENSIONS:
            out[p.stem] = p
    return out


def list_stems(spec: DatasetSpec) -> tuple[list[str], dict[str, dict[str, Path]]]:
    root = Path(spec.root)
    files = {sub: index_folder(root / sub) for sub in SUBDIRS}
    stems = set().union(*(f.keys() for f in files.values()))
    if spec.list_file:
        wanted = [s.strip() for s in Path(spec.list_file).read_text().splitlines() if s.strip()]
        stems = set(wanted)
    for stem in sorted(stems):
        for sub in SUBDIRS:
            if stem not in files[sub]:
                raise DatasetError(f"sample {stem!r} has no {sub}/ counterpart")
    if not stems:
        raise DatasetError(f"dataset at {root} is empty")
    return sorted(stems), files


def _read_label_cache(path: Path, spec: DatasetSpec) -> dict[str, DepthPotentialityLabel]:
    if not path.is_file():
        return {}
    with open(path, newline="") as fh:
        header = fh.readline().strip()
        if header != _cache_header(spec):
            return {}
        rows = csv.DictReader(fh)
        return {
            r["sample_id"]: DepthPotentialityLabel(float(r["d_iou"]), float(r["d_cov"]), float(r["g"]), spec.gamma)
            for r in rows
        }


def _cache_header(spec: DatasetSpec) -> str:
    return f"# gamma={spec.gamma!r} invert_depth={spec.invert_depth}"


def write_label_csv(path, ids: Sequence[str], labels: Sequence[DepthPotentialityLabel], header: str | None = None):
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header + "\n")
        w = csv.writer(fh)
        w.writerow(["sample_id", "d_iou", "d_cov", "g"])
        for sid, lab in zip(ids, labels):
            w.writerow([sid, repr(lab.d_iou), repr(lab.d_cov), repr(lab.g)])


def load_sample(files: dict[str, dict[str, Path]], stem: str, invert_depth: bool = False) -> RgbdSample:
    rgb = imaging.load_rgb(files["rgb"][stem])
    depth = imaging.load_gray(files["depth"][stem])
    gt = imaging.load_mask(files["gt"][stem])
    if invert_depth:
        depth = imaging.invert_depth(depth)
    if not (rgb.shape[:2] == depth.shape == gt.shape):
        raise DatasetError(
            f"sample {stem!r} planes differ in size: rgb {rgb.shape[:2]}, depth {depth.shape}, gt {gt.shape}"
        )
    return RgbdSample(stem, rgb, depth, gt)


def load_dataset(spec: DatasetSpec, cache_labels: bool = True) -> list[RgbdSample]:
    """Load every stem-matched (rgb, depth, gt) triple in stem order.

    Training splits get their depth potentiality pseudo labels attached; they
    are cached in ``dp_labels.csv`` under the dataset root.
    """
    stems, files = list_stems(spec)
    samples = [load_sample(files, s, spec.invert_depth) for s in stems]
    if spec.split == "train":
        cache_path = Path(spec.root) / LABEL_CACHE
        cached = _read_label_cache(cache_path, spec) if cache_labels else {}
        dirty = False
        for s in samples:
            s.label = cached.get(s.stem)
            if s.label is None:
                s.label = depth_label(s.depth, s.gt, spec.gamma)
                dirty = True
        if cache_labels and dirty:
            try:
                write_label_csv(cache_path, [s.stem for s in samples], [s.label for s in samples], _cache_header(spec))
            except OSError:
                pass  # read-only dataset; labels stay in memory
    return samples


def resize_sample(sample: RgbdSample, size: int) -> RgbdSample:
    """Resize all planes to ``size x size``; the mask is re-binarized at 0.5."""
    gt = imaging.resize_bilinear(sample.gt.astype(np.float64), size, size)
    return replace(
        sample,
        rgb=imaging.resize_bilinear(sample.rgb, size, size),
        depth=imaging.resize_bilinear(sample.depth, size, size),
        gt=(gt >= 0.5).astype(np.uint8),
    )


def _scale_crop(plane: np.ndarray, scaled: int, size: int, oy: int, ox: int, is_mask: bool) -> np.ndarray:
    if is_mask:
        out = imaging.resize_bilinear(plane.astype(np.float64), scaled, scaled)
        out = (out >= 0.5).astype(np.uint8)
    else:
        out = imaging.resize_bilinear(plane, scaled, scaled)
    if scaled >= size:
        return np.ascontiguousarray(out[oy : oy + size, ox : ox + size])
    canvas = np.zeros((size, size) + plane.shape[2:], dtype=plane.dtype)
    canvas[oy : oy + scaled, ox : ox + scaled] = out
    return canvas


def augment(sample: RgbdSample, rng: np.random.Generator, scales: Sequence[float] = SCALES) -> RgbdSample:
    """Random joint flip and multi-scale resize with crop/pad back to size.

    ``sample`` must already be square; the same transform hits all planes.
    """
    size = sample.gt.shape[0]
    flip = rng.random() < 0.5
    scale = float(scales[rng.integers(len(scales))])
    scaled = max(1, int(round(size * scale)))
    slack = abs(scaled - size)
    oy, ox = (int(v) for v in rng.integers(0, slack + 1, size=2))
    planes = {"rgb": sample.rgb, "depth": sample.depth, "gt": sample.gt}
    if flip:
        planes = {k: imaging.flip_horizontal(v) for k, v in planes.items()}
    if scaled != size:
        planes = {k: _scale_crop(v, scaled, size, oy, ox, k == "gt") for k, v in planes.items()}
    return replace(sample, **planes)


def sample_tensors(sample: RgbdSample) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Network inputs for one sample: normalized rgb, replicated normalized depth, mask."""
    rgb = torch.from_numpy(imaging.normalize(sample.rgb)).permute(2, 0, 1)
    depth = imaging.normalize(depth_to_3ch(sample.depth), DEPTH_MEAN, DEPTH_STD)
    depth = torch.from_numpy(depth).permute(2, 0, 1)
    gt = torch.from_numpy(sample.gt.astype(np.float32))[None]
    return rgb, depth, gt


def collate(samples: Sequence[RgbdSample]) -> dict[str, torch.Tensor]:
    rgbs, depths, gts = zip(*(sample_tensors(s) for s in samples))
    g = [s.label.g if s.label is not None else float("nan") for s in samples]
    return {
        "rgb": torch.stack(rgbs),
        "depth": torch.stack(depths),
        "gt": torch.stack(gts),
        "g": torch.tensor(g, dtype=torch.float32),
    }


def _object_mask(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[:size, :size].astype(np.float64)
    mask = np.zeros((size, size), dtype=bool)
    for _ in range(int(rng.integers(1, 4))):
        r = rng.uniform(size / 8, size / 5)
        cy, cx = rng.uniform(r, size - r, size=2)
        aspect = rng.uniform(0.6, 1.4)
        if rng.random() < 0.5:
            mask |= ((yy - cy) / r) ** 2 + ((xx - cx) / (r * aspect)) ** 2 <= 1
        else:
            mask |= (np.abs(yy - cy) <= r * 0.8) & (np.abs(xx - cx) <= r * 0.8 * aspect)
    if not mask.any():
        mask[size // 2, size // 2] = True
    return mask


def synth_sample(rng: np.random.Generator, size: int, corrupt: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One synthetic (rgb, depth, gt) triple.

    Objects are saturated colored shapes on a muted textured background.
    Clean depth puts objects well in front of a sloped background plane;
    corrupted depth is i.i.d. exponential speckle with no scene structure.
    """
    mask = _object_mask(rng, size)
    yy, xx = np.mgrid[:size, :size].astype(np.float64) / size

    base = rng.uniform(60, 140, size=3)
    tilt = rng.uniform(-30, 30, size=3)
    rgb = base + tilt * (yy[..., None] - 0.5) + rng.normal(0, 12, (size, size, 3))
    color = rng.uniform(0, 1, size=3)
    color = 40 + 215 * (color > 0.5) * rng.uniform(0.8, 1.0, size=3)
    if color.max() < 200:
        color[rng.integers(3)] = 240
    obj = color + rng.normal(0, 10, (size, size, 3))
    rgb = np.where(mask[..., None], obj, rgb)
    rgb = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)

    if corrupt:
        depth = np.minimum(rng.exponential(1.0, (size, size)) / 5.0, 1.0) * 255
    else:
        angle = rng.uniform(0, 2 * np.pi)
        ramp = np.cos(angle) * (xx - 0.5) + np.sin(angle) * (yy - 0.5)
        depth = 70 + 30 * ramp + rng.normal(0, 4, (size, size))
        near = rng.uniform(190, 235)
        depth = np.where(mask, near + 10 * ramp + rng.normal(0, 4, (size, size)), depth)
    depth = np.clip(np.rint(depth), 0, 255).astype(np.uint8)
    return rgb, depth, mask.astype(np.uint8)


def synth_dataset(
    root: str | os.PathLike,
    n: int,
    size: int = 64,
    seed: int = 0,
    corrupt_fraction: float = 0.0,
) -> list[str]:
    """Write ``n`` synthetic samples under ``root/{rgb,depth,gt}``.

    A ``meta.csv`` records which samples got corrupted depth. Output is
    byte-identical for identical arguments.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0.0 <= corrupt_fraction <= 1.0:
        raise ValueError("corrupt_fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    root = Path(root)
    n_corrupt = int(round(corrupt_fraction * n))
    flags = np.zeros(n, dtype=bool)
    flags[rng.permutation(n)[:n_corrupt]] = True
    stems = []
    for i in range(n):
        rgb, depth, gt = synth_sample(rng, size, bool(flags[i]))
        stem = f"{i:04d}"
        imaging.save_png(root / "rgb" / f"{stem}.png", rgb)
        imaging.save_png(root / "depth" / f"{stem}.png", depth)
        imaging.save_png(root / "gt" / f"{stem}.png", gt * 255)
        stems.append(stem)
    with open(root / "meta.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "corrupted"])
        for stem, flag in zip(stems, flags):
            w.writerow([stem, int(flag)])
    return stems


def synth_samples(n: int, size: int = 64, seed: int = 0, corrupt_fraction: float = 0.0, gamma: float = DEFAULT_GAMMA):
    """In-memory counterpart of :func:`synth_dataset`, labels attached."""
    rng = np.random.default_rng(seed)
    n_corrupt = int(round(corrupt_fraction * n))
    flags = np.zeros(n, dtype=bool)
    flags[rng.permutation(n)[:n_corrupt]] = True
    out = []
    for i in range(n):
        rgb, depth, gt = synth_sample(rng, size, bool(flags[i]))
        out.append(RgbdSample(f"{i:04d}", rgb, depth, gt, depth_label(depth, gt, gamma)))
    return out
