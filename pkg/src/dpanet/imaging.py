"""Image and mask primitives: loading, bilinear resizing, binarization, flips.

Gray images are ``(H, W)`` arrays, color images ``(H, W, 3)``. Integer mode is
``uint8`` in [0, 255]; real mode is any float array.
"""
from __future__ import annotations

import os
from typing import Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
GT_THRESHOLD = 127

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


class ImageDecodeError(ValueError):
    pass


def _open(path: str | os.PathLike) -> Image.Image:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such image: {path}")
    try:
        img = Image.open(path)
        img.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageDecodeError(f"cannot decode {path}: {exc}") from exc
    if img.width == 0 or img.height == 0:
        raise ImageDecodeError(f"zero-sized image: {path}")
    return img


def rescale_to_8bit(values: np.ndarray) -> np.ndarray:
    """Map a high bit-depth array onto [0, 255] by dividing by its maximum."""
    values = values.astype(np.float64)
    peak = values.max()
    if peak <= 0:
        return np.zeros(values.shape, dtype=np.uint8)
    return np.clip(np.rint(values * 255.0 / peak), 0, 255).astype(np.uint8)


def load_gray(path: str | os.PathLike) -> np.ndarray:
    """Load a single-channel image as ``uint8``.

    8-bit data is returned untouched; 16-bit and 32-bit integer or float data
    (typical for raw depth) is rescaled with :func:`rescale_to_8bit`.
    """
    img = _open(path)
    if img.mode in ("I;16", "I;16B", "I;16L", "I", "F"):
        return rescale_to_8bit(np.asarray(img))
    if img.mode != "L":
        img = img.convert("L")
    return np.asarray(img, dtype=np.uint8).copy()


def load_rgb(path: str | os.PathLike) -> np.ndarray:
    img = _open(path)
    if img.mode != "RGB":
        img = img.convert("RGB")
    return np.asarray(img, dtype=np.uint8).copy()


def load_mask(path: str | os.PathLike, threshold: int = GT_THRESHOLD) -> np.ndarray:
    """Load a ground-truth mask, binarized so antialiased edges don't leak in."""
    return to_binary(load_gray(path), threshold)


def save_png(path: str | os.PathLike, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise TypeError(f"save_png expects uint8 data, got {img.dtype}")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    Image.fromarray(img).save(path, format="PNG")


def to_uint8(values: np.ndarray) -> np.ndarray:
    """Quantize a [0, 1] real map to 8-bit, ``round(255 * v)``."""
    return np.clip(np.rint(np.asarray(values, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def _axis_weights(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel centers, the same sampling grid as torch's align_corners=False
    scale = n_in / n_out
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of a gray or color image.

    Integer input comes back rounded to the same dtype; real input stays real.
    Output values never leave the input's [min, max] range.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target size must be positive, got {out_h}x{out_w}")
    img = np.asarray(img)
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.copy()
    y0, y1, wy = _axis_weights(h, out_h)
    x0, x1, wx = _axis_weights(w, out_w)
    src = img.astype(np.float64)
    extra = (1,) * (img.ndim - 2)
    wy = wy.reshape((-1, 1) + extra)
    wx = wx.reshape((1, -1) + extra)
    top = src[y0][:, x0] * (1 - wx) + src[y0][:, x1] * wx
    bottom = src[y1][:, x0] * (1 - wx) + src[y1][:, x1] * wx
    out = np.clip(top * (1 - wy) + bottom * wy, src.min(), src.max())
    if np.issubdtype(img.dtype, np.integer):
        info = np.iinfo(img.dtype)
        return np.clip(np.rint(out), info.min, info.max).astype(img.dtype)
    return out.astype(img.dtype if np.issubdtype(img.dtype, np.floating) else np.float64)


def to_binary(img: np.ndarray, threshold: float) -> np.ndarray:
    """1 where ``img > threshold``, else 0, as ``uint8``."""
    return (np.asarray(img) > threshold).astype(np.uint8)


def flip_horizontal(img: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(img)[:, ::-1])


def invert_depth(depth: np.ndarray) -> np.ndarray:
    """Swap depth polarity on 8-bit maps so that larger means closer."""
    return (255 - np.asarray(depth, dtype=np.int16)).astype(np.uint8)


def normalize(
    img: np.ndarray,
    mean: Sequence[float] = IMAGENET_MEAN,
    std: Sequence[float] = IMAGENET_STD,
) -> np.ndarray:
    """Channel-wise ``(img / 255 - mean) / std`` in float32."""
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    if mean.shape != (3,) or std.shape != (3,):
        raise ValueError("mean and std need exactly 3 components")
    if np.any(std <= 0):
        raise ValueError(f"std components must be positive, got {std.tolist()}")
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) color image, got shape {img.shape}")
    return ((img / 255.0 - mean) / std).astype(np.float32)
