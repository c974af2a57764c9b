"""Dataset ingestion: IDX (MNIST / Fashion-MNIST), CIFAR-10 binary batches,
resizing and class filtering. Pixels are floats in [0, 1]."""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

CACHE_ENV = "QDIFFUSION_DATA"
IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801
CIFAR_RECORD = 1 + 3 * 32 * 32
TARGET_SIZES = (8, 28, 32)


class DataFormatError(ValueError):
    pass


def cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV, Path.home() / ".cache" / "qdiffusion"))


def _read_idx(path) -> tuple[int, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise DataFormatError(f"{path}: truncated before the magic number at offset 0")
    (magic,) = struct.unpack_from(">I", raw, 0)
    if magic not in (IDX_IMAGES, IDX_LABELS):
        raise DataFormatError(f"{path}: bad magic 0x{magic:08x} at offset 0")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataFormatError(f"{path}: truncated header at offset {len(raw)}")
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    count = int(np.prod(dims))
    if len(raw) - header < count:
        raise DataFormatError(f"{path}: truncated data, expected {count} bytes after offset {header}")
    return magic, np.frombuffer(raw, dtype=np.uint8, count=count, offset=header).reshape(dims)


def load_idx(images_path, labels_path=None):
    """Parse an IDX image file (and optionally its label file).

    Returns ``(images, labels)``: float images ``(N, H, W)`` in [0, 1] and an
    int label array (``None`` without a label file).
    """
    magic, raw = _read_idx(images_path)
    if magic != IDX_IMAGES:
        raise DataFormatError(f"{images_path}: magic 0x{magic:08x} is not an image file")
    images = raw.astype(float) / 255.0
    labels = None
    if labels_path is not None:
        lmagic, lab = _read_idx(labels_path)
        if lmagic != IDX_LABELS:
            raise DataFormatError(f"{labels_path}: magic 0x{lmagic:08x} is not a label file")
        if len(lab) != len(images):
            raise DataFormatError(f"{len(images)} images but {len(lab)} labels")
        labels = lab.astype(int)
    return images, labels


def write_idx(path, array) -> None:
    """Write uint8 data as IDX (3-D images or 1-D labels)."""
    a = np.asarray(array, dtype=np.uint8)
    magic = IDX_IMAGES if a.ndim == 3 else IDX_LABELS
    if a.ndim not in (1, 3):
        raise ValueError("IDX writer handles image stacks and label vectors only")
    Path(path).write_bytes(struct.pack(f">I{a.ndim}I", magic, *a.shape) + a.tobytes())


def load_cifar_batch(path, grayscale: bool = True):
    """CIFAR-10 binary batch: records of one label byte then 3072 pixel
    bytes (R, G, B planes, row-major 32x32)."""
    raw = np.frombuffer(Path(path).read_bytes(), dtype=np.uint8)
    if raw.size % CIFAR_RECORD:
        raise DataFormatError(f"{path}: {raw.size} bytes is not a whole number of records")
    rec = raw.reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0].astype(int)
    rgb = rec[:, 1:].reshape(-1, 3, 32, 32).astype(float) / 255.0
    return (to_gray(rgb, channel_axis=1) if grayscale else rgb), labels


def to_gray(images, channel_axis: int = -1) -> np.ndarray:
    """Channel mean."""
    return np.asarray(images, dtype=float).mean(axis=channel_axis)


def area_weights(src: int, dst: int) -> np.ndarray:
    """``(dst, src)`` box-filter weights: output bin i averages the source
    interval ``[i*src/dst, (i+1)*src/dst)`` with fractional overlaps."""
    edges = np.arange(dst + 1) * (src / dst)
    lo = np.maximum(edges[:-1, None], np.arange(src)[None])
    hi = np.minimum(edges[1:, None], np.arange(src)[None] + 1)
    return np.clip(hi - lo, 0, None) * (dst / src)


def resize(images, size: int) -> np.ndarray:
    """Area-average down, edge-replicate pad up, identity for equal size."""
    x = np.asarray(images, dtype=float)
    h, w = x.shape[-2:]
    if h != w:
        raise ValueError("square images only")
    if size == h:
        return x.copy()
    if size < h:
        a = area_weights(h, size)
        return a @ x @ a.T
    lo = (size - h) // 2
    pad = [(0, 0)] * (x.ndim - 2) + [(lo, size - h - lo)] * 2
    return np.pad(x, pad, mode="edge")


def preprocess(images, labels, target_size: int, classes=None, grayscale_average: bool = False):
    """Optional RGB-to-gray (channels last), class filtering, resizing."""
    if target_size not in TARGET_SIZES:
        raise ValueError(f"target size must be one of {TARGET_SIZES}")
    x = np.asarray(images, dtype=float)
    y = np.asarray(labels)
    if grayscale_average:
        x = to_gray(x)
    if classes is not None:
        keep = np.isin(y, list(classes))
        x, y = x[keep], y[keep]
    if len(x) == 0:
        raise ValueError("no images left after class filtering")
    return resize(x, target_size), y


def bundled_digits():
    """scikit-learn's bundled 8x8 handwritten digits, rescaled to [0, 1];
    an offline stand-in for downscaled MNIST."""
    from sklearn.datasets import load_digits

    d = load_digits()
    return d.images / 16.0, d.target.astype(int)


def load_dataset(source: str, path=None, labels_path=None, size: int = 8, classes=None, limit: int | None = None):
    """Load, preprocess and truncate a dataset named by ``source``:
    ``digits`` (bundled), ``idx`` or ``cifar``. Relative paths resolve
    against :func:`cache_dir`."""
    if source == "digits":
        x, y = bundled_digits()
        if size != 8:
            raise ValueError("the bundled digits are 8x8 only")
        if classes is not None:
            keep = np.isin(y, list(classes))
            x, y = x[keep], y[keep]
    else:
        if path is None:
            raise ValueError(f"source {source!r} needs a path")
        p = Path(path) if Path(path).is_absolute() else cache_dir() / path
        if source == "idx":
            lp = None
            if labels_path is not None:
                lp = Path(labels_path) if Path(labels_path).is_absolute() else cache_dir() / labels_path
            x, y = load_idx(p, lp)
            if y is None:
                y = np.zeros(len(x), dtype=int)
        elif source == "cifar":
            x, y = load_cifar_batch(p)
        else:
            raise ValueError(f"unknown data source {source!r}")
        x, y = preprocess(x, y, size, classes)
    if len(x) == 0:
        raise ValueError("no images left after class filtering")
    if limit is not None:
        x, y = x[:limit], y[:limit]
    return x, y
