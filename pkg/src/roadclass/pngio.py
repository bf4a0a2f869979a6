"""PNG readers and writers for images, masks and confidence maps."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from PIL import Image

# Fixed so output bytes depend only on pixel content.
_COMPRESS_LEVEL = 6


def _save(im: Image.Image, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    try:
        im.save(tmp, format="PNG", compress_level=_COMPRESS_LEVEL)
        os.replace(tmp, path)
    except OSError as e:
        raise OSError(f"could not write {path}: {e}") from e


def write_rgb(path, img: np.ndarray) -> None:
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError("write_rgb expects an (H, W, 3) uint8 array")
    _save(Image.fromarray(img), path)


def read_rgb(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    except OSError as e:
        raise OSError(f"could not read image {path}: {e}") from e


def write_mask(path, mask: np.ndarray) -> None:
    """8-bit grayscale, {0, 255}."""
    data = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    _save(Image.fromarray(data), path)


def read_mask(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("L")) >= 128
    except OSError as e:
        raise OSError(f"could not read mask {path}: {e}") from e


def write_confidence(path, conf: np.ndarray) -> None:
    """16-bit grayscale, confidence scaled by 65535."""
    conf = np.asarray(conf, dtype=np.float64)
    if conf.size and (conf.min() < 0.0 or conf.max() > 1.0):
        raise ValueError("confidence values must lie in [0, 1]")
    data = np.round(conf * 65535.0).astype(np.uint16)
    _save(Image.fromarray(data), path)


def read_confidence(path) -> np.ndarray:
    """Read a confidence map as floats in [0, 1].

    16-bit files are divided by 65535; 8-bit files (binary masks included)
    by 255.
    """
    try:
        with Image.open(path) as im:
            mode = im.mode
            data = np.asarray(im)
    except OSError as e:
        raise OSError(f"could not read confidence map {path}: {e}") from e
    if data.ndim == 3:
        data = data[:, :, 0]
    if mode == "1":
        return data.astype(np.float64)
    if mode in ("L", "P"):
        return data.astype(np.float64) / 255.0
    return data.astype(np.float64) / 65535.0
