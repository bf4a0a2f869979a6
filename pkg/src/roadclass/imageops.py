"""Per-image transforms on ``(H, W, 3)`` uint8 RGB arrays and ``(H, W)`` masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import center_crop_rect

CHANNELS = {"R": 0, "G": 1, "B": 2}

OCCLUSION_MODES = ("none", "context_occluded", "road_occluded", "channel_replace")


@dataclass(frozen=True)
class CloudDecision:
    keep: bool
    band_means: tuple[float, float, float]
    threshold: float


def _check_image(img: np.ndarray) -> None:
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) RGB image, got shape {img.shape}")
    if img.dtype != np.uint8:
        raise ValueError(f"expected uint8 image, got {img.dtype}")


def _check_pair(img: np.ndarray, mask: np.ndarray) -> None:
    _check_image(img)
    if mask.shape != img.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match image {img.shape[:2]}")


def cloud_filter(img: np.ndarray, threshold: float = 150.0) -> CloudDecision:
    """Reject a tile only when every band mean is strictly above ``threshold``."""
    _check_image(img)
    means = tuple(float(m) for m in img.reshape(-1, 3).mean(axis=0, dtype=np.float64))
    reject = all(m > threshold for m in means)
    return CloudDecision(not reject, means, threshold)


def occlude(img: np.ndarray, mask: np.ndarray, mode: str) -> np.ndarray:
    """Zero the off-road pixels (``context_occluded``) or the road (``road_occluded``)."""
    _check_pair(img, mask)
    keep = np.asarray(mask, dtype=bool)
    if mode == "road_occluded":
        keep = ~keep
    elif mode != "context_occluded":
        raise ValueError(f"unknown occlusion mode {mode!r}")
    return img * keep[:, :, None].astype(np.uint8)


def replace_channel(img: np.ndarray, mask: np.ndarray, channel: str = "B") -> np.ndarray:
    _check_pair(img, mask)
    out = img.copy()
    out[:, :, CHANNELS[channel]] = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    return out


def apply_variant(img: np.ndarray, mask: np.ndarray, mode: str) -> np.ndarray:
    """Dispatch one of :data:`OCCLUSION_MODES`."""
    if mode == "none":
        _check_image(img)
        return img.copy()
    if mode == "channel_replace":
        return replace_channel(img, mask)
    return occlude(img, mask, mode)


def crop_center(arr: np.ndarray, target: int) -> np.ndarray:
    h, w = arr.shape[:2]
    if h != w:
        raise ValueError("center crop expects a square input")
    rect = center_crop_rect(h, target)
    return arr[rect.slices()].copy()


def downsize_box(img: np.ndarray, factor: int) -> np.ndarray:
    """Block-mean downsampling, rounding halves up."""
    if factor < 1 or int(factor) != factor:
        raise ValueError("factor must be a positive integer")
    h, w = img.shape[:2]
    if h % factor or w % factor:
        raise ValueError(f"factor {factor} does not divide {h}x{w}")
    if factor == 1:
        return img.copy()
    shape = (h // factor, factor, w // factor, factor) + img.shape[2:]
    sums = img.reshape(shape).sum(axis=(1, 3), dtype=np.int64)
    n = factor * factor
    return ((2 * sums + n) // (2 * n)).astype(img.dtype)


def downsize_mask(mask: np.ndarray, factor: int) -> np.ndarray:
    """Box-downsize a binary mask; a block is set when its rounded mean is >= 128."""
    scaled = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    return downsize_box(scaled, factor) >= 128


def rotate90(arr: np.ndarray, quarter_turns: int) -> np.ndarray:
    """Rotate clockwise by ``quarter_turns`` * 90 degrees."""
    if arr.shape[0] != arr.shape[1]:
        raise ValueError("rotate90 expects a square input")
    if quarter_turns not in (0, 1, 2, 3):
        raise ValueError("quarter_turns must be in 0..3")
    return np.ascontiguousarray(np.rot90(arr, k=-quarter_turns, axes=(0, 1)))


def binarize_confidence(conf: np.ndarray, threshold: float) -> np.ndarray:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    return np.asarray(conf) >= threshold


def prepare_geometry(
    img: np.ndarray, mask: np.ndarray, crop: int = 224, geometry: str = "crop"
) -> tuple[np.ndarray, np.ndarray]:
    """Bring a full tile and its full-resolution mask down to ``crop`` x ``crop``.

    ``crop`` center-crops directly. ``crop-downsize`` center-crops to the
    largest multiple of ``crop`` that fits and box-downsizes by that factor
    (1000 -> 896 -> 224).
    """
    if geometry == "crop":
        return crop_center(img, crop), crop_center(mask, crop)
    if geometry == "crop-downsize":
        factor = img.shape[0] // crop
        if factor < 1:
            raise ValueError(f"crop target {crop} exceeds size {img.shape[0]}")
        img = crop_center(img, crop * factor)
        mask = crop_center(mask, crop * factor)
        return downsize_box(img, factor), downsize_mask(mask, factor)
    raise ValueError(f"unknown geometry {geometry!r}")
