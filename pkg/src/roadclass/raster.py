"""Polyline -> thick binary road mask.

Masks are numpy ``bool`` arrays of shape ``(height, width)``; pixel pairs
are ``(x, y)`` = ``(column, row)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .geo import PixelPoint

Pixel = tuple[int, int]


@dataclass(frozen=True)
class Rect:
    """Half-open pixel rectangle ``[x0, x0+width) x [y0, y0+height)``."""

    x0: int
    y0: int
    width: int
    height: int

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x < self.x0 + self.width and self.y0 <= y < self.y0 + self.height

    def slices(self) -> tuple[slice, slice]:
        return slice(self.y0, self.y0 + self.height), slice(self.x0, self.x0 + self.width)


def _bresenham_canonical(x0: int, y0: int, x1: int, y1: int) -> list[Pixel]:
    dx = x1 - x0
    dy = y1 - y0
    if abs(dy) <= abs(dx):
        # x-major: step along x, accumulate error in y
        step = 1 if dy >= 0 else -1
        dy = abs(dy)
        err = 2 * dy - dx
        y = y0
        out = []
        for x in range(x0, x1 + 1):
            out.append((x, y))
            if err >= 0:
                y += step
                err -= 2 * dx
            err += 2 * dy
        return out
    # y-major: canonical order guarantees x0 <= x1 but not y0 <= y1
    ystep = 1 if dy > 0 else -1
    dy = abs(dy)
    err = 2 * dx - dy
    x = x0
    out = []
    y = y0
    for _ in range(dy + 1):
        out.append((x, y))
        if err >= 0:
            x += 1
            err -= 2 * dy
        err += 2 * dx
        y += ystep
    return out


def bresenham(p0: Pixel, p1: Pixel) -> list[Pixel]:
    """8-connected Bresenham line from ``p0`` to ``p1``, both endpoints included.

    The segment is always traced from its lexicographically smaller endpoint,
    so ``bresenham(b, a)`` is exactly ``bresenham(a, b)`` reversed.
    """
    a = (int(p0[0]), int(p0[1]))
    b = (int(p1[0]), int(p1[1]))
    if a <= b:
        return _bresenham_canonical(*a, *b)
    return _bresenham_canonical(*b, *a)[::-1]


def clip_points_to_crop(points: Iterable[PixelPoint], crop: Rect) -> list[Pixel]:
    """Drop points outside ``crop``; round survivors and make them crop-local."""
    out = []
    for p in points:
        x, y = (p.x, p.y) if isinstance(p, PixelPoint) else p
        if crop.contains(x, y):
            # round half up; floor keeps the result inside the crop
            xi = min(int(math.floor(x + 0.5)), crop.x0 + crop.width - 1)
            yi = min(int(math.floor(y + 0.5)), crop.y0 + crop.height - 1)
            out.append((xi - crop.x0, yi - crop.y0))
    return out


def rasterize_polyline(points: Sequence[Pixel], width: int, height: int) -> np.ndarray:
    mask = np.zeros((height, width), dtype=bool)
    bad = [i for i, (x, y) in enumerate(points) if not (0 <= x < width and 0 <= y < height)]
    if bad:
        raise ValueError(f"points out of bounds at indices {bad}")
    if len(points) == 1:
        x, y = points[0]
        mask[y, x] = True
    for a, b in zip(points, points[1:]):
        for x, y in bresenham(a, b):
            mask[y, x] = True
    return mask


@lru_cache(maxsize=64)
def disk_half_widths(radius: int) -> tuple[int, ...]:
    """Half-width of the Euclidean disk row at each dy in [-radius, radius]."""
    r2 = radius * radius
    return tuple(math.isqrt(r2 - dy * dy) for dy in range(-radius, radius + 1))


def _dilate_rows(mask: np.ndarray, w: int) -> np.ndarray:
    """Horizontal dilation by a segment of half-width ``w``."""
    if w == 0:
        return mask
    h, width = mask.shape
    dtype = np.int16 if width < np.iinfo(np.int16).max else np.int64
    csum = np.zeros((h, width + 2 * w + 1), dtype=dtype)
    np.cumsum(mask, axis=1, out=csum[:, w + 1 : w + 1 + width])
    csum[:, w + 1 + width :] = csum[:, w + width : w + 1 + width]
    return csum[:, 2 * w + 1 :] != csum[:, : width]


def dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Disk dilation: a pixel is set iff an input pixel lies within ``radius``.

    The disk is split into rows; each row is a horizontal segment dilation
    shifted vertically, so the result is exactly the brute-force definition.
    """
    if radius < 0 or int(radius) != radius:
        raise ValueError("radius must be a nonnegative integer")
    radius = int(radius)
    mask = np.asarray(mask, dtype=bool)
    if radius == 0:
        return mask.copy()
    out = np.zeros_like(mask)
    rows_hit = np.flatnonzero(mask.any(axis=1))
    if rows_hit.size == 0:
        return out
    # only the band of rows that can be reached needs work
    top = max(int(rows_hit[0]) - radius, 0)
    bottom = min(int(rows_hit[-1]) + radius + 1, mask.shape[0])
    full_out = out
    mask = mask[top:bottom]
    out = full_out[top:bottom]
    h = mask.shape[0]
    by_width: dict[int, np.ndarray] = {}
    for dy, w in zip(range(-radius, radius + 1), disk_half_widths(radius)):
        if abs(dy) >= h:
            continue
        if w not in by_width:
            by_width[w] = _dilate_rows(mask, w)
        rows = by_width[w]
        # source row y sets output row y + dy
        if dy >= 0:
            out[dy:] |= rows[: h - dy]
        else:
            out[:dy] |= rows[-dy:]
    return full_out


def center_crop_rect(full: int, target: int) -> Rect:
    if target > full:
        raise ValueError(f"crop target {target} exceeds size {full}")
    if target < 1:
        raise ValueError("crop target must be positive")
    off = (full - target) // 2
    return Rect(off, off, target, target)


def road_mask(
    points: Sequence[PixelPoint],
    size_px: int = 1000,
    radius: int = 20,
    crop: int | None = 224,
) -> np.ndarray:
    """Full mask pipeline: clip to tile, rasterize, dilate at full size, then crop."""
    pts = clip_points_to_crop(points, Rect(0, 0, size_px, size_px))
    mask = dilate(rasterize_polyline(pts, size_px, size_px), radius)
    if crop is None:
        return mask
    return mask[center_crop_rect(size_px, crop).slices()].copy()
