"""Procedural "satellite" tiles with a known road class and centerline.

Each tile is a noisy background of a domain base color with one road drawn
through the tile center. Road appearance depends on the class, and the
background can optionally be shifted per class (``context_correlation``),
which lets the occlusion experiments separate road signal from context
signal.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import pngio
from ._rng import keyed_rng
from .dataset import Manifest, SampleRecord, write_manifest
from .geo import PixelPoint
from .osm_ingest import LABELS
from .raster import road_mask

logger = logging.getLogger(__name__)

# Per-class background shift applied when context_correlation is on.
CONTEXT_SHIFT = {
    "major": (14, 4, -16),
    "minor": (0, 0, 0),
    "two_track": (-12, 10, 6),
}

ROAD_COLOR = {
    "major": (200, 200, 200),
    "minor": (135, 135, 135),
    "two_track": (165, 140, 105),
}

# (inner, outer) distance band from the centerline, in pixels at 1000 px.
ROAD_BAND = {
    "major": (0.0, 15.0),  # one 30 px strip
    "minor": (0.0, 6.0),  # one 12 px strip
    "two_track": (4.0, 8.0),  # two 4 px strips around an 8 px gap
}


@dataclass(frozen=True)
class DomainParams:
    base_color: tuple[int, int, int] = (96, 112, 72)
    noise_amplitude: int = 40
    # per-tile uniform jitter of the base color, per channel
    tile_jitter: int = 10

    def __post_init__(self) -> None:
        if self.noise_amplitude < 0 or self.tile_jitter < 0:
            raise ValueError("noise amplitude and jitter must be nonnegative")


DOMAINS = {
    "synthA": DomainParams((96, 112, 72), 40, 10),
    "synthB": DomainParams((150, 128, 96), 40, 10),
}


@dataclass(frozen=True)
class SynthConfig:
    tile_px: int = 1000
    classes: tuple[str, ...] = LABELS
    context_correlation: bool = False
    domain_params: DomainParams = field(default_factory=DomainParams)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.tile_px < 256:
            raise ValueError("tile_px must be at least 256")
        unknown = set(self.classes) - set(LABELS)
        if unknown:
            raise ValueError(f"unknown classes {sorted(unknown)}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["classes"] = list(self.classes)
        d["domain_params"]["base_color"] = list(self.domain_params.base_color)
        return d


def random_centerline(rng: np.random.Generator, tile_px: int) -> list[PixelPoint]:
    """Gently bent polyline through the tile center, integer vertices."""
    c = tile_px / 2.0
    theta = rng.uniform(0.0, np.pi)
    ux, uy = np.cos(theta), np.sin(theta)
    nx, ny = -uy, ux
    ts = np.array([-0.45, -0.2, 0.0, 0.2, 0.45]) * tile_px
    lateral = np.array(
        [rng.uniform(-0.08, 0.08), rng.uniform(-0.04, 0.04), 0.0, rng.uniform(-0.04, 0.04), rng.uniform(-0.08, 0.08)]
    ) * tile_px
    xs = np.floor(c + ts * ux + lateral * nx + 0.5)
    ys = np.floor(c + ts * uy + lateral * ny + 0.5)
    xs = np.clip(xs, 0, tile_px - 1)
    ys = np.clip(ys, 0, tile_px - 1)
    return [PixelPoint(float(x), float(y)) for x, y in zip(xs, ys)]


def distance_to_polyline(points: Sequence[PixelPoint], size: int, max_dist: float) -> np.ndarray:
    """Distance from each pixel center to the polyline; ``inf`` beyond ``max_dist``."""
    dist = np.full((size, size), np.inf)
    for a, b in zip(points, points[1:]):
        x0 = max(int(np.floor(min(a.x, b.x) - max_dist)), 0)
        x1 = min(int(np.ceil(max(a.x, b.x) + max_dist)) + 1, size)
        y0 = max(int(np.floor(min(a.y, b.y) - max_dist)), 0)
        y1 = min(int(np.ceil(max(a.y, b.y) + max_dist)) + 1, size)
        if x0 >= x1 or y0 >= y1:
            continue
        yy, xx = np.mgrid[y0:y1, x0:x1].astype(np.float64)
        dx, dy = b.x - a.x, b.y - a.y
        seg2 = dx * dx + dy * dy
        if seg2 == 0:
            t = np.zeros_like(xx)
        else:
            t = np.clip(((xx - a.x) * dx + (yy - a.y) * dy) / seg2, 0.0, 1.0)
        d = np.hypot(xx - (a.x + t * dx), yy - (a.y + t * dy))
        np.minimum(dist[y0:y1, x0:x1], d, out=dist[y0:y1, x0:x1])
    return dist


def generate_tile(label: str, config: SynthConfig, tile_seed: int) -> tuple[np.ndarray, list[PixelPoint], str]:
    if label not in config.classes:
        raise ValueError(f"label {label!r} not in {config.classes}")
    size = config.tile_px
    dp = config.domain_params
    rng = keyed_rng(config.seed, tile_seed, "tile")
    noise_rng = keyed_rng(config.seed, tile_seed, "noise")

    base = np.array(dp.base_color, dtype=np.int16)
    base = base + rng.integers(-dp.tile_jitter, dp.tile_jitter + 1, size=3).astype(np.int16)
    if config.context_correlation:
        base = base + np.array(CONTEXT_SHIFT[label], dtype=np.int16)
    line = random_centerline(rng, size)

    a = dp.noise_amplitude
    noise = noise_rng.integers(-a, a + 1, size=(size, size, 3), dtype=np.int16)
    img = noise + base

    scale = size / 1000.0
    inner, outer = (v * scale for v in ROAD_BAND[label])
    dist = distance_to_polyline(line, size, outer + 1.0)
    road = (dist >= inner) & (dist < outer) if inner > 0 else dist < outer
    ys, xs = np.nonzero(road)
    img[ys, xs] = np.array(ROAD_COLOR[label], dtype=np.int16) + noise[ys, xs] // 2
    np.clip(img, 0, 255, out=img)
    return img.astype(np.uint8), line, label


def render_sample(label: str, config: SynthConfig, tile_seed: int, radius: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Tile plus its full-resolution road mask."""
    img, line, _ = generate_tile(label, config, tile_seed)
    return img, road_mask(line, config.tile_px, radius, crop=None)


def sample_plan(n_per_class: int, config: SynthConfig, domain: str) -> list[tuple[str, str, int]]:
    """``(sample_id, label, tile_seed)`` for every tile of a balanced dataset."""
    plan = []
    for ci, label in enumerate(config.classes):
        for i in range(n_per_class):
            plan.append((f"{domain}_{label}_{i:05d}", label, i * len(config.classes) + ci))
    return plan


class SynthSource:
    """Renders samples of a planned synthetic dataset on demand, without files."""

    def __init__(self, config: SynthConfig, plan: Sequence[tuple[str, str, int]], radius: int = 20):
        self.config = config
        self.radius = radius
        self._seeds = {sid: (label, seed) for sid, label, seed in plan}

    def __call__(self, record) -> tuple[np.ndarray, np.ndarray]:
        label, seed = self._seeds[record.sample_id]
        return render_sample(label, self.config, seed, self.radius)


def plan_manifest(plan, config: SynthConfig, domain: str, radius: int = 20) -> Manifest:
    records = [
        SampleRecord(sid, f"images/{sid}.png", f"masks/{sid}.png", label, domain) for sid, label, _ in plan
    ]
    prov = {"generator": "synth", "synth_config": config.to_dict(), "domain": domain, "radius": radius}
    return Manifest(tuple(records), config.classes, prov)


def generate_dataset(
    n_per_class: int,
    config: SynthConfig,
    domain: str,
    output_dir,
    radius: int = 20,
    workers: int = 1,
) -> Manifest:
    """Write tiles, full-resolution masks and ``manifest.jsonl`` under ``output_dir``."""
    out = Path(output_dir)
    plan = sample_plan(n_per_class, config, domain)
    manifest = plan_manifest(plan, config, domain, radius)

    def work(item):
        sid, label, seed = item
        img, mask = render_sample(label, config, seed, radius)
        pngio.write_rgb(out / "images" / f"{sid}.png", img)
        pngio.write_mask(out / "masks" / f"{sid}.png", mask)
        return sid

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for _ in pool.map(work, plan):
            pass
    write_manifest(out / "manifest.jsonl", manifest)
    logger.info("wrote %d synthetic tiles to %s", len(plan), out)
    return manifest
