"""Per-sample pipeline: decloud -> full-resolution mask -> crop -> occlusion variant.

Also holds the sample sources and the feature cache used by training and the
experiment harnesses. Every stage is a pure function of its inputs; pools
use ``map`` so results come back in input order regardless of scheduling.
"""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import pngio
from .baseline_model import extract_features
from .dataset import Manifest, SampleRecord, read_manifest, resolve_uri, write_manifest
from .geo import GeoPoint, PixelPoint, TileGeoref, geo_to_pixel
from .imageops import apply_variant, cloud_filter, prepare_geometry
from .osm_ingest import LABELS
from .raster import road_mask

logger = logging.getLogger(__name__)

# CLI spelling -> imageops mode
OCCLUSION_FLAGS = {
    "none": "none",
    "context": "context_occluded",
    "road": "road_occluded",
    "channel-replace": "channel_replace",
}


@dataclass
class PrepareConfig:
    radius: int = 20
    decloud_threshold: float = 150.0
    crop: int = 224
    occlusion: str = "none"  # imageops mode name
    geometry: str = "crop"
    workers: int = 1


@dataclass
class PrepareSummary:
    written: int = 0
    cloud_rejected: list[str] = field(default_factory=list)
    errors: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "written": self.written,
            "cloud_rejected": len(self.cloud_rejected),
            "cloud_rejected_ids": self.cloud_rejected,
            "errors": len(self.errors),
            "error_details": self.errors,
        }


def project_polyline(georef: TileGeoref, polyline: Sequence[GeoPoint]) -> list[PixelPoint]:
    """Project to tile pixels, dropping vertices too far away to project locally."""
    out = []
    for p in polyline:
        try:
            out.append(geo_to_pixel(georef, p))
        except ValueError:
            continue
    return out


def finish_sample(img: np.ndarray, full_mask: np.ndarray, cfg: PrepareConfig) -> tuple[np.ndarray, np.ndarray]:
    img, mask = prepare_geometry(img, full_mask, cfg.crop, cfg.geometry)
    return apply_variant(img, mask, cfg.occlusion), mask


def _run_ordered(fn, items, workers: int):
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _process(
    sample_id: str, load: Callable[[], tuple[np.ndarray, np.ndarray]], cfg: PrepareConfig, out_dir: Path
):
    """Returns ("ok" | "cloud" | "error", detail)."""
    try:
        img, full_mask = load()
        decision = cloud_filter(img, cfg.decloud_threshold)
        if not decision.keep:
            return "cloud", decision.band_means
        out_img, out_mask = finish_sample(img, full_mask, cfg)
        pngio.write_rgb(out_dir / "images" / f"{sample_id}.png", out_img)
        pngio.write_mask(out_dir / "masks" / f"{sample_id}.png", out_mask)
        return "ok", None
    except (OSError, ValueError) as e:
        return "error", str(e)


def _collect(items, results, out_dir: Path, label_set, provenance) -> tuple[Manifest, PrepareSummary]:
    summary = PrepareSummary()
    records = []
    for (sid, label, domain), (status, detail) in zip(items, results):
        if status == "ok":
            records.append(SampleRecord(sid, f"images/{sid}.png", f"masks/{sid}.png", label, domain))
            summary.written += 1
        elif status == "cloud":
            summary.cloud_rejected.append(sid)
        else:
            summary.errors[sid] = detail
    manifest = Manifest(tuple(records), tuple(label_set), provenance)
    write_manifest(out_dir / "manifest.jsonl", manifest)
    return manifest, summary


def _provenance(cfg: PrepareConfig, **extra) -> dict:
    prov = {
        "radius": cfg.radius,
        "decloud_threshold": cfg.decloud_threshold,
        "crop": cfg.crop,
        "occlusion": cfg.occlusion,
        "geometry": cfg.geometry,
        "mask_format": "png8 {0,255}",
        "confidence_format": "png16 scaled by 65535",
    }
    prov.update(extra)
    return prov


def load_roads_file(path) -> dict:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def prepare_from_roads(tiles_dir, roads_path, out_dir, cfg: PrepareConfig) -> tuple[Manifest, PrepareSummary]:
    """Build a dataset from ingested roads plus ``<tiles_dir>/<sample_id>.png`` tiles."""
    tiles_dir, out_dir = Path(tiles_dir), Path(out_dir)
    roads = load_roads_file(roads_path)
    items, loaders = [], []
    for road in roads["roads"]:
        polyline = [GeoPoint(lon, lat) for lon, lat in road["polyline"]]
        for anchor in road["anchors"]:
            georef = TileGeoref.from_dict(anchor["tile"])
            sid = anchor["sample_id"]
            items.append((sid, road["label"], road["domain"]))

            def load(sid=sid, georef=georef, polyline=polyline):
                img = pngio.read_rgb(tiles_dir / f"{sid}.png")
                if img.shape[:2] != (georef.size_px, georef.size_px):
                    raise ValueError(f"tile {sid} is {img.shape[:2]}, georef expects {georef.size_px}")
                pts = project_polyline(georef, polyline)
                return img, road_mask(pts, georef.size_px, cfg.radius, crop=None)

            loaders.append(load)
    results = _run_ordered(
        lambda pair: _process(pair[0][0], pair[1], cfg, out_dir), list(zip(items, loaders)), cfg.workers
    )
    return _collect(items, results, out_dir, LABELS, _provenance(cfg, source="roads", roads=str(roads_path)))


def prepare_from_manifest(manifest_path, out_dir, cfg: PrepareConfig) -> tuple[Manifest, PrepareSummary]:
    """Same stages for a manifest of full tiles with full-resolution masks (e.g. synth output)."""
    out_dir = Path(out_dir)
    src = read_manifest(manifest_path)
    source = FileSource(manifest_path)
    items = [(r.sample_id, r.label, r.domain) for r in src.records]
    results = _run_ordered(
        lambda r: _process(r.sample_id, lambda: source(r), cfg, out_dir), list(src.records), cfg.workers
    )
    manifest, summary = _collect(
        items, results, out_dir, src.label_set, _provenance(cfg, source="manifest", upstream=src.provenance)
    )
    # keep any split assignment made upstream
    splits = {r.sample_id: r.split for r in src.records}
    manifest = Manifest(
        tuple(replace(r, split=splits[r.sample_id]) for r in manifest.records), manifest.label_set, manifest.provenance
    )
    write_manifest(out_dir / "manifest.jsonl", manifest)
    return manifest, summary


class FileSource:
    """Loads ``(image, mask)`` for a record from files next to its manifest."""

    def __init__(self, manifest_path):
        self.manifest_path = Path(manifest_path)

    def __call__(self, record: SampleRecord) -> tuple[np.ndarray, np.ndarray]:
        img = pngio.read_rgb(resolve_uri(self.manifest_path, record.image_uri))
        if record.mask_uri is None:
            mask = np.zeros(img.shape[:2], dtype=bool)
        else:
            mask = pngio.read_mask(resolve_uri(self.manifest_path, record.mask_uri))
        return img, mask


Source = Callable[[SampleRecord], tuple[np.ndarray, np.ndarray]]


class FeatureCache:
    """Features per (sample, occlusion mode), computed from a source on first use.

    Images larger than ``crop`` are brought down with the configured
    geometry first; images already at ``crop`` size are used as they are.
    """

    def __init__(self, source: Source, crop: int = 224, geometry: str = "crop", workers: int = 1):
        self.source = source
        self.crop = crop
        self.geometry = geometry
        self.workers = workers
        self._cache: dict[tuple[str, str], np.ndarray] = {}
        self._lock = threading.Lock()

    def _compute(self, record: SampleRecord, modes: Sequence[str]) -> list[np.ndarray]:
        img, mask = self.source(record)
        if img.shape[0] != self.crop:
            img, mask = prepare_geometry(img, mask, self.crop, self.geometry)
        return [extract_features(apply_variant(img, mask, mode)) for mode in modes]

    def prefetch(self, records: Sequence[SampleRecord], modes: Sequence[str]) -> None:
        """Fill the cache for several modes with one source read per sample."""
        todo = [r for r in records if any((r.sample_id, m) not in self._cache for m in modes)]
        computed = _run_ordered(lambda r: self._compute(r, modes), todo, self.workers)
        with self._lock:
            for r, feats in zip(todo, computed):
                for mode, f in zip(modes, feats):
                    self._cache[(r.sample_id, mode)] = f

    def features(self, records: Sequence[SampleRecord], mode: str = "none") -> np.ndarray:
        self.prefetch(records, (mode,))
        if not records:
            return np.zeros((0, 30))
        return np.stack([self._cache[(r.sample_id, mode)] for r in records])

    def loader(self, mode: str = "none") -> Callable[[SampleRecord], np.ndarray]:
        return lambda r: self.features([r], mode)[0]
