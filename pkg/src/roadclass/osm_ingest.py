"""Road vectors from GeoJSON: highway-tag mapping, anchor sampling, tiles."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geo import GeoPoint, TileGeoref

logger = logging.getLogger(__name__)

LABELS = ("major", "minor", "two_track")

DEFAULT_HIGHWAY_CLASSES: dict[str, str] = {
    "motorway": "major",
    "trunk": "major",
    "primary": "major",
    "motorway_link": "major",
    "trunk_link": "major",
    "primary_link": "major",
    "secondary": "minor",
    "tertiary": "minor",
    "unclassified": "minor",
    "residential": "minor",
    "secondary_link": "minor",
    "tertiary_link": "minor",
    "track": "two_track",
}


class RoadParseError(ValueError):
    """The road document could not be decoded at all."""

    def __init__(self, message: str, line: int | None = None, offset: int | None = None):
        self.line = line
        self.offset = offset
        where = f" (line {line}, offset {offset})" if line is not None else ""
        super().__init__(message + where)


@dataclass(frozen=True)
class RoadRecord:
    road_id: str
    polyline: tuple[GeoPoint, ...]
    raw_tag: str
    label: str
    domain: str

    def __post_init__(self) -> None:
        if len(self.polyline) < 2:
            raise ValueError(f"road {self.road_id}: polyline needs at least 2 points")
        for a, b in zip(self.polyline, self.polyline[1:]):
            if a == b:
                raise ValueError(f"road {self.road_id}: consecutive duplicate vertex")
        if self.label not in LABELS:
            raise ValueError(f"road {self.road_id}: unknown label {self.label!r}")

    def to_feature(self) -> dict:
        return {
            "type": "Feature",
            "id": self.road_id,
            "properties": {"highway": self.raw_tag},
            "geometry": {
                "type": "LineString",
                "coordinates": [[p.lon, p.lat] for p in self.polyline],
            },
        }


@dataclass
class ParseResult:
    """Records kept by :func:`parse_roads` plus bookkeeping on what was skipped."""

    records: list[RoadRecord] = field(default_factory=list)
    skipped_unmapped: int = 0
    errors: list[str] = field(default_factory=list)

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]


def map_highway_class(raw_tag, table: Mapping[str, str] | None = None) -> str | None:
    """Return the 3-class label for an OSM ``highway`` value, or None if unmapped."""
    if not isinstance(raw_tag, str):
        return None
    table = DEFAULT_HIGHWAY_CLASSES if table is None else table
    return table.get(raw_tag.strip().lower())


def load_class_table(path) -> dict[str, str]:
    """Read a ``{tag: label}`` JSON override for the highway mapping."""
    with open(path, encoding="utf-8") as f:
        table = json.load(f)
    if not isinstance(table, dict):
        raise ValueError("class-mapping override must be a JSON object")
    for tag, label in table.items():
        if label not in LABELS:
            raise ValueError(f"class-mapping override: {tag!r} maps to unknown label {label!r}")
    return {str(k).lower(): v for k, v in table.items()}


def _feature_id(feature: dict, index: int) -> str:
    if feature.get("id") is not None:
        return str(feature["id"])
    props = feature.get("properties") or {}
    for key in ("@id", "osm_id", "id"):
        if props.get(key) is not None:
            return str(props[key])
    return f"feature{index}"


def _dedupe(points: Iterable[GeoPoint]) -> list[GeoPoint]:
    out: list[GeoPoint] = []
    for p in points:
        if not out or out[-1] != p:
            out.append(p)
    return out


def parse_roads(document: str, domain: str, table: Mapping[str, str] | None = None) -> ParseResult:
    """Parse a GeoJSON FeatureCollection of LineStrings into road records.

    Features whose ``highway`` value is not in the mapping table are counted
    in ``skipped_unmapped``. Features with bad geometry are reported in
    ``errors`` and skipped; neither aborts the parse. A document that is not
    valid JSON, or not a FeatureCollection, raises :class:`RoadParseError`.
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as e:
        raise RoadParseError(f"malformed GeoJSON: {e.msg}", e.lineno, e.colno) from e
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise RoadParseError("document is not a GeoJSON FeatureCollection")
    features = doc.get("features")
    if not isinstance(features, list):
        raise RoadParseError("FeatureCollection has no 'features' list")

    result = ParseResult()
    for i, feat in enumerate(features):
        if not isinstance(feat, dict):
            result.errors.append(f"feature {i}: not an object")
            continue
        geom = feat.get("geometry") or {}
        props = feat.get("properties") or {}
        if geom.get("type") != "LineString" or "highway" not in props:
            continue
        raw_tag = props["highway"]
        label = map_highway_class(raw_tag, table)
        if label is None:
            result.skipped_unmapped += 1
            continue
        road_id = _feature_id(feat, i)
        try:
            coords = geom.get("coordinates") or []
            pts = _dedupe(GeoPoint(float(c[0]), float(c[1])) for c in coords)
            if len(pts) < 2:
                raise ValueError("LineString has fewer than 2 distinct points")
            result.records.append(RoadRecord(road_id, tuple(pts), str(raw_tag), label, domain))
        except (ValueError, TypeError, IndexError) as e:
            result.errors.append(f"feature {i} ({road_id}): {e}")
    if result.errors:
        logger.warning("skipped %d malformed features", len(result.errors))
    return result


def roads_to_geojson(records: Sequence[RoadRecord]) -> str:
    return json.dumps({"type": "FeatureCollection", "features": [r.to_feature() for r in records]})


def road_rng(road_id: str, seed: int) -> np.random.Generator:
    """Per-road random stream keyed by (road_id, seed)."""
    digest = hashlib.sha256(f"{road_id}\x00{seed}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:16], "little"))


def sample_anchor_points(road: RoadRecord, k: int, rng_seed: int) -> list[GeoPoint]:
    if k < 1:
        raise ValueError("k must be at least 1")
    n = len(road.polyline)
    if k > n:
        raise ValueError("road too short for k anchors")
    idx = road_rng(road.road_id, rng_seed).choice(n, size=k, replace=False)
    return [road.polyline[int(i)] for i in idx]


def make_tile(anchor: GeoPoint) -> TileGeoref:
    return TileGeoref(center=anchor, size_m=300.0, size_px=1000)


@dataclass(frozen=True)
class ClassDistribution:
    counts: dict[str, int]
    ratio: dict[str, float] | None

    @property
    def ratio_defined(self) -> bool:
        return self.ratio is not None

    def to_dict(self) -> dict:
        return {"counts": self.counts, "ratio": self.ratio}


def class_distribution(records: Iterable, labels: Sequence[str] = LABELS) -> ClassDistribution:
    """Per-class counts, with a ratio scaled so the smallest nonzero class is 1.

    Accepts anything with a ``label`` attribute, or plain label strings.
    """
    counts = {lab: 0 for lab in labels}
    for r in records:
        lab = r if isinstance(r, str) else r.label
        counts[lab] = counts.get(lab, 0) + 1
    nonzero = [c for c in counts.values() if c > 0]
    if not nonzero:
        return ClassDistribution(counts, None)
    smallest = min(nonzero)
    return ClassDistribution(counts, {lab: c / smallest for lab, c in counts.items()})
