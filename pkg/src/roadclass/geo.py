"""WGS84 lon/lat <-> tile pixel coordinates.

Uses a local equirectangular (tangent-plane) projection about the tile
center on a sphere of radius 6378137 m. Over a 300 m tile the error is far
below a pixel, which is all the mask pipeline needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

EARTH_RADIUS_M = 6378137.0

# Offsets beyond this are outside the local-tangent validity range.
MAX_OFFSET_M = 10_000.0


def normalize_lon(lon: float) -> float:
    """Wrap a longitude into (-180, 180]."""
    if -180.0 < lon <= 180.0:
        # already in range; shifting by 180 would cost precision near 0
        return lon
    wrapped = math.fmod(lon + 180.0, 360.0)
    if wrapped <= 0.0:
        wrapped += 360.0
    return wrapped - 180.0


@dataclass(frozen=True)
class GeoPoint:
    lon: float
    lat: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lon) and math.isfinite(self.lat)):
            raise ValueError("invalid coordinate")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"invalid coordinate: latitude {self.lat} out of range")
        object.__setattr__(self, "lon", normalize_lon(self.lon))


@dataclass(frozen=True)
class PixelPoint:
    """Continuous pixel position: x is the column (east), y the row (south)."""

    x: float
    y: float


@dataclass(frozen=True)
class TileGeoref:
    center: GeoPoint
    size_m: float = 300.0
    size_px: int = 1000

    def __post_init__(self) -> None:
        if not self.size_m > 0:
            raise ValueError("size_m must be positive")
        if not self.size_px > 0:
            raise ValueError("size_px must be positive")

    @property
    def gsd(self) -> float:
        """Ground sample distance in meters per pixel."""
        return self.size_m / self.size_px

    def to_dict(self) -> dict:
        return {
            "center": [self.center.lon, self.center.lat],
            "size_m": self.size_m,
            "size_px": self.size_px,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TileGeoref":
        lon, lat = d["center"]
        return cls(GeoPoint(lon, lat), float(d.get("size_m", 300.0)), int(d.get("size_px", 1000)))


def _check_finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError("invalid coordinate")


def geo_to_pixel(g: TileGeoref, p: GeoPoint) -> PixelPoint:
    _check_finite(p.lon, p.lat)
    lat_c = math.radians(g.center.lat)
    dlon = normalize_lon(p.lon - g.center.lon)
    east_m = EARTH_RADIUS_M * math.radians(dlon) * math.cos(lat_c)
    north_m = EARTH_RADIUS_M * math.radians(p.lat - g.center.lat)
    if abs(east_m) >= MAX_OFFSET_M or abs(north_m) >= MAX_OFFSET_M:
        raise ValueError(
            f"point ({p.lon}, {p.lat}) is more than {MAX_OFFSET_M:.0f} m from the tile center"
        )
    half = g.size_px / 2.0
    return PixelPoint(half + east_m / g.gsd, half - north_m / g.gsd)


def pixel_to_geo(g: TileGeoref, q: PixelPoint) -> GeoPoint:
    _check_finite(q.x, q.y)
    half = g.size_px / 2.0
    east_m = (q.x - half) * g.gsd
    north_m = (half - q.y) * g.gsd
    lat_c = math.radians(g.center.lat)
    lat = g.center.lat + math.degrees(north_m / EARTH_RADIUS_M)
    lon = g.center.lon + math.degrees(east_m / (EARTH_RADIUS_M * math.cos(lat_c)))
    return GeoPoint(lon, lat)
