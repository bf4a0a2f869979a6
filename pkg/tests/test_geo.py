import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from roadclass.geo import GeoPoint, PixelPoint, TileGeoref, geo_to_pixel, pixel_to_geo

# 30 m / (6378137 m * pi / 180), evaluated once at 30 significant digits
EQUATOR_30M_DEG = 0.00026949458523585643053825037694

M_PER_DEG = 6378137.0 * math.pi / 180.0


def test_center_maps_to_image_center():
    g = TileGeoref(GeoPoint(36.8, -1.3))
    assert geo_to_pixel(g, g.center) == PixelPoint(500.0, 500.0)


def test_gsd_derived():
    g = TileGeoref(GeoPoint(0, 0))
    assert g.gsd == 0.3
    assert TileGeoref(GeoPoint(0, 0), 150.0, 1000).gsd == 0.15


def test_thirty_meters_east_at_equator():
    g = TileGeoref(GeoPoint(0.0, 0.0))
    q = geo_to_pixel(g, GeoPoint(EQUATOR_30M_DEG, 0.0))
    assert q.x == pytest.approx(600.0, abs=1e-9)
    assert q.y == pytest.approx(500.0, abs=1e-9)
    # away from lon 0 the absolute longitude costs a few ulps of precision
    g = TileGeoref(GeoPoint(10.0, 0.0))
    q = geo_to_pixel(g, GeoPoint(10.0 + EQUATOR_30M_DEG, 0.0))
    assert q.x == pytest.approx(600.0, abs=1e-6)


def test_thirty_meters_north():
    g = TileGeoref(GeoPoint(-77.0, -12.0))
    q = geo_to_pixel(g, GeoPoint(-77.0, -12.0 + 30.0 / M_PER_DEG))
    assert q.x == pytest.approx(500.0, abs=1e-9)
    assert q.y == pytest.approx(400.0, abs=1e-9)


def test_pixel_to_geo_center_and_equator_offset():
    g = TileGeoref(GeoPoint(10.0, 0.0))
    c = pixel_to_geo(g, PixelPoint(500, 500))
    assert (c.lon, c.lat) == pytest.approx((10.0, 0.0), abs=1e-12)
    p = pixel_to_geo(TileGeoref(GeoPoint(0.0, 0.0)), PixelPoint(600, 500))
    assert p.lon == pytest.approx(EQUATOR_30M_DEG, rel=1e-14)
    assert p.lat == pytest.approx(0.0, abs=1e-15)


def test_non_finite_rejected():
    g = TileGeoref(GeoPoint(0, 0))
    with pytest.raises(ValueError, match="invalid coordinate"):
        pixel_to_geo(g, PixelPoint(float("nan"), 1.0))
    with pytest.raises(ValueError, match="invalid coordinate"):
        GeoPoint(float("inf"), 0.0)


def test_geopoint_bounds_and_normalization():
    with pytest.raises(ValueError):
        GeoPoint(0.0, 91.0)
    assert GeoPoint(-180.0, 0).lon == 180.0
    assert GeoPoint(190.0, 0).lon == pytest.approx(-170.0)


def test_far_point_rejected():
    g = TileGeoref(GeoPoint(0, 0))
    with pytest.raises(ValueError):
        geo_to_pixel(g, GeoPoint(1.0, 0.0))


def test_antimeridian_offsets_wrap():
    g = TileGeoref(GeoPoint(179.9999, 0.0))
    q = geo_to_pixel(g, GeoPoint(-179.9999, 0.0))
    assert q.x > 500.0
    assert pixel_to_geo(g, q).lon == pytest.approx(-179.9999, abs=1e-9)


@given(
    lon=st.floats(-179.0, 179.0),
    lat=st.floats(-80.0, 80.0),
    east=st.floats(-150.0, 150.0),
    north=st.floats(-150.0, 150.0),
)
def test_round_trip_within_tile(lon, lat, east, north):
    g = TileGeoref(GeoPoint(lon, lat))
    p = GeoPoint(lon + east / (M_PER_DEG * math.cos(math.radians(lat))), lat + north / M_PER_DEG)
    back = pixel_to_geo(g, geo_to_pixel(g, p))
    assert abs(back.lat - p.lat) < 1e-9
    assert abs(back.lon - p.lon) < 1e-9


def test_isometry_near_center(rng):
    for lat in (-60.0, -1.3, 0.0, 45.0):
        g = TileGeoref(GeoPoint(20.0, lat))
        for _ in range(20):
            theta = rng.uniform(0, 2 * np.pi)
            a = pixel_to_geo(g, PixelPoint(500.0, 500.0))
            de, dn = math.cos(theta), math.sin(theta)
            b = GeoPoint(
                a.lon + de / (M_PER_DEG * math.cos(math.radians(lat))), a.lat + dn / M_PER_DEG
            )
            qa, qb = geo_to_pixel(g, a), geo_to_pixel(g, b)
            d = math.hypot(qb.x - qa.x, qb.y - qa.y)
            assert d == pytest.approx(1.0 / g.gsd, rel=1e-3)


def test_monotone():
    g = TileGeoref(GeoPoint(36.8, -1.3))
    lons = [36.799, 36.7995, 36.8, 36.8005]
    xs = [geo_to_pixel(g, GeoPoint(lo, -1.3)).x for lo in lons]
    assert xs == sorted(xs) and len(set(xs)) == 4
    lats = [-1.301, -1.3005, -1.3, -1.2995]
    ys = [geo_to_pixel(g, GeoPoint(36.8, la)).y for la in lats]
    assert ys == sorted(ys, reverse=True) and len(set(ys)) == 4


def test_georef_dict_round_trip():
    g = TileGeoref(GeoPoint(36.8, -1.3))
    assert TileGeoref.from_dict(g.to_dict()) == g
