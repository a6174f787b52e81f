import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from draftwatch.geodesy import (
    WGS84,
    CrossZoneError,
    Ellipsoid,
    GeodeticFix,
    OutOfCoverageError,
    UtmPoint,
    euclidean_2d,
    geodetic_to_utm,
    utm_zone,
)

from oracles import snyder_utm, vincenty_direct, vincenty_inverse

# Value frozen from the independent eccentricity-series oracle in oracles.py.
MARIBOR_LAT, MARIBOR_LON = 46.554650, 15.645556
MARIBOR_EAST, MARIBOR_NORTH = 549485.0230372263, 5155878.318295188


def test_oracle_reproduces_published_geodesic():
    # Flinders Peak -> Buninyong, the classic published test line.
    d = vincenty_inverse(
        -(37 + 57 / 60 + 3.72030 / 3600),
        144 + 25 / 60 + 29.52440 / 3600,
        -(37 + 39 / 60 + 10.15610 / 3600),
        143 + 55 / 60 + 35.38390 / 3600,
    )
    assert d == pytest.approx(54972.271, abs=5e-3)


class TestUtmZone:
    def test_origin(self):
        assert utm_zone(GeodeticFix(lat=0.0, lon=0.0)) == (31, "N")

    def test_western_edge(self):
        assert utm_zone(GeodeticFix(lat=0.0, lon=-180.0)) == (1, "N")

    def test_maribor_region(self):
        assert utm_zone(GeodeticFix(lat=46.55, lon=15.65)) == (33, "T")

    def test_norway_exception(self):
        assert utm_zone(GeodeticFix(lat=60.0, lon=5.0)) == (32, "V")

    def test_out_of_coverage(self):
        with pytest.raises(OutOfCoverageError):
            utm_zone(GeodeticFix(lat=-85.0, lon=0.0))
        with pytest.raises(OutOfCoverageError):
            utm_zone(GeodeticFix(lat=84.5, lon=0.0))

    @given(
        lat=st.floats(min_value=-80.0, max_value=84.0),
        lon=st.floats(min_value=-180.0, max_value=179.999999),
    )
    @settings(max_examples=300, deadline=None)
    def test_total_over_coverage(self, lat, lon):
        zone, band = utm_zone(GeodeticFix(lat=lat, lon=lon))
        assert 1 <= zone <= 60
        assert band in "CDEFGHJKLMNPQRSTUVWX"


class TestGeodeticToUtm:
    def test_central_meridian_equator(self):
        p = geodetic_to_utm(GeodeticFix(lat=0.0, lon=3.0))
        assert (p.lon_zone, p.east, p.north) == (31, 500000.0, 0.0)

    def test_southern_false_northing(self):
        p = geodetic_to_utm(GeodeticFix(lat=-0.0001, lon=3.0))
        assert p.east == pytest.approx(500000.0, abs=1e-6)
        assert 9999980.0 < p.north < 10000000.0

    def test_against_independent_series(self):
        p = geodetic_to_utm(GeodeticFix(lat=MARIBOR_LAT, lon=MARIBOR_LON))
        assert (p.lon_zone, p.lat_band) == (33, "T")
        assert math.hypot(p.east - MARIBOR_EAST, p.north - MARIBOR_NORTH) < 0.01

    def test_altitude_copied_through(self):
        p = geodetic_to_utm(GeodeticFix(lat=10.0, lon=10.0, alt=271.5))
        assert p.alt == 271.5

    def test_out_of_coverage_rejected(self):
        with pytest.raises(OutOfCoverageError):
            geodetic_to_utm(GeodeticFix(lat=89.0, lon=0.0))

    def test_non_finite_rejected_at_construction(self):
        with pytest.raises(ValueError):
            GeodeticFix(lat=float("nan"), lon=0.0)
        with pytest.raises(ValueError):
            GeodeticFix(lat=0.0, lon=float("inf"))

    def test_deterministic(self):
        fix = GeodeticFix(lat=MARIBOR_LAT, lon=MARIBOR_LON, alt=270.0)
        a = geodetic_to_utm(fix)
        b = geodetic_to_utm(fix)
        assert (a.east, a.north) == (b.east, b.north)

    @given(
        lat=st.floats(min_value=-79.9, max_value=83.9),
        lon=st.floats(min_value=-179.9, max_value=179.9),
    )
    @settings(max_examples=150, deadline=None)
    def test_own_zone_ranges(self, lat, lon):
        p = geodetic_to_utm(GeodeticFix(lat=lat, lon=lon))
        assert 100000.0 <= p.east <= 900000.0
        assert 0.0 <= p.north <= 10000000.0

    @given(lat=st.floats(min_value=0.5, max_value=83.0))
    @settings(max_examples=80, deadline=None)
    def test_north_monotone_going_north(self, lat):
        lo = geodetic_to_utm(GeodeticFix(lat=lat - 0.4, lon=15.3), zone=33)
        hi = geodetic_to_utm(GeodeticFix(lat=lat, lon=15.3), zone=33)
        assert hi.north > lo.north

    @given(lon=st.floats(min_value=15.01, max_value=17.9))
    @settings(max_examples=80, deadline=None)
    def test_east_monotone_from_central_meridian(self, lon):
        near = geodetic_to_utm(GeodeticFix(lat=46.0, lon=lon - 0.005), zone=33)
        far = geodetic_to_utm(GeodeticFix(lat=46.0, lon=lon), zone=33)
        assert far.east > near.east


class TestEuclidean2d:
    def _pt(self, east, north, zone=33, band="T"):
        return UtmPoint(lon_zone=zone, lat_band=band, east=east, north=north)

    def test_identity(self):
        p = self._pt(549000.0, 5155000.0)
        assert euclidean_2d(p, p) == 0.0

    def test_3_4_5(self):
        a = self._pt(500000.0, 5000000.0)
        b = self._pt(500003.0, 5000004.0)
        assert euclidean_2d(a, b) == 5.0

    def test_altitude_ignored(self):
        a = UtmPoint(33, "T", 500000.0, 5000000.0, alt=100.0)
        b = UtmPoint(33, "T", 500003.0, 5000004.0, alt=900.0)
        assert euclidean_2d(a, b) == 5.0

    def test_cross_zone_rejected(self):
        a = self._pt(500000.0, 5000000.0, zone=33)
        b = self._pt(500000.0, 5000000.0, zone=34)
        with pytest.raises(CrossZoneError):
            euclidean_2d(a, b)

    def test_cross_hemisphere_rejected(self):
        a = self._pt(500000.0, 10.0, band="N")
        b = self._pt(500000.0, 9999990.0, band="M")
        with pytest.raises(CrossZoneError):
            euclidean_2d(a, b)

    @pytest.mark.parametrize(
        "lat,lon,bearing",
        [
            (0.0, 17.9, 90.0),
            (0.0, 15.0, 45.0),
            (46.5547, 15.6456, 120.0),
            (69.9, 16.2, 10.0),
            (-33.9, 15.4, 200.0),
        ],
    )
    def test_one_meter_ground_step(self, lat, lon, bearing):
        lat2, lon2 = vincenty_direct(lat, lon, bearing, 1.0)
        a = geodetic_to_utm(GeodeticFix(lat=lat, lon=lon), zone=33)
        b = geodetic_to_utm(GeodeticFix(lat=lat2, lon=lon2), zone=33)
        assert euclidean_2d(a, b) == pytest.approx(1.0, abs=0.005)

    @given(
        lat=st.floats(min_value=-70.0, max_value=70.0),
        lon=st.floats(min_value=12.1, max_value=17.9),
        bearing=st.floats(min_value=0.0, max_value=360.0),
        dist=st.floats(min_value=0.01, max_value=100.0),
    )
    @settings(max_examples=150, deadline=None)
    def test_near_isometry(self, lat, lon, bearing, dist):
        lat2, lon2 = vincenty_direct(lat, lon, bearing, dist)
        # single forced frame so equator-straddling pairs stay comparable
        a = geodetic_to_utm(GeodeticFix(lat=lat, lon=lon), zone=33, southern=False)
        b = geodetic_to_utm(GeodeticFix(lat=lat2, lon=lon2), zone=33, southern=False)
        ground = vincenty_inverse(lat, lon, lat2, lon2)
        assert euclidean_2d(a, b) == pytest.approx(ground, abs=0.001 * dist + 0.001)


class TestEllipsoid:
    def test_wgs84_defaults(self):
        assert WGS84.semi_major_axis == 6378137.0
        assert WGS84.flattening == pytest.approx(1 / 298.257223563)

    def test_validation(self):
        with pytest.raises(ValueError):
            Ellipsoid(semi_major_axis=6378137.0, flattening=0.5)
        with pytest.raises(ValueError):
            Ellipsoid(semi_major_axis=-1.0, flattening=WGS84.flattening)


def test_fix_range_validation():
    with pytest.raises(ValueError):
        GeodeticFix(lat=91.0, lon=0.0)
    with pytest.raises(ValueError):
        GeodeticFix(lat=0.0, lon=180.0)


def test_projection_agrees_with_oracle_on_grid():
    worst = 0.0
    for i in range(10):
        lat = 0.0 + i * (70.0 / 9)
        for j in range(10):
            lon = 12.2 + j * (5.6 / 9)
            p = geodetic_to_utm(GeodeticFix(lat=lat, lon=lon), zone=33)
            e, n = snyder_utm(lat, lon, 33)
            worst = max(worst, math.hypot(p.east - e, p.north - n))
    assert worst < 0.01
