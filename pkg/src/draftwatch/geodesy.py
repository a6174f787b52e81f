"""Coordinate types, geodetic-to-UTM projection, and metric distance.

The projection is a forward transverse Mercator evaluated with the
third-flattening series (Krueger form, terms through n^6), which keeps the
error well below a millimeter anywhere inside a zone. That headroom matters
because the rules engine discriminates gaps at the 7-meter scale and the
whole pipeline budget is a few centimeters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "GeodeticFix",
    "UtmPoint",
    "Ellipsoid",
    "WGS84",
    "OutOfCoverageError",
    "CrossZoneError",
    "utm_zone",
    "geodetic_to_utm",
    "euclidean_2d",
]

SCALE_FACTOR = 0.9996
FALSE_EASTING = 500000.0
FALSE_NORTHING_SOUTH = 10000000.0

# 8-degree latitude bands from 80S to 84N; I and O are skipped by convention.
_BANDS = "CDEFGHJKLMNPQRSTUVWX"

# UTM covers latitudes 80S..84N; beyond that the grid is undefined.
_LAT_MIN = -80.0
_LAT_MAX = 84.0


class OutOfCoverageError(ValueError):
    """Latitude outside the UTM-covered range."""


class CrossZoneError(ValueError):
    """Planar distance requested between points in different zones."""


@dataclass(frozen=True)
class Ellipsoid:
    """Reference ellipsoid: semi-major axis in meters and flattening."""

    semi_major_axis: float
    flattening: float

    def __post_init__(self):
        if not 0.0 < self.flattening < 0.01:
            raise ValueError(f"implausible flattening {self.flattening}")
        if not self.semi_major_axis > 0.0:
            raise ValueError("semi-major axis must be positive")


WGS84 = Ellipsoid(semi_major_axis=6378137.0, flattening=1.0 / 298.257223563)


@dataclass(frozen=True)
class GeodeticFix:
    """One raw GPS sample: position in degrees/meters plus a timestamp.

    t is seconds on a shared epoch (devices sample at a nominal 1 Hz).
    """

    lat: float
    lon: float
    alt: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinates ({self.lat}, {self.lon})")
        if not (math.isfinite(self.alt) and math.isfinite(self.t)):
            raise ValueError("non-finite altitude or timestamp")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon < 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180)")


@dataclass(frozen=True)
class UtmPoint:
    """Metric position: zone pair plus easting/northing/altitude in meters.

    northern records which false-northing convention the northing uses; it
    defaults to the hemisphere of the band letter but can differ when a
    projection was forced into the other hemisphere's convention to keep a
    course coherent across the equator.
    """

    lon_zone: int
    lat_band: str
    east: float
    north: float
    alt: float = 0.0
    northern: bool | None = None

    def __post_init__(self):
        if self.northern is None:
            object.__setattr__(self, "northern", self.lat_band >= "N")


def utm_zone(fix: GeodeticFix) -> tuple[int, str]:
    """Longitudinal zone number (1..60) and latitude band letter for a fix.

    Applies the standard grid exceptions around Norway and Svalbard on top
    of the plain 6-degree formula.
    """
    lat, lon = fix.lat, fix.lon
    if not _LAT_MIN <= lat <= _LAT_MAX:
        raise OutOfCoverageError(f"latitude {lat} outside UTM coverage [-80, 84]")

    zone = int((lon + 180.0) // 6.0) + 1
    idx = min(int((lat - _LAT_MIN) // 8.0), len(_BANDS) - 1)
    # keep the band letter on the same side of the equator as the latitude
    # sign; float rounding can otherwise push tiny negatives into band N
    if lat < 0:
        idx = min(idx, _BANDS.index("M"))
    else:
        idx = max(idx, _BANDS.index("N"))
    band = _BANDS[idx]

    if band == "V" and 3.0 <= lon < 12.0:
        zone = 32
    elif band == "X" and lon >= 0.0:
        if lon < 9.0:
            zone = 31
        elif lon < 21.0:
            zone = 33
        elif lon < 33.0:
            zone = 35
        elif lon < 42.0:
            zone = 37
    return zone, band


def _central_meridian(zone: int) -> float:
    return (zone - 1) * 6.0 - 180.0 + 3.0


def _krueger_alphas(n: float) -> tuple[float, ...]:
    # Forward-series coefficients in the third flattening, through n^6.
    n2, n3, n4, n5, n6 = n * n, n**3, n**4, n**5, n**6
    return (
        n / 2 - 2 * n2 / 3 + 5 * n3 / 16 + 41 * n4 / 180 - 127 * n5 / 288
        + 7891 * n6 / 37800,
        13 * n2 / 48 - 3 * n3 / 5 + 557 * n4 / 1440 + 281 * n5 / 630
        - 1983433 * n6 / 1935360,
        61 * n3 / 240 - 103 * n4 / 140 + 15061 * n5 / 26880 + 167603 * n6 / 181440,
        49561 * n4 / 161280 - 179 * n5 / 168 + 6601661 * n6 / 7257600,
        34729 * n5 / 80640 - 3418889 * n6 / 1995840,
        212378941 * n6 / 319334400,
    )


def geodetic_to_utm(
    fix: GeodeticFix,
    ellipsoid: Ellipsoid = WGS84,
    zone: int | None = None,
    southern: bool | None = None,
) -> UtmPoint:
    """Project a geodetic fix to UTM easting/northing; altitude passes through.

    zone and southern force the projection into a specific zone and
    false-northing convention (extended-zone use: a course near a zone or
    equator boundary keeps every point in the frame of its first vertex so
    planar distances stay coherent). Defaults are the fix's own.
    """
    own_zone, band = utm_zone(fix)
    if zone is None:
        zone = own_zone
    elif not 1 <= zone <= 60:
        raise ValueError(f"zone {zone} outside 1..60")
    if southern is None:
        southern = fix.lat < 0

    f = ellipsoid.flattening
    n = f / (2.0 - f)
    e = math.sqrt(f * (2.0 - f))
    # rectifying radius
    big_a = ellipsoid.semi_major_axis / (1.0 + n) * (
        1.0 + n**2 / 4.0 + n**4 / 64.0 + n**6 / 256.0
    )

    phi = math.radians(fix.lat)
    dlon = math.radians(fix.lon - _central_meridian(zone))

    # tangent of the conformal latitude
    tau = math.sinh(
        math.asinh(math.tan(phi)) - e * math.atanh(e * math.sin(phi))
    )
    xi_p = math.atan2(tau, math.cos(dlon))
    eta_p = math.atanh(math.sin(dlon) / math.hypot(tau, 1.0))

    xi, eta = xi_p, eta_p
    for j, alpha in enumerate(_krueger_alphas(n), start=1):
        xi += alpha * math.sin(2 * j * xi_p) * math.cosh(2 * j * eta_p)
        eta += alpha * math.cos(2 * j * xi_p) * math.sinh(2 * j * eta_p)

    east = FALSE_EASTING + SCALE_FACTOR * big_a * eta
    north = SCALE_FACTOR * big_a * xi
    if southern:
        north += FALSE_NORTHING_SOUTH
    return UtmPoint(
        lon_zone=zone,
        lat_band=band,
        east=east,
        north=north,
        alt=fix.alt,
        northern=not southern,
    )


def euclidean_2d(a: UtmPoint, b: UtmPoint) -> float:
    """Planar distance in meters; altitude is ignored by design.

    Both points must live in the same zone and hemisphere, otherwise their
    easting/northing are not commensurable.
    """
    if a.lon_zone != b.lon_zone or a.northern != b.northern:
        raise CrossZoneError(
            f"points in zones {a.lon_zone}{a.lat_band}/{b.lon_zone}{b.lat_band} "
            "are not comparable; project both into one zone first"
        )
    return math.hypot(a.east - b.east, a.north - b.north)
