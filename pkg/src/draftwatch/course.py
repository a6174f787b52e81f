"""Reference-course polyline and projection of rider positions onto it.

A course is the survey ride recorded before the race, one vertex per
second. Riders are located by the nearest point on the polyline, which
yields their path length (distance along the course) and a signed lateral
offset (positive to the left of the direction of travel).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geodesy import GeodeticFix, UtmPoint, geodetic_to_utm, utm_zone

__all__ = [
    "Course",
    "Projection",
    "DegenerateCourseError",
    "OffCourseError",
    "build_course",
    "course_from_fixes",
    "project",
]

DEFAULT_CORRIDOR_WIDTH = 15.0

# ties between segments are resolved within this distance of the minimum
TIE_BREAK_M = 1e-3

# hint searches scan this many segments to each side before giving up
HINT_WINDOW = 200

# consecutive survey vertices should be a few meters apart; anything wider
# means the survey is too sparse for meter-scale projection
MAX_VERTEX_SPACING = 50.0


class DegenerateCourseError(ValueError):
    """Fewer than two distinct vertices after de-duplication."""


class OffCourseError(ValueError):
    """Point farther than the corridor width from every segment."""


@dataclass(frozen=True)
class Projection:
    """Where a point lands on the course."""

    l: float
    lateral: float
    segment: int
    point: UtmPoint


@dataclass(frozen=True)
class Course:
    """Immutable surveyed polyline with per-vertex cumulative arc length."""

    vertices: tuple[UtmPoint, ...]
    cum_length: np.ndarray
    total_length: float
    corridor_width: float
    lon_zone: int
    lat_band: str
    northern: bool
    _seg: dict = field(repr=False)  # cached per-segment arrays

    def point_at(self, l: float, lateral: float = 0.0) -> UtmPoint:
        """Planar point at path length l, offset lateral meters to the left."""
        s = self._seg
        l = min(max(l, 0.0), self.total_length)
        i = int(np.searchsorted(self.cum_length, l, side="right")) - 1
        i = min(max(i, 0), len(s["len"]) - 1)
        r = (l - self.cum_length[i]) / s["len"][i]
        nx = -s["sy"][i] / s["len"][i]
        ny = s["sx"][i] / s["len"][i]
        return UtmPoint(
            lon_zone=self.lon_zone,
            lat_band=self.lat_band,
            east=float(s["ex"][i] + r * s["sx"][i] + lateral * nx),
            north=float(s["ey"][i] + r * s["sy"][i] + lateral * ny),
            northern=self.northern,
        )


def build_course(
    vertices: Sequence[UtmPoint], corridor_width: float = DEFAULT_CORRIDOR_WIDTH
) -> Course:
    """Assemble a Course from surveyed vertices, dropping zero-length steps."""
    if corridor_width <= 0:
        raise ValueError("corridor width must be positive")

    kept: list[UtmPoint] = []
    for v in vertices:
        if kept and (v.lon_zone, v.northern) != (kept[0].lon_zone, kept[0].northern):
            raise ValueError("course vertices span UTM frames; reproject first")
        if kept and math.hypot(v.east - kept[-1].east, v.north - kept[-1].north) < 1e-9:
            continue
        kept.append(v)
    if len(kept) < 2:
        raise DegenerateCourseError(
            f"course needs at least 2 distinct vertices, got {len(kept)}"
        )

    ex = np.array([v.east for v in kept])
    ey = np.array([v.north for v in kept])
    sx = np.diff(ex)
    sy = np.diff(ey)
    seg_len = np.hypot(sx, sy)
    widest = float(seg_len.max())
    if widest > MAX_VERTEX_SPACING:
        raise ValueError(
            f"consecutive vertices {widest:.1f} m apart exceed the"
            f" {MAX_VERTEX_SPACING:.0f} m survey spacing limit"
        )
    cum = np.concatenate(([0.0], np.cumsum(seg_len)))

    return Course(
        vertices=tuple(kept),
        cum_length=cum,
        total_length=float(cum[-1]),
        corridor_width=corridor_width,
        lon_zone=kept[0].lon_zone,
        lat_band=kept[0].lat_band,
        northern=kept[0].northern,
        _seg={
            "ex": ex[:-1],
            "ey": ey[:-1],
            "sx": sx,
            "sy": sy,
            "len": seg_len,
            "len2": seg_len * seg_len,
        },
    )


def course_from_fixes(
    fixes: Sequence[GeodeticFix], corridor_width: float = DEFAULT_CORRIDOR_WIDTH
) -> Course:
    """Project survey fixes into the frame of the first one and build a Course."""
    if len(fixes) < 2:
        raise DegenerateCourseError("survey track needs at least 2 points")
    zone, _ = utm_zone(fixes[0])
    southern = fixes[0].lat < 0
    points = [geodetic_to_utm(f, zone=zone, southern=southern) for f in fixes]
    return build_course(points, corridor_width=corridor_width)


def _scan(course: Course, px: float, py: float, lo: int, hi: int):
    """Best segment in [lo, hi): returns (index, r, distance)."""
    s = course._seg
    dx = px - s["ex"][lo:hi]
    dy = py - s["ey"][lo:hi]
    r = np.clip((dx * s["sx"][lo:hi] + dy * s["sy"][lo:hi]) / s["len2"][lo:hi], 0.0, 1.0)
    nx = dx - r * s["sx"][lo:hi]
    ny = dy - r * s["sy"][lo:hi]
    dist = np.hypot(nx, ny)
    dmin = float(dist.min())
    # equidistant candidates resolve to the greater index: forward progress
    # wins when a point sits exactly between two segments
    k = int(np.nonzero(dist <= dmin + TIE_BREAK_M)[0][-1])
    return lo + k, float(r[k]), float(dist[k])


def project(course: Course, p: UtmPoint, hint: int | None = None) -> Projection:
    """Locate p on the course: path length, signed lateral offset, segment.

    hint narrows the search to a window around the segment the rider was
    last seen on; the full scan runs when there is no hint, when the window
    finds nothing inside the corridor, or when the windowed best lands at a
    clipped window edge (the true minimum may lie just outside).
    """
    if (p.lon_zone, p.northern) != (course.lon_zone, course.northern):
        raise OffCourseError(
            f"point in zone {p.lon_zone} ({'N' if p.northern else 'S'}) cannot be"
            f" projected onto a zone {course.lon_zone} course"
        )
    nseg = len(course._seg["len"])
    px, py = p.east, p.north

    idx = r = dist = None
    if hint is not None:
        lo = max(0, min(int(hint), nseg - 1) - HINT_WINDOW)
        hi = min(nseg, max(int(hint), 0) + HINT_WINDOW + 1)
        idx, r, dist = _scan(course, px, py, lo, hi)
        clipped_low = lo > 0 and idx - lo < 2
        clipped_high = hi < nseg and hi - 1 - idx < 2
        if dist > course.corridor_width or clipped_low or clipped_high:
            idx = None
    if idx is None:
        idx, r, dist = _scan(course, px, py, 0, nseg)

    if dist > course.corridor_width:
        raise OffCourseError(
            f"point {dist:.1f} m from the course exceeds the"
            f" {course.corridor_width:.1f} m corridor"
        )

    s = course._seg
    cross = s["sx"][idx] * (py - s["ey"][idx]) - s["sy"][idx] * (px - s["ex"][idx])
    lateral = dist if cross > 0 else (-dist if cross < 0 else 0.0)
    nearest = UtmPoint(
        lon_zone=course.lon_zone,
        lat_band=course.lat_band,
        east=float(s["ex"][idx] + r * s["sx"][idx]),
        north=float(s["ey"][idx] + r * s["sy"][idx]),
        alt=p.alt,
        northern=course.northern,
    )
    return Projection(
        l=float(course.cum_length[idx] + r * s["len"][idx]),
        lateral=lateral,
        segment=idx,
        point=nearest,
    )
