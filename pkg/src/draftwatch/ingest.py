"""Track files in and out, and paced replay of recorded rides.

Two input shapes are accepted:

  - GPX-style XML (UTF-8): gpx > trk > trkseg > trkpt with lat/lon
    attributes, optional ele, required time. A trk whose name parses as an
    integer names the rider's start number; otherwise tracks are numbered
    in file order. Missing ele defaults to 0 (the rules are 2-D anyway).
  - a plain-text fallback for hand-written fixtures: one sample per line,
    "rider, iso-time, lat, lon[, alt]", comments with '#'.

Replay delivers the merged samples to a sink in global (time, rider)
order, paced by wall clock at a configurable speedup.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from xml.etree import ElementTree as ET

from .geodesy import GeodeticFix
from .timefmt import iso_time, parse_time

__all__ = [
    "Track",
    "TrackParseError",
    "TrackOrderingError",
    "ReplayReport",
    "parse_tracks",
    "tracks_to_gpx",
    "tracks_to_text",
    "replay",
]


class TrackParseError(ValueError):
    """Input file is not a usable track document."""


class TrackOrderingError(TrackParseError):
    """Sample timestamps are not strictly increasing."""


@dataclass(frozen=True)
class Track:
    """One rider's recorded ride at a nominal 1 s cadence."""

    rider: int
    samples: tuple[GeodeticFix, ...]

    def __post_init__(self):
        if len(self.samples) < 2:
            raise TrackParseError(
                f"track for rider {self.rider} has {len(self.samples)} samples;"
                " at least 2 are required"
            )
        for i, (a, b) in enumerate(zip(self.samples, self.samples[1:]), start=2):
            if b.t <= a.t:
                raise TrackOrderingError(
                    f"track for rider {self.rider}: point {i} time is not after"
                    f" point {i - 1}"
                )


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _parse_gpx(text: str) -> list[Track]:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as e:
        line, col = e.position
        raise TrackParseError(f"malformed XML at line {line}, column {col}") from e

    tracks = []
    trks = [el for el in root.iter() if _local(el.tag) == "trk"]
    if not trks:
        raise TrackParseError("document contains no tracks")
    for ordinal, trk in enumerate(trks, start=1):
        rider = ordinal
        for child in trk:
            if _local(child.tag) == "name" and child.text:
                try:
                    rider = int(child.text.strip())
                except ValueError:
                    rider = ordinal
        samples = []
        points = [el for el in trk.iter() if _local(el.tag) == "trkpt"]
        for n, pt in enumerate(points, start=1):
            where = f"track {ordinal} point {n}"
            try:
                lat = float(pt.attrib["lat"])
                lon = float(pt.attrib["lon"])
            except KeyError as e:
                raise TrackParseError(f"{where} lacks a {e.args[0]} attribute") from e
            except ValueError as e:
                raise TrackParseError(f"{where} has a non-numeric coordinate") from e
            ele = 0.0
            when = None
            for sub in pt:
                name = _local(sub.tag)
                if name == "ele" and sub.text:
                    try:
                        ele = float(sub.text.strip())
                    except ValueError as e:
                        raise TrackParseError(f"{where} has a non-numeric ele") from e
                elif name == "time" and sub.text:
                    try:
                        when = parse_time(sub.text)
                    except ValueError as e:
                        raise TrackParseError(f"{where} has an unreadable time") from e
            if when is None:
                raise TrackParseError(f"{where} has no time element")
            try:
                samples.append(GeodeticFix(lat=lat, lon=lon, alt=ele, t=when))
            except ValueError as e:
                raise TrackParseError(f"{where}: {e}") from e
        try:
            tracks.append(Track(rider=rider, samples=tuple(samples)))
        except TrackOrderingError as e:
            raise TrackOrderingError(f"track {ordinal}: {e}") from e
    return tracks


def _parse_text(text: str) -> list[Track]:
    per_rider: dict[int, list[GeodeticFix]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (4, 5):
            raise TrackParseError(
                f"line {lineno}: expected 'rider, time, lat, lon[, alt]',"
                f" got {len(parts)} fields"
            )
        try:
            rider = int(parts[0])
            when = parse_time(parts[1])
            lat = float(parts[2])
            lon = float(parts[3])
            alt = float(parts[4]) if len(parts) == 5 else 0.0
            fix = GeodeticFix(lat=lat, lon=lon, alt=alt, t=when)
        except ValueError as e:
            raise TrackParseError(f"line {lineno}: {e}") from e
        per_rider.setdefault(rider, []).append(fix)
    if not per_rider:
        raise TrackParseError("document contains no samples")
    tracks = []
    for rider in sorted(per_rider):
        try:
            tracks.append(Track(rider=rider, samples=tuple(per_rider[rider])))
        except TrackOrderingError as e:
            raise TrackOrderingError(str(e)) from e
    return tracks


def parse_tracks(data: bytes | str) -> list[Track]:
    """Parse a track document (GPX-style XML or the plain-text fallback)."""
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as e:
            raise TrackParseError(f"not UTF-8 text: {e}") from e
    else:
        text = data
    if not text.strip():
        raise TrackParseError("empty document")
    if text.lstrip().startswith("<"):
        return _parse_gpx(text)
    return _parse_text(text)


def tracks_to_gpx(tracks: list[Track], creator: str = "draftwatch") -> bytes:
    """Serialize tracks as GPX 1.1; floats keep their shortest exact form."""
    gpx = ET.Element(
        "gpx",
        {
            "version": "1.1",
            "creator": creator,
            "xmlns": "http://www.topografix.com/GPX/1/1",
        },
    )
    for track in tracks:
        trk = ET.SubElement(gpx, "trk")
        ET.SubElement(trk, "name").text = str(track.rider)
        seg = ET.SubElement(trk, "trkseg")
        for s in track.samples:
            pt = ET.SubElement(seg, "trkpt", {"lat": repr(s.lat), "lon": repr(s.lon)})
            ET.SubElement(pt, "ele").text = repr(s.alt)
            ET.SubElement(pt, "time").text = iso_time(s.t)
    tree = ET.ElementTree(gpx)
    ET.indent(tree)
    return ET.tostring(gpx, encoding="utf-8", xml_declaration=True)


def tracks_to_text(tracks: list[Track]) -> str:
    """Serialize tracks in the plain-text fallback format."""
    lines = ["# rider, time, lat, lon, alt"]
    for track in tracks:
        for s in track.samples:
            lines.append(f"{track.rider}, {iso_time(s.t)}, {s.lat!r}, {s.lon!r}, {s.alt!r}")
    return "\n".join(lines) + "\n"


@dataclass
class ReplayReport:
    """What a replay run delivered and how punctually."""

    delivered: int = 0
    rejected: int = 0
    duration_s: float = 0.0
    max_jitter_s: float = 0.0
    rejections: list[tuple[int, float, str]] = field(default_factory=list)


def replay(
    tracks: list[Track],
    sink,
    speedup: float = 1.0,
    clock=time.monotonic,
    sleep=time.sleep,
) -> ReplayReport:
    """Deliver every sample to sink(rider, fix) in (time, rider) order.

    Pacing follows the sample timestamps compressed by speedup; jitter is
    how late a delivery ran versus its schedule (deliveries are never
    early). Sink exceptions are recorded and the replay continues.
    """
    if speedup < 1.0:
        raise ValueError("speedup must be >= 1")
    queue = sorted(
        ((s.t, track.rider, s) for track in tracks for s in track.samples),
        key=lambda item: (item[0], item[1]),
    )
    report = ReplayReport()
    if not queue:
        return report

    epoch = queue[0][0]
    started = clock()
    for t, rider, fix in queue:
        target = started + (t - epoch) / speedup
        now = clock()
        if target > now:
            sleep(target - now)
            now = clock()
        report.max_jitter_s = max(report.max_jitter_s, now - target)
        try:
            sink(rider, fix)
            report.delivered += 1
        except Exception as e:  # sink trouble must not kill the replay
            report.rejected += 1
            report.rejections.append((rider, t, str(e)))
    report.duration_s = clock() - started
    return report
