"""Timestamp helpers: wire format is ISO-8601 UTC, internals are epoch seconds."""

from __future__ import annotations

from datetime import datetime, timezone

__all__ = ["iso_time", "parse_time"]


def iso_time(t: float) -> str:
    """Epoch seconds to an ISO-8601 UTC string (Z suffix)."""
    dt = datetime.fromtimestamp(t, tz=timezone.utc)
    return dt.isoformat().replace("+00:00", "Z")


def parse_time(text: str) -> float:
    """ISO-8601 string to epoch seconds; naive times are taken as UTC.

    Accepts the Z suffix that datetime.fromisoformat on Python 3.10 does not.
    """
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()
