"""Append-only event log: one JSON notification per line.

The same encoder backs the on-disk log, the HTTP event stream, and the
replay tool, so a race produces byte-identical logs no matter which path
drove it.
"""

from __future__ import annotations

import json
from pathlib import Path

from .engine import EventNotification

__all__ = ["notification_line", "parse_line", "write_log"]


def notification_line(n: EventNotification) -> str:
    return json.dumps(
        {"seq": n.seq, "type": n.type, "violation": n.event},
        separators=(",", ":"),
    )


def parse_line(line: str) -> dict:
    doc = json.loads(line)
    if not isinstance(doc, dict) or "violation" not in doc:
        raise ValueError("not an event-log line")
    return doc


def write_log(path: Path | str, lines: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for line in lines:
            f.write(line)
            f.write("\n")
