"""HTTP front door: riders submit positions, officials read the race.

Endpoints (JSON bodies):

  POST /races                      create a race from a course document
  POST /races/{id}/positions       submit one fix; first use registers the rider
  POST /races/{id}/finish          close the race, flushing open episodes
  GET  /races/{id}/standings       current standings snapshot
  GET  /races/{id}/violations      violations, ?since= filters by start time
  GET  /races/{id}/events          newline-delimited JSON push stream

The service adds no rule logic: every submission goes straight into the
race's engine under its per-race lock, and queries read engine snapshots.
Driving the engine directly with the same feed yields the same event log
byte for byte.
"""

from __future__ import annotations

import itertools
import queue
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import StreamingResponse
from pydantic import BaseModel

from .course import course_from_fixes
from .engine import RaceEngine, RuleConfig, TimestampRegressionError, event_body
from .eventlog import notification_line
from .geodesy import GeodeticFix
from .ingest import TrackParseError, parse_tracks
from .timefmt import iso_time, parse_time

__all__ = ["Race", "RaceRegistry", "create_app", "rules_from_mapping"]


class RulesIn(BaseModel):
    draft_gap: float | None = None
    zone_halfwidth: float | None = None
    grace: float | None = None
    tick: float | None = None
    stale_after: float | None = None
    lateral_check: bool | None = None
    corridor_width: float | None = None


class CreateRaceIn(BaseModel):
    course: str
    name: str = ""
    rules: RulesIn | None = None


class PositionIn(BaseModel):
    rider: int
    t: str
    lat: float
    lon: float
    alt: float = 0.0


def rules_from_mapping(values: dict) -> tuple[RuleConfig, float | None]:
    """Build a RuleConfig (plus optional corridor width) from plain keys."""
    corridor = values.pop("corridor_width", None)
    base = RuleConfig()
    known = {k: v for k, v in values.items() if v is not None}
    unknown = set(known) - set(base.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown rule keys: {', '.join(sorted(unknown))}")
    cfg = RuleConfig(**{**base.__dict__, **known})
    return cfg, corridor


class Race:
    """One race: engine, append-only log, and live subscribers."""

    def __init__(self, race_id: str, name: str, engine: RaceEngine, log_path=None):
        self.id = race_id
        self.name = name
        self.engine = engine
        self.lock = threading.Lock()
        self.log_lines: list[str] = []
        self.subscribers: list[queue.SimpleQueue] = []
        self._log_file = open(log_path, "w", encoding="utf-8") if log_path else None
        self._drained = 0

    def _drain(self) -> None:
        # caller holds the lock
        fresh = self.engine.notifications[self._drained :]
        self._drained = len(self.engine.notifications)
        for n in fresh:
            line = notification_line(n)
            self.log_lines.append(line)
            if self._log_file is not None:
                self._log_file.write(line + "\n")
                self._log_file.flush()
            for q in self.subscribers:
                q.put(line)

    def submit(self, rider: int, t: float, lat: float, lon: float, alt: float):
        with self.lock:
            if self.engine.closed:
                raise HTTPException(status_code=409, detail="race is closed")
            self.engine.register(rider)
            try:
                record = self.engine.ingest_record(
                    rider, GeodeticFix(lat=lat, lon=lon, alt=alt, t=t)
                )
            except TimestampRegressionError as e:
                raise HTTPException(status_code=409, detail=str(e)) from e
            except ValueError as e:
                raise HTTPException(status_code=400, detail=str(e)) from e
            self._drain()
            return record

    def finish(self) -> None:
        with self.lock:
            if not self.engine.closed:
                self.engine.finish()
                self._drain()
                if self._log_file is not None:
                    self._log_file.close()
                    self._log_file = None
            for q in self.subscribers:
                q.put(None)

    def subscribe(self):
        with self.lock:
            backlog = list(self.log_lines)
            q: queue.SimpleQueue = queue.SimpleQueue()
            if not self.engine.closed:
                self.subscribers.append(q)
                return backlog, q
            return backlog, None

    def unsubscribe(self, q) -> None:
        with self.lock:
            if q in self.subscribers:
                self.subscribers.remove(q)


class RaceRegistry:
    """All open races; optionally persists each race's event log to a file."""

    def __init__(self, log_dir: str | Path | None = None, rules: RuleConfig | None = None,
                 corridor_width: float | None = None):
        self.races: dict[str, Race] = {}
        self.log_dir = Path(log_dir) if log_dir else None
        self.default_rules = rules or RuleConfig()
        self.default_corridor = corridor_width
        self._ids = itertools.count(1)
        self._lock = threading.Lock()

    def create(self, course_text: str, name: str = "",
               rules: RuleConfig | None = None,
               corridor_width: float | None = None) -> Race:
        tracks = parse_tracks(course_text)
        corridor = corridor_width or self.default_corridor
        kwargs = {"corridor_width": corridor} if corridor else {}
        course = course_from_fixes(tracks[0].samples, **kwargs)
        engine = RaceEngine(course=course, rules=rules or self.default_rules)
        with self._lock:
            race_id = f"r{next(self._ids)}"
            log_path = self.log_dir / f"{race_id}.ndjson" if self.log_dir else None
            if self.log_dir:
                self.log_dir.mkdir(parents=True, exist_ok=True)
            race = Race(race_id, name, engine, log_path)
            self.races[race_id] = race
        return race

    def get(self, race_id: str) -> Race:
        race = self.races.get(race_id)
        if race is None:
            raise HTTPException(status_code=404, detail=f"no race {race_id!r}")
        return race

    def shutdown(self) -> None:
        for race in self.races.values():
            race.finish()


def create_app(registry: RaceRegistry | None = None) -> FastAPI:
    registry = registry or RaceRegistry()
    app = FastAPI(title="draftwatch")
    app.state.registry = registry

    @app.post("/races", status_code=201)
    def create_race(body: CreateRaceIn):
        rules, corridor = None, None
        if body.rules is not None:
            try:
                rules, corridor = rules_from_mapping(body.rules.model_dump())
            except ValueError as e:
                raise HTTPException(status_code=400, detail=str(e)) from e
        try:
            race = registry.create(
                body.course, name=body.name, rules=rules, corridor_width=corridor
            )
        except (TrackParseError, ValueError) as e:
            raise HTTPException(status_code=400, detail=str(e)) from e
        return {"id": race.id, "name": race.name}

    @app.post("/races/{race_id}/positions", status_code=202)
    def submit_position(race_id: str, body: PositionIn):
        race = registry.get(race_id)
        try:
            t = parse_time(body.t)
        except ValueError as e:
            raise HTTPException(status_code=400, detail=f"bad time: {e}") from e
        record = race.submit(body.rider, t, body.lat, body.lon, body.alt)
        out = {"accepted": True}
        if record is None:
            out["off_course"] = True
        return out

    @app.post("/races/{race_id}/finish")
    def finish_race(race_id: str):
        race = registry.get(race_id)
        race.finish()
        return {"closed": True}

    @app.get("/races/{race_id}/standings")
    def get_standings(race_id: str):
        race = registry.get(race_id)
        with race.lock:
            rows = race.engine.snapshot_standings()
            tick = race.engine.sealed_t
        return {
            "tick": None if tick is None else iso_time(tick),
            "standings": [
                {
                    "rank": r.rank,
                    "rider": r.rider,
                    "l": r.l,
                    "gap_to_ahead": r.gap_to_ahead,
                }
                for r in rows
            ],
        }

    @app.get("/races/{race_id}/violations")
    def get_violations(race_id: str, since: str | None = None):
        race = registry.get(race_id)
        cutoff = None
        if since is not None:
            try:
                cutoff = parse_time(since)
            except ValueError as e:
                raise HTTPException(status_code=400, detail=f"bad since: {e}") from e
        with race.lock:
            events = race.engine.violations(since=cutoff)
            return {"violations": [event_body(ev) for ev in events]}

    @app.get("/races/{race_id}/events")
    def stream_events(race_id: str):
        race = registry.get(race_id)
        backlog, live = race.subscribe()

        def feed():
            try:
                for line in backlog:
                    yield line + "\n"
                while live is not None:
                    try:
                        item = live.get(timeout=0.25)
                    except queue.Empty:
                        if race.engine.closed:
                            return
                        continue
                    if item is None:
                        return
                    yield item + "\n"
            finally:
                if live is not None:
                    race.unsubscribe(live)

        return StreamingResponse(feed(), media_type="application/x-ndjson")

    return app
