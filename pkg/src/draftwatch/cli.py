"""Operator entry points: serve, replay, simulate, report.

    draftwatch simulate fig5 --seed 1 --out race/
    draftwatch replay --course race/course.gpx --tracks race/rider_*.gpx \
        --speedup 600 --out race/
    draftwatch report --log race/events.ndjson --tracks race/rider_*.gpx --out race/
    draftwatch serve --bind 127.0.0.1:8080 --out logs/

Rules files are flat key=value text (draft_gap, zone_halfwidth, grace,
tick, stale_after, lateral_check, corridor_width); unknown keys are
rejected. All outputs are deterministic for fixed inputs and seed; only
replay pacing depends on the wall clock.
"""

from __future__ import annotations

import argparse
import socket
import sys
from collections import defaultdict
from pathlib import Path

from .course import course_from_fixes
from .engine import RaceEngine, RuleConfig
from .eventlog import notification_line, parse_line, write_log
from .geodesy import euclidean_2d, geodetic_to_utm, utm_zone
from .ingest import TrackParseError, parse_tracks, replay, tracks_to_gpx
from .scenario import (
    BUILTIN_SCENARIOS,
    ScenarioError,
    builtin_scenario,
    scenario_from_json,
    synthesize,
)
from .service import RaceRegistry, create_app, rules_from_mapping
from .timefmt import iso_time, parse_time


def parse_rules_file(path: str) -> tuple[RuleConfig, float | None]:
    """Flat key=value overrides for the rule configuration."""
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key == "lateral_check":
            if val.lower() not in ("true", "false", "1", "0"):
                raise ValueError(f"{path}:{lineno}: lateral_check must be boolean")
            values[key] = val.lower() in ("true", "1")
        else:
            try:
                values[key] = float(val)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: {val!r} is not a number") from None
    return rules_from_mapping(values)


def _load_rules(args) -> tuple[RuleConfig, float | None]:
    if getattr(args, "rules", None):
        return parse_rules_file(args.rules)
    return RuleConfig(), None


def _load_course(path: str, corridor: float | None):
    tracks = parse_tracks(Path(path).read_bytes())
    kwargs = {"corridor_width": corridor} if corridor else {}
    return course_from_fixes(tracks[0].samples, **kwargs)


def _load_rider_tracks(paths: list[str]):
    tracks = []
    for path in paths:
        tracks.extend(parse_tracks(Path(path).read_bytes()))
    return tracks


def cmd_serve(args) -> int:
    host, _, port_text = args.bind.rpartition(":")
    host = host or "127.0.0.1"
    try:
        port = int(port_text)
    except ValueError:
        print(f"error: bad bind address {args.bind!r}", file=sys.stderr)
        return 1

    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((host, port))
    except OSError as e:
        sock.close()
        print(f"error: cannot bind {host}:{port}: {e}", file=sys.stderr)
        return 1

    import uvicorn

    rules, corridor = _load_rules(args)
    registry = RaceRegistry(log_dir=args.out, rules=rules, corridor_width=corridor)
    app = create_app(registry)
    bound_port = sock.getsockname()[1]
    print(f"listening on {host}:{bound_port}")
    server = uvicorn.Server(uvicorn.Config(app, log_level="warning"))
    try:
        server.run(sockets=[sock])
    finally:
        registry.shutdown()
        sock.close()
    return 0


def _event_rows(lines: list[str]):
    """Latest body per event id, in first-seen order."""
    order, bodies = [], {}
    for line in lines:
        body = parse_line(line)["violation"]
        if body["id"] not in bodies:
            order.append(body["id"])
        bodies[body["id"]] = body
    return [bodies[i] for i in order]


def _print_summary(bodies: list[dict]) -> None:
    drafting = [b for b in bodies if b["kind"] == "drafting"]
    breaches = [b for b in bodies if b["kind"] == "dropback-breach"]
    print(f"{len(drafting)} drafting violation(s), {len(breaches)} drop-back breach(es)")
    per_rider: dict[int, list[float]] = defaultdict(list)
    for b in bodies:
        start = parse_time(b["start_t"])
        end = parse_time(b["end_t"]) if b["end_t"] else None
        dur = "open" if end is None else f"{end - start:.0f}s"
        meters = (
            "-"
            if b["end_l"] is None
            else f"{b['end_l'] - b['start_l']:.0f}m"
        )
        print(
            f"  {b['kind']}: rider {b['offender']} behind rider {b['victim']}"
            f" from {b['start_t']} ({dur}, {meters})"
        )
        if b["end_l"] is not None:
            per_rider[b["offender"]].append(b["end_l"] - b["start_l"])
    for rider in sorted(per_rider):
        total = sum(per_rider[rider])
        print(f"  rider {rider}: {len(per_rider[rider])} episode(s), {total:.0f} m total")


def cmd_replay(args) -> int:
    rules, corridor = _load_rules(args)
    try:
        course = _load_course(args.course, corridor)
        tracks = _load_rider_tracks(args.tracks)
    except TrackParseError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    engine = RaceEngine(course=course, rules=rules)
    for track in tracks:
        engine.register(track.rider)
    report = replay(
        tracks, lambda rider, fix: engine.ingest_record(rider, fix), speedup=args.speedup
    )
    engine.finish()

    lines = [notification_line(n) for n in engine.notifications]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "events.ndjson"
    write_log(log_path, lines)

    print(
        f"replayed {report.delivered} fixes from {len(tracks)} track(s)"
        f" in {report.duration_s:.1f}s (speedup {args.speedup:g},"
        f" max jitter {report.max_jitter_s * 1000:.0f} ms,"
        f" {report.rejected} rejected)"
    )
    _print_summary(_event_rows(lines))
    print(f"event log: {log_path}")
    return 0


def cmd_simulate(args) -> int:
    try:
        if args.scenario in BUILTIN_SCENARIOS:
            spec = builtin_scenario(args.scenario)
        elif Path(args.scenario).exists():
            spec = scenario_from_json(Path(args.scenario).read_text())
        else:
            builtins = ", ".join(sorted(BUILTIN_SCENARIOS))
            print(
                f"error: unknown scenario {args.scenario!r}: not a builtin"
                f" ({builtins}) and no such file",
                file=sys.stderr,
            )
            return 1
        survey, riders = synthesize(spec, seed=args.seed)
    except (ScenarioError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    course_path = out_dir / "course.gpx"
    course_path.write_bytes(tracks_to_gpx([survey]))
    course = course_from_fixes(survey.samples)
    print(f"course: {course_path} ({course.total_length:.1f} m, {len(survey.samples)} points)")
    for track in riders:
        path = out_dir / f"rider_{track.rider}.gpx"
        path.write_bytes(tracks_to_gpx([track]))
        offset = track.samples[0].t - survey.samples[0].t
        print(
            f"rider {track.rider}: {path} ({len(track.samples)} samples,"
            f" starts +{offset:.0f}s)"
        )
    return 0


def cmd_report(args) -> int:
    try:
        lines = [l for l in Path(args.log).read_text().splitlines() if l.strip()]
        bodies = _event_rows(lines)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    if not bodies:
        print("no events")
    else:
        _print_summary(bodies)

    if not args.tracks:
        return 0

    try:
        tracks = _load_rider_tracks(args.tracks)
    except TrackParseError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    rules, _ = _load_rules(args)

    first = tracks[0].samples[0]
    zone, _band = utm_zone(first)
    southern = first.lat < 0
    points = {
        track.rider: {
            round(s.t): geodetic_to_utm(s, zone=zone, southern=southern)
            for s in track.samples
        }
        for track in tracks
    }

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = sorted({(b["offender"], b["victim"]) for b in bodies})
    for offender, victim in pairs:
        if offender not in points or victim not in points:
            print(
                f"warning: no track for rider pair {offender}/{victim}; skipped",
                file=sys.stderr,
            )
            continue
        episodes = [
            (parse_time(b["start_t"]) - rules.grace, parse_time(b["end_t"]))
            for b in bodies
            if (b["offender"], b["victim"]) == (offender, victim) and b["end_t"]
        ]
        common = sorted(set(points[offender]) & set(points[victim]))
        path = out_dir / f"gaps_{offender}_{victim}.csv"
        with open(path, "w", encoding="utf-8") as f:
            f.write("t,gap_m,offender_in_zone\n")
            for t in common:
                gap = euclidean_2d(points[offender][t], points[victim][t])
                in_zone = any(a <= t <= b for a, b in episodes)
                f.write(f"{iso_time(t)},{gap:.3f},{1 if in_zone else 0}\n")
        print(f"gap series: {path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="draftwatch",
        description="drafting-violation detection for triathlon cycling legs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--bind", default="127.0.0.1:8000", help="host:port to listen on")
    p.add_argument("--rules", help="rules key=value file")
    p.add_argument("--out", default=None, help="directory for per-race event logs")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="replay tracks through an in-process engine")
    p.add_argument("--course", required=True, help="course file (first track = survey)")
    p.add_argument("--tracks", required=True, nargs="+", help="rider track files")
    p.add_argument("--speedup", type=float, default=1.0, help="time compression (>= 1)")
    p.add_argument("--rules", help="rules key=value file")
    p.add_argument("--out", default=".", help="directory for events.ndjson")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("simulate", help="synthesize a scenario into track files")
    p.add_argument("scenario", help="builtin name (fig5) or scenario JSON path")
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="summarize an event log, optionally vs tracks")
    p.add_argument("--log", required=True, help="events.ndjson from replay or serve")
    p.add_argument("--tracks", nargs="*", default=[], help="rider track files")
    p.add_argument("--rules", help="rules key=value file")
    p.add_argument("--out", default=".", help="directory for gap CSV series")
    p.set_defaults(func=cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
