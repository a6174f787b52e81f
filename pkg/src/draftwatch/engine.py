"""Live race state: per-rider records, standings, and the drafting rules.

The engine consumes timestamped position reports, quantizes them onto the
race's tick grid, and evaluates the rules once per tick as soon as the tick
can no longer change ("sealing"). Under an in-order feed a tick seals when
the first report of the next tick arrives, so detections trail the data by
at most a tick or two.

Rule summary, in course coordinates (path length l along the course,
signed lateral offset):

  - the drafting zone behind a rider is draft_gap meters deep and
    2 * zone_halfwidth wide; occupancy means 0 < gap < draft_gap with the
    lateral test optionally applied;
  - occupancy time counts every sampled tick, entry included; strictly
    exceeding the grace period opens a violation whose start_t is
    entry + grace (exactly the opening tick for on-grid data);
  - leaving the zone, losing the adjacent-leader relationship, or
    completing the overtake closes it;
  - an overtaken rider owes a drop-back: re-passing the overtaker before
    the gap has reached draft_gap again is an instantaneous breach;
  - riders whose data stops are stale after stale_after seconds: they are
    skipped by the rules and their open episode closes at the last tick
    their data supported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

from .course import Course, OffCourseError, project
from .geodesy import GeodeticFix, geodetic_to_utm
from .timefmt import iso_time

__all__ = [
    "RuleConfig",
    "PositionRecord",
    "RiderState",
    "ViolationEvent",
    "EventNotification",
    "Standings",
    "StandingRow",
    "RaceEngine",
    "UnknownRiderError",
    "TimestampRegressionError",
    "zone_test",
    "dropback_check",
    "event_body",
]

DRAFTING_PENALTY_S = 300.0


class UnknownRiderError(KeyError):
    """Position submitted for a rider that was never registered."""


class TimestampRegressionError(ValueError):
    """Rider timestamps must be strictly increasing."""


@dataclass(frozen=True)
class RuleConfig:
    """Drafting-rule parameters; defaults give the 2 x 7 m zone and 20 s grace."""

    draft_gap: float = 7.0
    zone_halfwidth: float = 1.0
    grace: float = 20.0
    tick: float = 1.0
    stale_after: float = 3.0
    lateral_check: bool = True

    def __post_init__(self):
        for name in ("draft_gap", "zone_halfwidth", "grace", "tick", "stale_after"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class PositionRecord:
    """One evaluated position: rider start number, UTM meters, time, path length."""

    i: int
    x: float
    y: float
    z: float
    t: float
    l: float


@dataclass
class ViolationEvent:
    id: int
    kind: str  # "drafting" | "dropback-breach"
    offender: int
    victim: int
    start_t: float
    start_l: float
    end_t: float | None = None
    end_l: float | None = None
    open: bool = True
    recommended_penalty_s: float | None = None


class EventNotification(NamedTuple):
    seq: int
    type: str  # "opened" | "closed"
    event: dict


def event_body(ev: ViolationEvent) -> dict:
    """Wire/log shape of a violation; timestamps become ISO-8601 UTC."""
    return {
        "id": ev.id,
        "kind": ev.kind,
        "offender": ev.offender,
        "victim": ev.victim,
        "start_t": iso_time(ev.start_t),
        "end_t": None if ev.end_t is None else iso_time(ev.end_t),
        "start_l": ev.start_l,
        "end_l": ev.end_l,
        "open": ev.open,
        "recommended_penalty_s": ev.recommended_penalty_s,
    }


@dataclass
class RiderState:
    """Everything the rules need to remember about one rider."""

    rider: int
    record: PositionRecord | None = None
    lateral: float = 0.0
    stale_since: float | None = None
    zone_entry: float | None = None
    zone_leader: int | None = None
    open_violation: ViolationEvent | None = None
    last_overtaken_by: int | None = None
    last_live: tuple[float, float] | None = None  # (t, l) at the last live tick
    segment_hint: int | None = None


def zone_test(leader: RiderState, follower: RiderState, cfg: RuleConfig) -> bool:
    """True iff the follower sits inside the leader's drafting rectangle.

    Strict at both ends of the gap: a dead heat is not drafting, and a gap
    of exactly draft_gap is legal.
    """
    if leader.record is None or follower.record is None:
        return False
    gap = leader.record.l - follower.record.l
    if not 0.0 < gap < cfg.draft_gap:
        return False
    if cfg.lateral_check and abs(leader.lateral - follower.lateral) > cfg.zone_halfwidth:
        return False
    return True


def dropback_check(
    follower: RiderState, holder: RiderState, cfg: RuleConfig
) -> str | None:
    """Progress of a drop-back obligation (follower must fall behind holder).

    Returns "breach" when the follower re-passed the holder, "cleared" when
    the gap has opened to draft_gap, None while the obligation stands.
    """
    if follower.record is None or holder.record is None:
        return "cleared"
    if follower.record.l > holder.record.l:
        return "breach"
    if holder.record.l - follower.record.l >= cfg.draft_gap:
        return "cleared"
    return None


class StandingRow(NamedTuple):
    rank: int
    rider: int
    l: float
    gap_to_ahead: float | None


class Standings:
    """Riders ordered by decreasing path length, ties to the lower number.

    Updates reposition a rider by adjacent exchanges from its previous slot,
    so the work per update is proportional to how far the rider moved.
    """

    def __init__(self):
        self.order: list[int] = []
        self.index: dict[int, int] = {}
        self.path_len: dict[int, float] = {}

    def __len__(self):
        return len(self.order)

    def __contains__(self, rider: int) -> bool:
        return rider in self.index

    def _key(self, rider: int):
        return (-self.path_len[rider], rider)

    def update(self, rider: int, l: float) -> int:
        """Set the rider's path length and re-slot it; returns exchange count."""
        if rider not in self.index:
            self.path_len[rider] = l
            self.order.append(rider)
            self.index[rider] = len(self.order) - 1
        else:
            self.path_len[rider] = l
        i = self.index[rider]
        order, key = self.order, self._key
        exchanges = 0
        while i > 0 and key(order[i]) < key(order[i - 1]):
            order[i], order[i - 1] = order[i - 1], order[i]
            self.index[order[i]] = i
            self.index[order[i - 1]] = i - 1
            i -= 1
            exchanges += 1
        n = len(order)
        while i < n - 1 and key(order[i + 1]) < key(order[i]):
            order[i], order[i + 1] = order[i + 1], order[i]
            self.index[order[i]] = i
            self.index[order[i + 1]] = i + 1
            i += 1
            exchanges += 1
        return exchanges

    def snapshot(self) -> list[StandingRow]:
        rows = []
        prev_l = None
        for rank, rider in enumerate(self.order, start=1):
            l = self.path_len[rider]
            gap = None if prev_l is None else prev_l - l
            rows.append(StandingRow(rank=rank, rider=rider, l=l, gap_to_ahead=gap))
            prev_l = l
        return rows


class RaceEngine:
    """Single-race rules engine; one logical writer, snapshot reads.

    With a course, feed geodetic fixes through ingest_record. Without one
    (simulation or testing at the record level) feed apply_record with
    precomputed path lengths. Short per-rider gaps are linearly
    interpolated -- in the plane when there is a course to re-project
    against, directly in (l, lateral) otherwise.
    """

    def __init__(self, course: Course | None = None, rules: RuleConfig | None = None):
        self.course = course
        self.rules = rules or RuleConfig()
        self.states: dict[int, RiderState] = {}
        self.standings = Standings()
        self.notifications: list[EventNotification] = []
        self.events: list[ViolationEvent] = []
        self.closed = False
        self._epoch: float | None = None
        self._head_t: float | None = None
        self._sealed_k: int | None = None
        self._min_k: int | None = None
        # per unsealed tick: rider -> (l, lateral, x, y, z)
        self._grid: dict[int, dict[int, tuple[float, float, float, float, float]]] = {}
        # latest accepted on-course record per rider: (t, x, y, z, l, lateral)
        self._anchor: dict[int, tuple[float, float, float, float, float, float]] = {}
        self._last_t: dict[int, float] = {}  # raw ordering clock per rider
        self._prev_l: dict[int, float] = {}
        self._next_event_id = 1
        self._next_seq = 1

    # -- registration and feeding ------------------------------------------

    def register(self, rider: int) -> None:
        if rider <= 0:
            raise ValueError("rider start numbers are positive integers")
        self.states.setdefault(rider, RiderState(rider=rider))

    def ingest_record(self, rider: int, fix: GeodeticFix) -> PositionRecord | None:
        """Convert, project, and apply one GPS fix.

        Off-course fixes advance the rider's clock but produce no scored
        position for that tick, leaving the rider stale until good data
        returns. Returns the applied record, or None for off-course.
        """
        if self.course is None:
            raise ValueError("engine has no course; use apply_record")
        state = self._require(rider)
        self._check_time(state, fix.t)
        point = geodetic_to_utm(
            fix, zone=self.course.lon_zone, southern=not self.course.northern
        )
        try:
            proj = project(self.course, point, hint=state.segment_hint)
        except OffCourseError:
            self._advance_clock(rider, fix.t, anchor=None)
            return None
        state.segment_hint = proj.segment
        record = PositionRecord(
            i=rider, x=point.east, y=point.north, z=point.alt, t=fix.t, l=proj.l
        )
        self._advance_clock(
            rider,
            fix.t,
            anchor=(fix.t, point.east, point.north, point.alt, proj.l, proj.lateral),
        )
        return record

    def apply_record(
        self,
        rider: int,
        t: float,
        l: float,
        lateral: float = 0.0,
        x: float | None = None,
        y: float = 0.0,
        z: float = 0.0,
    ) -> PositionRecord:
        """Record-level entry point: the path length is already known."""
        state = self._require(rider)
        self._check_time(state, t)
        x = l if x is None else x
        self._advance_clock(rider, t, anchor=(t, x, y, z, l, lateral))
        return PositionRecord(i=rider, x=x, y=y, z=z, t=t, l=l)

    def finish(self) -> None:
        """Seal everything outstanding and close open episodes at race end."""
        if self.closed:
            return
        if self._sealed_k is not None or self._grid:
            start = self._next_unsealed()
            last = max(self._grid) if self._grid else start - 1
            for k in range(start, last + 1):
                self._seal(k)
        for rider in sorted(self.states):
            state = self.states[rider]
            if state.open_violation is not None and state.last_live is not None:
                self._close(state, *state.last_live)
            state.zone_entry = None
            state.zone_leader = None
        self.closed = True

    # -- reads ---------------------------------------------------------------

    @property
    def sealed_t(self) -> float | None:
        """Time of the latest fully evaluated tick."""
        if self._sealed_k is None or self._epoch is None:
            return None
        return self._epoch + self._sealed_k * self.rules.tick

    def snapshot_standings(self) -> list[StandingRow]:
        return self.standings.snapshot()

    def violations(self, since: float | None = None) -> list[ViolationEvent]:
        if since is None:
            return list(self.events)
        return [ev for ev in self.events if ev.start_t >= since]

    # -- internals -------------------------------------------------------------

    def _require(self, rider: int) -> RiderState:
        if self.closed:
            raise ValueError("race is closed")
        state = self.states.get(rider)
        if state is None:
            raise UnknownRiderError(f"rider {rider} is not registered")
        return state

    def _check_time(self, state: RiderState, t: float) -> None:
        if not math.isfinite(t):
            raise ValueError("non-finite timestamp")
        last_t = self._last_t.get(state.rider)
        if last_t is not None and t <= last_t:
            raise TimestampRegressionError(
                f"rider {state.rider} timestamp {t} is not after {last_t}"
            )

    def _tick_of(self, t: float) -> int:
        return round((t - self._epoch) / self.rules.tick)

    def _tick_time(self, k: int) -> float:
        return self._epoch + k * self.rules.tick

    def _next_unsealed(self) -> int:
        if self._sealed_k is not None:
            return self._sealed_k + 1
        return self._min_k if self._min_k is not None else 0

    def _advance_clock(self, rider: int, t: float, anchor) -> None:
        if self._epoch is None:
            self._epoch = t
        self._last_t[rider] = t
        k = self._tick_of(t)
        if self._min_k is None or k < self._min_k:
            self._min_k = k

        if anchor is not None:
            prev = self._anchor.get(rider)
            self._anchor[rider] = anchor
            _, x, y, z, l, lateral = anchor
            if self._sealed_k is None or k > self._sealed_k:
                self._grid.setdefault(k, {})[rider] = (l, lateral, x, y, z)
            if prev is not None:
                self._fill_gap(rider, prev, anchor)

        if self._head_t is None or t > self._head_t:
            self._head_t = t
        self._run_sealing()

    def _fill_gap(self, rider: int, prev, cur) -> None:
        """Linear fill of a short hole between two accepted records."""
        t0, x0, y0, z0, l0, lat0 = prev
        t1, x1, y1, z1, l1, lat1 = cur
        k0, k1 = self._tick_of(t0), self._tick_of(t1)
        if k1 - k0 <= 1 or t1 - t0 > self.rules.stale_after:
            return
        state = self.states[rider]
        for k in range(k0 + 1, k1):
            if self._sealed_k is not None and k <= self._sealed_k:
                continue
            w = (k - k0) / (k1 - k0)
            if self.course is not None:
                fx = x0 + w * (x1 - x0)
                fy = y0 + w * (y1 - y0)
                point = replace(
                    self.course.vertices[0], east=fx, north=fy, alt=z0 + w * (z1 - z0)
                )
                try:
                    proj = project(self.course, point, hint=state.segment_hint)
                except OffCourseError:
                    continue
                self._grid.setdefault(k, {})[rider] = (
                    proj.l,
                    proj.lateral,
                    point.east,
                    point.north,
                    point.alt,
                )
            else:
                self._grid.setdefault(k, {})[rider] = (
                    l0 + w * (l1 - l0),
                    lat0 + w * (lat1 - lat0),
                    x0 + w * (x1 - x0),
                    y0 + w * (y1 - y0),
                    z0 + w * (z1 - z0),
                )

    def _run_sealing(self) -> None:
        while True:
            k = self._next_unsealed()
            if not self._can_seal(k):
                return
            self._seal(k)

    def _can_seal(self, k: int) -> bool:
        if self._epoch is None:
            return False
        t_k = self._tick_time(k)
        if self._head_t is None or self._head_t <= t_k:
            return False
        for anchor in self._anchor.values():
            last_t = anchor[0]
            if last_t >= t_k:
                continue
            if self._head_t - last_t <= self.rules.stale_after:
                return False  # this rider may still deliver data for tick k
        return True

    # canonical per-tick evaluation; the order of the five sweeps below is
    # part of the engine's contract (the reference detector mirrors it)
    def _seal(self, k: int) -> None:
        t = self._tick_time(k)
        live = self._grid.pop(k, {})

        # 1. standings: live riders re-slot, stale riders keep their slot.
        # Updates run leaders-first so each exchange settles a final pairwise
        # inversion exactly once (no transient double-crossings).
        live_order = [r for r in self.standings.order if r in live]
        live_order.extend(sorted(r for r in live if r not in self.standings.index))
        for rider in live_order:
            l, lateral, x, y, z = live[rider]
            self.standings.update(rider, l)
            st = self.states[rider]
            st.record = PositionRecord(i=rider, x=x, y=y, z=z, t=t, l=l)
            st.lateral = lateral

        # 2. staleness: riders without a usable sample this tick
        for rider in sorted(self.states):
            st = self.states[rider]
            if rider in live:
                st.stale_since = None
                continue
            if st.last_live is not None and st.stale_since is None:
                st.stale_since = t
            if st.open_violation is not None:
                self._close(st, *st.last_live)
            st.zone_entry = None
            st.zone_leader = None

        # 3. overtakes: relative order flipped since the previous tick
        swaps = []
        with_baseline = [r for r in live if r in self._prev_l]
        for f in with_baseline:
            lf, pf = live[f][0], self._prev_l[f]
            for x in with_baseline:
                if x != f and lf > live[x][0] and pf <= self._prev_l[x]:
                    swaps.append((f, x))
        for f, x in sorted(swaps):
            fst = self.states[f]
            if fst.zone_leader == x:
                if fst.open_violation is not None:
                    self._close(fst, t, live[f][0])
                fst.zone_entry = None
                fst.zone_leader = None
            self.states[x].last_overtaken_by = f

        # 4. drop-back obligations
        for rider in sorted(self.states):
            st = self.states[rider]
            holder = st.last_overtaken_by
            if holder is None:
                continue
            if rider not in live or holder not in live:
                st.last_overtaken_by = None
                continue
            verdict = dropback_check(st, self.states[holder], self.rules)
            if verdict == "breach":
                ev = self._open_event(
                    kind="dropback-breach",
                    offender=rider,
                    victim=holder,
                    start_t=t,
                    start_l=live[rider][0],
                    penalty=None,
                )
                self._close_event(ev, t, live[rider][0])
                st.last_overtaken_by = None
            elif verdict == "cleared":
                st.last_overtaken_by = None

        # 5. zone sweep over adjacent live pairs, best rank first
        order = [r for r in self.standings.order if r in live]
        if order:
            top = self.states[order[0]]
            if top.open_violation is not None:
                self._close(top, t, live[order[0]][0])
            top.zone_entry = None
            top.zone_leader = None
        for lead, fol in zip(order, order[1:]):
            lead_st, fol_st = self.states[lead], self.states[fol]
            if fol_st.zone_leader is not None and fol_st.zone_leader != lead:
                if fol_st.open_violation is not None:
                    self._close(fol_st, t, live[fol][0])
                fol_st.zone_entry = None
                fol_st.zone_leader = None
            if zone_test(lead_st, fol_st, self.rules):
                # occupancy counts every sampled tick as one tick's worth of
                # time, entry tick included: with the entry at e, occupancy
                # at tick t is (t - e + tick), and the episode turns into a
                # violation once that strictly exceeds the grace period
                if fol_st.zone_entry is None:
                    fol_st.zone_entry = t
                    fol_st.zone_leader = lead
                elif (
                    t - fol_st.zone_entry > self.rules.grace - self.rules.tick
                    and fol_st.open_violation is None
                ):
                    fol_st.open_violation = self._open_event(
                        kind="drafting",
                        offender=fol,
                        victim=lead,
                        start_t=fol_st.zone_entry + self.rules.grace,
                        start_l=live[fol][0],
                        penalty=DRAFTING_PENALTY_S,
                    )
            else:
                if fol_st.open_violation is not None:
                    self._close(fol_st, t, live[fol][0])
                fol_st.zone_entry = None
                fol_st.zone_leader = None

        self._prev_l = {r: live[r][0] for r in live}
        for rider, sample in live.items():
            self.states[rider].last_live = (t, sample[0])
        self._sealed_k = k

    def _open_event(self, kind, offender, victim, start_t, start_l, penalty):
        ev = ViolationEvent(
            id=self._next_event_id,
            kind=kind,
            offender=offender,
            victim=victim,
            start_t=start_t,
            start_l=start_l,
            recommended_penalty_s=penalty,
        )
        self._next_event_id += 1
        self.events.append(ev)
        self._notify("opened", ev)
        return ev

    def _close_event(self, ev: ViolationEvent, end_t: float, end_l: float) -> None:
        ev.end_t = end_t
        ev.end_l = end_l
        ev.open = False
        self._notify("closed", ev)

    def _close(self, state: RiderState, end_t: float, end_l: float) -> None:
        self._close_event(state.open_violation, end_t, end_l)
        state.open_violation = None

    def _notify(self, type_: str, ev: ViolationEvent) -> None:
        self.notifications.append(
            EventNotification(seq=self._next_seq, type=type_, event=event_body(ev))
        )
        self._next_seq += 1
