"""Real-time drafting-violation detection for triathlon cycling legs.

GPS fixes are projected into UTM meters, matched onto the surveyed course
polyline for a path length and lateral offset, and streamed through a
rules engine that maintains standings and flags riders who sit in the
7 m drafting zone beyond the 20 s grace period.
"""

from .course import (
    Course,
    DegenerateCourseError,
    OffCourseError,
    Projection,
    build_course,
    course_from_fixes,
    project,
)
from .engine import (
    PositionRecord,
    RaceEngine,
    RiderState,
    RuleConfig,
    Standings,
    TimestampRegressionError,
    UnknownRiderError,
    ViolationEvent,
    dropback_check,
    zone_test,
)
from .geodesy import (
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
from .ingest import (
    ReplayReport,
    Track,
    TrackOrderingError,
    TrackParseError,
    parse_tracks,
    replay,
    tracks_to_gpx,
    tracks_to_text,
)
from .scenario import (
    Phase,
    RiderScript,
    ScenarioError,
    ScenarioSpec,
    builtin_scenario,
    scenario_from_json,
    synthesize,
)
from .service import Race, RaceRegistry, create_app

__version__ = "0.1.0"
