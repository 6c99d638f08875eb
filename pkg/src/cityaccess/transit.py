"""GTFS ingestion and single-bus-ride trip planning.

A bus line is one directed stop sequence: one line per
(route, direction, branch) combination, where the branch discriminator
is the GTFS shape_id. The line's stop order comes from a representative
trip (the one with the most stops; ties go to the lexicographically
smallest trip_id). Where that trip carries complete arrival times, the
line's timetable is the cumulative offset from the first stop; lines
without usable times get their timetable estimated from car-network
travel times between consecutive stops.

Timetables are quantized to whole seconds before an estimation
multiplier is applied, matching the feed convention and keeping ride
times additive. Planner feasibility follows the timetable convention:
riding backwards yields a negative offset and is reported as an
infinite travel time. This module is the one place where the engine
uses float infinity instead of an unreachable marker.

Waiting times are not modeled anywhere: a trip is walk + ride + walk.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Mapping, Sequence

from .errors import CacheFormatError, EstimationError, FeedError
from .geodesy import GeoPoint
from .routing import StreetGraph, route, shortest_cost, snap
from .spatial_index import QuadTree

logger = logging.getLogger(__name__)

TRANSIT_CACHE_FORMAT = "cityaccess-transit-network"
TRANSIT_CACHE_VERSION = 1

TimetableSource = Literal["gtfs_stop_times", "estimated"]
ItineraryKind = Literal["bus_ride", "walk_only"]

_REQUIRED_FILES = ("stops.txt", "routes.txt", "trips.txt", "stop_times.txt")


@dataclass(frozen=True)
class Stop:
    stop_id: str
    name: str
    location: GeoPoint


@dataclass(frozen=True)
class BusLine:
    """One directed stop sequence with a cumulative timetable.

    timetable[k] is the ride time in seconds from stops[0] to stops[k];
    it starts at 0 and never decreases. A line parsed from a feed that
    lacks usable times has timetable None until estimation fills it in.
    """

    line_id: str
    stops: tuple[Stop, ...]
    timetable: tuple[float, ...] | None
    timetable_source: TimetableSource | None

    def __post_init__(self) -> None:
        if len(self.stops) < 2:
            raise ValueError(f"line {self.line_id}: needs at least 2 stops")
        if (self.timetable is None) != (self.timetable_source is None):
            raise ValueError(f"line {self.line_id}: timetable and source must be set together")
        if self.timetable is not None:
            if len(self.timetable) != len(self.stops):
                raise ValueError(f"line {self.line_id}: timetable length != stop count")
            if self.timetable[0] != 0.0:
                raise ValueError(f"line {self.line_id}: timetable must start at 0")
            for a, b in zip(self.timetable, self.timetable[1:]):
                if b < a:
                    raise ValueError(f"line {self.line_id}: timetable must be non-decreasing")


def parse_gtfs_time(value: str) -> int:
    """Seconds since service start for an H:MM:SS / HH:MM:SS value.

    Hours of 24 and beyond are valid: they mark trips crossing midnight.
    """
    parts = value.strip().split(":")
    if len(parts) != 3:
        raise ValueError(f"bad GTFS time {value!r}")
    h, m, s = (int(p) for p in parts)
    if h < 0 or not 0 <= m < 60 or not 0 <= s < 60:
        raise ValueError(f"bad GTFS time {value!r}")
    return h * 3600 + m * 60 + s


def _read_rows(path: Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8-sig") as fh:
        return [dict(row) for row in csv.DictReader(fh)]


def parse_gtfs(directory: str | Path) -> list[BusLine]:
    """Read a GTFS directory into bus lines, sorted by line_id.

    stops.txt, routes.txt, trips.txt and stop_times.txt must exist;
    arrival times inside stop_times.txt are optional per trip. Trips with
    incomplete or non-monotone times are kept but left without a
    timetable, to be estimated later.
    """
    gtfs = Path(directory)
    for name in _REQUIRED_FILES:
        if not (gtfs / name).is_file():
            raise FeedError(f"{gtfs}: missing required GTFS file {name}")

    stops: dict[str, Stop] = {}
    for row in _read_rows(gtfs / "stops.txt"):
        sid = row["stop_id"]
        stops[sid] = Stop(sid, row.get("stop_name", ""), GeoPoint(float(row["stop_lat"]), float(row["stop_lon"])))

    route_ids = {row["route_id"] for row in _read_rows(gtfs / "routes.txt")}

    trips: dict[str, tuple[str, str, str]] = {}
    for row in _read_rows(gtfs / "trips.txt"):
        rid = row["route_id"]
        if rid not in route_ids:
            raise FeedError(f"trip {row['trip_id']} references unknown route {rid}")
        trips[row["trip_id"]] = (rid, row.get("direction_id", "") or "", row.get("shape_id", "") or "")

    by_trip: dict[str, list[tuple[int, str, str]]] = {}
    for row in _read_rows(gtfs / "stop_times.txt"):
        tid = row["trip_id"]
        if tid not in trips:
            raise FeedError(f"stop_times references unknown trip {tid}")
        if row["stop_id"] not in stops:
            raise FeedError(f"trip {tid} references unknown stop {row['stop_id']}")
        when = row.get("arrival_time", "") or row.get("departure_time", "") or ""
        by_trip.setdefault(tid, []).append((int(row["stop_sequence"]), row["stop_id"], when.strip()))

    # one line per (route, direction, branch); representative = most stops,
    # ties by lexicographically smallest trip_id
    representative: dict[tuple[str, str, str], str] = {}
    for tid, events in by_trip.items():
        key = trips[tid]
        best = representative.get(key)
        if best is None or len(events) > len(by_trip[best]) or (len(events) == len(by_trip[best]) and tid < best):
            representative[key] = tid

    lines: list[BusLine] = []
    for key in sorted(representative):
        tid = representative[key]
        events = sorted(by_trip[tid], key=lambda e: e[0])
        if len(events) < 2:
            logger.warning("dropping line %s: representative trip %s has fewer than 2 stops", key, tid)
            continue
        line_stops = tuple(stops[sid] for _, sid, _ in events)
        timetable: tuple[float, ...] | None = None
        source: TimetableSource | None = None
        raw_times = [w for _, _, w in events]
        if all(raw_times):
            try:
                seconds = [parse_gtfs_time(w) for w in raw_times]
            except ValueError as exc:
                raise FeedError(f"trip {tid}: {exc}") from exc
            if any(b < a for a, b in zip(seconds, seconds[1:])) :
                logger.warning("trip %s: non-monotone stop times ignored; timetable left for estimation", tid)
            else:
                timetable = tuple(float(s - seconds[0]) for s in seconds)
                source = "gtfs_stop_times"
        line_id = ":".join(key)
        lines.append(BusLine(line_id, line_stops, timetable, source))
    return lines


def estimate_timetable(line: BusLine, car_graph: StreetGraph, multiplier: float = 1.0) -> BusLine:
    """Fill in a timetable by routing a car over the stop sequence.

    timetable[k] = multiplier x (car seconds from stop 0 to stop k,
    rounded to a whole second). Any unreachable leg makes the whole line
    unusable and raises EstimationError.
    """
    if not (math.isfinite(multiplier) and multiplier > 0.0):
        raise ValueError(f"multiplier must be positive, got {multiplier!r}")
    plan = route(car_graph, [s.location for s in line.stops], "time_s")
    cumulative = [0.0]
    for k, leg in enumerate(plan.legs):
        if not leg.reachable:
            raise EstimationError(line.line_id, f"car network cannot reach stop {k + 1} from stop {k}")
        assert leg.total_cost is not None
        cumulative.append(cumulative[-1] + leg.total_cost)
    timetable = tuple(multiplier * float(round(c)) for c in cumulative)
    return BusLine(line.line_id, line.stops, timetable, "estimated")


@dataclass(frozen=True)
class ReachableLine:
    """A line with a stop inside walking range of a point."""

    line: BusLine
    stop_index: int
    walk_distance_m: float


@dataclass
class TransitNetwork:
    """All plannable lines plus one stop quadtree per line."""

    lines: dict[str, BusLine]
    stop_index: dict[str, QuadTree]


def index_lines(lines: Sequence[BusLine]) -> TransitNetwork:
    """Build the per-line stop indexes. Every line must have a timetable."""
    by_id: dict[str, BusLine] = {}
    trees: dict[str, QuadTree] = {}
    for line in sorted(lines, key=lambda l: l.line_id):
        if line.line_id in by_id:
            raise ValueError(f"duplicate line_id {line.line_id}")
        if line.timetable is None:
            raise ValueError(f"line {line.line_id} has no timetable; estimate it first")
        by_id[line.line_id] = line
        trees[line.line_id] = QuadTree([(i, s.location) for i, s in enumerate(line.stops)])
    return TransitNetwork(lines=by_id, stop_index=trees)


def reachable_lines(p: GeoPoint, network: TransitNetwork, limit_m: float) -> list[ReachableLine]:
    """Lines with at least one stop strictly nearer than limit_m, each with
    that line's single nearest stop. Sorted by line_id."""
    out: list[ReachableLine] = []
    for line_id in sorted(network.lines):
        hit = network.stop_index[line_id].nearest_within(p, limit_m)
        if hit is not None:
            out.append(ReachableLine(network.lines[line_id], hit.id, hit.distance_m))
    return out


def bus_travel_time(line: BusLine, board_index: int, alight_index: int) -> float:
    """Ride seconds between two stop positions on one line.

    Negative timetable offsets mean the ride goes against the line's
    direction; those are infeasible and reported as float infinity.
    """
    if line.timetable is None:
        raise ValueError(f"line {line.line_id} has no timetable")
    n = len(line.stops)
    for name, idx in (("board_index", board_index), ("alight_index", alight_index)):
        if not 0 <= idx < n:
            raise ValueError(f"{name} {idx} out of range for line {line.line_id} with {n} stops")
    delta = line.timetable[alight_index] - line.timetable[board_index]
    if delta < 0.0:
        return math.inf
    return delta


@dataclass(frozen=True)
class Itinerary:
    """One planned trip: a single bus ride bracketed by walks, or a walk.

    For bus_ride itineraries total_s = walk_to_s + ride_s + walk_from_s.
    For walk_only, total_s is the foot-network time and the other fields
    are None; a walk between disconnected points carries total_s = inf.
    """

    kind: ItineraryKind
    total_s: float
    line_id: str | None = None
    board_stop_id: str | None = None
    alight_stop_id: str | None = None
    board_index: int | None = None
    alight_index: int | None = None
    walk_to_s: float | None = None
    ride_s: float | None = None
    walk_from_s: float | None = None


def plan_single_ride(
    p: GeoPoint,
    q: GeoPoint,
    reachable_p: Sequence[ReachableLine],
    reachable_q: Sequence[ReachableLine],
    foot_graph: StreetGraph,
) -> Itinerary:
    """Best single-bus trip from p to q, competing against walking.

    Candidates are the lines reachable from both endpoints, each boarding
    at p's nearest stop on the line and alighting at q's nearest stop,
    which must be strictly later in the stop sequence. Walk legs use
    foot-network travel time. The direct walk competes on equal footing;
    a bus itinerary is returned only when no strictly better walk exists,
    with ties going to the bus, then to the lowest line_id. Both
    reachable sets must have been computed with the same walk limit.
    """
    p_node = snap(foot_graph, p)
    q_node = snap(foot_graph, q)

    from_p = {rl.line.line_id: rl for rl in reachable_p}
    from_q = {rl.line.line_id: rl for rl in reachable_q}
    shared = sorted(set(from_p) & set(from_q))

    board_nodes = {lid: snap(foot_graph, from_p[lid].line.stops[from_p[lid].stop_index].location) for lid in shared}
    alight_nodes = {lid: snap(foot_graph, from_q[lid].line.stops[from_q[lid].stop_index].location) for lid in shared}

    p_costs = shortest_cost(foot_graph, p_node, set(board_nodes.values()) | {q_node}, "time_s")
    # the foot graph is symmetric, so time(stop -> q) = time(q -> stop)
    q_costs = shortest_cost(foot_graph, q_node, set(alight_nodes.values()), "time_s")

    best: Itinerary | None = None
    for lid in shared:
        rl_p, rl_q = from_p[lid], from_q[lid]
        if rl_q.stop_index <= rl_p.stop_index:
            continue
        ride = bus_travel_time(rl_p.line, rl_p.stop_index, rl_q.stop_index)
        if math.isinf(ride):
            continue
        to_leg = p_costs[board_nodes[lid]]
        from_leg = q_costs[alight_nodes[lid]]
        if not (to_leg.reachable and from_leg.reachable):
            continue
        assert to_leg.total_cost is not None and from_leg.total_cost is not None
        total = to_leg.total_cost + ride + from_leg.total_cost
        if best is None or total < best.total_s:
            best = Itinerary(
                kind="bus_ride",
                total_s=total,
                line_id=lid,
                board_stop_id=rl_p.line.stops[rl_p.stop_index].stop_id,
                alight_stop_id=rl_q.line.stops[rl_q.stop_index].stop_id,
                board_index=rl_p.stop_index,
                alight_index=rl_q.stop_index,
                walk_to_s=to_leg.total_cost,
                ride_s=ride,
                walk_from_s=from_leg.total_cost,
            )

    direct = p_costs[q_node]
    walk_total = direct.total_cost if direct.reachable else math.inf
    assert walk_total is not None
    if best is not None and best.total_s <= walk_total:
        return best
    return Itinerary(kind="walk_only", total_s=walk_total)


def save_transit_cache(network: TransitNetwork, path: str | Path, multiplier: float) -> None:
    stop_table: dict[str, Stop] = {}
    for line in network.lines.values():
        for stop in line.stops:
            stop_table[stop.stop_id] = stop
    payload = {
        "format": TRANSIT_CACHE_FORMAT,
        "version": TRANSIT_CACHE_VERSION,
        "multiplier": multiplier,
        "stops": {
            sid: {"lat": s.location.lat, "lon": s.location.lon, "name": s.name}
            for sid, s in sorted(stop_table.items())
        },
        "lines": [
            {
                "line_id": line.line_id,
                "stop_ids": [s.stop_id for s in line.stops],
                "timetable": list(line.timetable or ()),
                "timetable_source": line.timetable_source,
            }
            for line in (network.lines[lid] for lid in sorted(network.lines))
        ],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8")


def load_transit_cache(path: str | Path) -> tuple[TransitNetwork, float]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CacheFormatError(f"{path}: not a transit cache ({exc}); re-run prepare-transit") from exc
    if not isinstance(payload, dict) or payload.get("format") != TRANSIT_CACHE_FORMAT:
        raise CacheFormatError(f"{path}: not a transit cache; re-run prepare-transit")
    if payload.get("version") != TRANSIT_CACHE_VERSION:
        raise CacheFormatError(
            f"{path}: transit cache version {payload.get('version')!r} != {TRANSIT_CACHE_VERSION}; "
            "re-run prepare-transit"
        )
    stops = {
        sid: Stop(sid, item["name"], GeoPoint(item["lat"], item["lon"]))
        for sid, item in payload["stops"].items()
    }
    lines = [
        BusLine(
            item["line_id"],
            tuple(stops[sid] for sid in item["stop_ids"]),
            tuple(item["timetable"]),
            item["timetable_source"],
        )
        for item in payload["lines"]
    ]
    return index_lines(lines), payload["multiplier"]
