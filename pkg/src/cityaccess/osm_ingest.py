"""OSM extract parsing and per-mode street graph construction.

Parsing keeps highway-tagged ways and every node they reference;
relations are skipped. Node and way elements may arrive in any order
(Overpass output does not guarantee ordering), so the parse buffers
ways and resolves references at the end.

Graph extraction walks each way allowed by a mode profile, emits
directed edges weighted by length and travel time, and merges chains of
degree-2 interior nodes into single edges. A node referenced by two or
more retained ways is an intersection and is never merged away, even if
its degree within one way is 2.
"""

from __future__ import annotations

import json
import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Mapping

from .errors import CacheFormatError, IngestionError, OsmParseError
from .geodesy import GeoPoint, haversine_m
from .modes import check_mode
from .routing import StreetGraph

logger = logging.getLogger(__name__)

GRAPH_CACHE_FORMAT = "cityaccess-street-graph"
GRAPH_CACHE_VERSION = 1

_ONEWAY_FORWARD = "yes"
_ONEWAY_BOTH = "no"
_ONEWAY_REVERSE = "-1"


@dataclass(frozen=True)
class ModeProfile:
    """How one travel mode reads the raw road network.

    Speeds are km/h per highway tag, with a fallback for tags not listed.
    Foot profiles must ignore oneway restrictions; car profiles must
    respect both oneway and maxspeed.
    """

    mode: str
    allowed_highway_tags: frozenset[str]
    speed_kmh: Mapping[str, float]
    fallback_speed_kmh: float
    respects_oneway: bool
    respects_maxspeed: bool

    def __post_init__(self) -> None:
        check_mode(self.mode, street_only=True)
        if self.mode == "foot" and self.respects_oneway:
            raise ValueError("foot profiles must ignore oneway tags")
        if self.mode == "car" and not (self.respects_oneway and self.respects_maxspeed):
            raise ValueError("car profiles must respect oneway and maxspeed")
        for tag, v in list(self.speed_kmh.items()) + [("fallback", self.fallback_speed_kmh)]:
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"speed for {tag!r} must be positive, got {v!r}")

    def speed_for(self, highway: str, maxspeed: str | None) -> float:
        if self.respects_maxspeed and maxspeed is not None:
            try:
                parsed = float(maxspeed)
            except ValueError:
                parsed = math.nan
            if math.isfinite(parsed) and parsed > 0.0:
                return parsed
            logger.warning("ignoring unparseable maxspeed %r", maxspeed)
        return self.speed_kmh.get(highway, self.fallback_speed_kmh)


_FOOT_TAGS = frozenset(
    {
        "footway", "path", "pedestrian", "steps", "living_street", "track",
        "residential", "service", "unclassified", "tertiary", "tertiary_link",
        "secondary", "secondary_link", "primary", "primary_link",
    }
)
_BIKE_TAGS = frozenset(
    {
        "cycleway", "path", "track", "living_street",
        "residential", "service", "unclassified", "tertiary", "tertiary_link",
        "secondary", "secondary_link", "primary", "primary_link",
    }
)
_CAR_TAGS = frozenset(
    {
        "motorway", "motorway_link", "trunk", "trunk_link",
        "primary", "primary_link", "secondary", "secondary_link",
        "tertiary", "tertiary_link", "unclassified", "residential",
        "living_street", "service",
    }
)

_CAR_SPEEDS = {
    "motorway": 100.0,
    "motorway_link": 100.0,
    "primary": 60.0,
    "primary_link": 60.0,
    "secondary": 50.0,
    "secondary_link": 50.0,
    "residential": 40.0,
}


def default_profiles() -> dict[str, ModeProfile]:
    """The built-in profiles; README documents every value. CLI runs can
    override speeds with a key=value file, and tests pin them explicitly."""
    return {
        "foot": ModeProfile(
            mode="foot",
            allowed_highway_tags=_FOOT_TAGS,
            speed_kmh={},
            fallback_speed_kmh=5.0,
            respects_oneway=False,
            respects_maxspeed=False,
        ),
        "bike": ModeProfile(
            mode="bike",
            allowed_highway_tags=_BIKE_TAGS,
            speed_kmh={},
            fallback_speed_kmh=15.0,
            respects_oneway=True,
            respects_maxspeed=False,
        ),
        "car": ModeProfile(
            mode="car",
            allowed_highway_tags=_CAR_TAGS,
            speed_kmh=dict(_CAR_SPEEDS),
            fallback_speed_kmh=30.0,
            respects_oneway=True,
            respects_maxspeed=True,
        ),
    }


@dataclass(frozen=True)
class OsmWay:
    way_id: int
    node_ids: tuple[int, ...]
    tags: Mapping[str, str]


@dataclass
class RawOsmData:
    """Highway ways plus every node they reference."""

    nodes: dict[int, GeoPoint]
    ways: list[OsmWay]


def parse_osm_xml(source: str | Path | IO[bytes]) -> RawOsmData:
    """Parse an OSM XML extract, keeping highway ways and their nodes.

    Ways are buffered until the end of the document so node ordering does
    not matter. A way referencing a node absent from the extract raises
    IngestionError naming the way id.
    """
    all_nodes: dict[int, GeoPoint] = {}
    ways: list[OsmWay] = []
    try:
        context = ET.iterparse(source, events=("end",))  # type: ignore[arg-type]
        for _, elem in context:
            if elem.tag == "node":
                node_id = int(elem.attrib["id"])
                all_nodes[node_id] = GeoPoint(float(elem.attrib["lat"]), float(elem.attrib["lon"]))
            elif elem.tag == "way":
                tags = {t.attrib["k"]: t.attrib["v"] for t in elem.findall("tag")}
                if "highway" in tags:
                    refs = tuple(int(nd.attrib["ref"]) for nd in elem.findall("nd"))
                    ways.append(OsmWay(int(elem.attrib["id"]), refs, tags))
            elif elem.tag == "relation":
                pass
            else:
                continue
            elem.clear()
    except ET.ParseError as exc:
        line, col = exc.position
        raise OsmParseError(f"malformed OSM XML at line {line}, column {col}: {exc}") from exc

    used: set[int] = set()
    for way in ways:
        for ref in way.node_ids:
            if ref not in all_nodes:
                raise IngestionError(f"way {way.way_id} references missing node {ref}")
            used.add(ref)
    return RawOsmData(nodes={i: all_nodes[i] for i in used}, ways=ways)


def _oneway_rule(tags: Mapping[str, str], way_id: int) -> str:
    value = tags.get("oneway", _ONEWAY_BOTH)
    if value in (_ONEWAY_FORWARD, _ONEWAY_BOTH, _ONEWAY_REVERSE):
        return value
    logger.warning("way %d: unknown oneway value %r treated as 'no'", way_id, value)
    return _ONEWAY_BOTH


def extract_street_graph(raw: RawOsmData, profile: ModeProfile, merge_chains: bool = True) -> StreetGraph:
    """Build the routable graph for one mode profile.

    With merge_chains=False the segment-level graph is returned
    uncompressed; compression reports and equivalence tests rely on it.
    """
    allowed = [w for w in raw.ways if w.tags.get("highway") in profile.allowed_highway_tags]

    # occurrence counts decide intersections; a repeated node within one
    # way (loops) counts twice and is therefore kept
    usage: dict[int, int] = {}
    way_nodes: list[tuple[OsmWay, tuple[int, ...]]] = []
    for way in allowed:
        deduped: list[int] = []
        for ref in way.node_ids:
            if not deduped or deduped[-1] != ref:
                deduped.append(ref)
        if len(deduped) < 2:
            continue
        way_nodes.append((way, tuple(deduped)))
        for ref in deduped:
            usage[ref] = usage.get(ref, 0) + 1

    index_of: dict[int, int] = {}
    points: list[GeoPoint] = []
    adjacency: list[list[tuple[int, float, float]]] = []

    def graph_index(osm_id: int) -> int:
        idx = index_of.get(osm_id)
        if idx is None:
            idx = len(points)
            index_of[osm_id] = idx
            points.append(raw.nodes[osm_id])
            adjacency.append([])
        return idx

    skipped_zero = 0
    for way, refs in way_nodes:
        rule = _oneway_rule(way.tags, way.way_id) if profile.respects_oneway else _ONEWAY_BOTH
        speed = profile.speed_for(way.tags["highway"], way.tags.get("maxspeed"))
        # cut positions: endpoints always, intersections always
        cuts = [0]
        for k in range(1, len(refs) - 1):
            if not merge_chains or usage[refs[k]] >= 2:
                cuts.append(k)
        cuts.append(len(refs) - 1)
        for start, end in zip(cuts, cuts[1:]):
            length = 0.0
            for k in range(start, end):
                length += haversine_m(raw.nodes[refs[k]], raw.nodes[refs[k + 1]])
            if length <= 0.0:
                skipped_zero += 1
                continue
            time_s = length / (speed / 3.6)
            a = graph_index(refs[start])
            b = graph_index(refs[end])
            if rule in (_ONEWAY_FORWARD, _ONEWAY_BOTH):
                adjacency[a].append((b, length, time_s))
            if rule in (_ONEWAY_REVERSE, _ONEWAY_BOTH):
                adjacency[b].append((a, length, time_s))
    if skipped_zero:
        logger.warning("skipped %d zero-length edges", skipped_zero)

    if not points or not any(adjacency):
        raise IngestionError(f"no routable {profile.mode} network in extract")
    return StreetGraph(nodes=points, out_edges=adjacency, mode=profile)


@dataclass(frozen=True)
class CompressionReport:
    """Chain-merge effectiveness for one mode graph."""

    mode: str
    raw_node_count: int
    raw_edge_count: int
    graph_node_count: int
    graph_edge_count: int

    @property
    def node_ratio(self) -> float:
        return self.graph_node_count / self.raw_node_count

    @property
    def edge_ratio(self) -> float:
        return self.graph_edge_count / self.raw_edge_count


def compression_report(raw: RawOsmData, graph: StreetGraph) -> CompressionReport:
    """Compare a compressed graph against the segment-level graph the same
    profile would produce."""
    uncompressed = extract_street_graph(raw, graph.mode, merge_chains=False)
    return CompressionReport(
        mode=graph.mode.mode,
        raw_node_count=len(uncompressed.nodes),
        raw_edge_count=uncompressed.edge_count,
        graph_node_count=len(graph.nodes),
        graph_edge_count=graph.edge_count,
    )


def save_graph_cache(graph: StreetGraph, path: str | Path) -> None:
    """Write a versioned graph snapshot. Output is byte-identical for the
    same graph, so re-running ingestion is reproducible."""
    profile = graph.mode
    payload = {
        "format": GRAPH_CACHE_FORMAT,
        "version": GRAPH_CACHE_VERSION,
        "profile": {
            "mode": profile.mode,
            "allowed_highway_tags": sorted(profile.allowed_highway_tags),
            "speed_kmh": {k: profile.speed_kmh[k] for k in sorted(profile.speed_kmh)},
            "fallback_speed_kmh": profile.fallback_speed_kmh,
            "respects_oneway": profile.respects_oneway,
            "respects_maxspeed": profile.respects_maxspeed,
        },
        "nodes": [[p.lat, p.lon] for p in graph.nodes],
        "edges": [
            [src, dst, length_m, time_s]
            for src, edges in enumerate(graph.out_edges)
            for dst, length_m, time_s in edges
        ],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8")


def load_graph_cache(path: str | Path) -> StreetGraph:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CacheFormatError(f"{path}: not a graph cache ({exc}); re-run ingest-osm") from exc
    if not isinstance(payload, dict) or payload.get("format") != GRAPH_CACHE_FORMAT:
        raise CacheFormatError(f"{path}: not a graph cache; re-run ingest-osm")
    if payload.get("version") != GRAPH_CACHE_VERSION:
        raise CacheFormatError(
            f"{path}: graph cache version {payload.get('version')!r} != {GRAPH_CACHE_VERSION}; re-run ingest-osm"
        )
    prof = payload["profile"]
    profile = ModeProfile(
        mode=prof["mode"],
        allowed_highway_tags=frozenset(prof["allowed_highway_tags"]),
        speed_kmh=dict(prof["speed_kmh"]),
        fallback_speed_kmh=prof["fallback_speed_kmh"],
        respects_oneway=prof["respects_oneway"],
        respects_maxspeed=prof["respects_maxspeed"],
    )
    nodes = [GeoPoint(lat, lon) for lat, lon in payload["nodes"]]
    adjacency: list[list[tuple[int, float, float]]] = [[] for _ in nodes]
    for src, dst, length_m, time_s in payload["edges"]:
        adjacency[src].append((dst, length_m, time_s))
    return StreetGraph(nodes=nodes, out_edges=adjacency, mode=profile)
