"""Shortest-path routing over mode-specific street graphs.

The core primitive is a binary-heap Dijkstra run from one source toward
a set of destination nodes, terminating as soon as every destination is
settled. Each edge carries both a length and a travel time; whichever
one is selected as the metric drives the search, and the other is
accumulated along the chosen path so results always report both.

Unreachable destinations are reported with an explicit marker, never an
infinite cost.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Literal, Sequence

from .geodesy import GeoPoint, haversine_m
from .spatial_index import QuadTree

if TYPE_CHECKING:
    from .osm_ingest import ModeProfile

RouteMetric = Literal["distance_m", "time_s"]

ROUTE_METRICS: tuple[str, ...] = ("distance_m", "time_s")

# snap searches start at this radius and double until a node is found
_SNAP_INITIAL_RADIUS_M = 256.0
# half the Earth's circumference, padded: one query at this radius sees everything
_RADIUS_CEILING_M = 2.1e7


def check_metric(metric: str) -> str:
    if metric not in ROUTE_METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {', '.join(ROUTE_METRICS)}")
    return metric


@dataclass(frozen=True)
class RouteResult:
    """Cost of one origin-destination relation.

    total_cost is in the units of the requested metric; secondary_cost is
    the other measure accumulated along the same path. Both are None when
    the destination is unreachable.
    """

    reachable: bool
    total_cost: float | None
    secondary_cost: float | None
    node_path: tuple[int, ...] | None = None


UNREACHABLE = RouteResult(reachable=False, total_cost=None, secondary_cost=None)


@dataclass(frozen=True)
class RoutePlan:
    """Waypoint-to-waypoint legs plus their sum."""

    legs: tuple[RouteResult, ...]
    total: RouteResult


@dataclass
class StreetGraph:
    """Directed graph with dense node indices and positive edge weights.

    out_edges[i] holds (target, length_m, time_s) triples. Instances are
    treated as immutable after construction; the node quadtree used for
    snapping is built lazily and cached.
    """

    nodes: list[GeoPoint]
    out_edges: list[list[tuple[int, float, float]]]
    mode: "ModeProfile"
    _node_index: QuadTree | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        n = len(self.nodes)
        if len(self.out_edges) != n:
            raise ValueError(f"adjacency size {len(self.out_edges)} != node count {n}")
        for src, edges in enumerate(self.out_edges):
            for dst, length_m, time_s in edges:
                if not 0 <= dst < n:
                    raise ValueError(f"edge {src}->{dst} targets a missing node")
                if not (math.isfinite(length_m) and length_m > 0.0):
                    raise ValueError(f"edge {src}->{dst} has non-positive length {length_m!r}")
                if not (math.isfinite(time_s) and time_s > 0.0):
                    raise ValueError(f"edge {src}->{dst} has non-positive time {time_s!r}")

    @property
    def edge_count(self) -> int:
        return sum(len(edges) for edges in self.out_edges)

    def node_index(self) -> QuadTree:
        if self._node_index is None:
            self._node_index = QuadTree([(i, p) for i, p in enumerate(self.nodes)])
        return self._node_index


def snap(g: StreetGraph, p: GeoPoint) -> int:
    """Index of the graph node geodesically nearest to p; ties go to the
    lowest node index. Uses the node quadtree with an expanding radius."""
    if not g.nodes:
        raise ValueError("cannot snap to an empty graph")
    index = g.node_index()
    radius = _SNAP_INITIAL_RADIUS_M
    while True:
        hit = index.nearest_within(p, radius)
        if hit is not None:
            return hit.id
        if radius > _RADIUS_CEILING_M:
            raise RuntimeError("snap failed despite a non-empty graph")
        radius *= 2.0


def snap_distance_m(g: StreetGraph, p: GeoPoint, node: int) -> float:
    return haversine_m(p, g.nodes[node])


def shortest_cost(
    g: StreetGraph,
    src: int,
    dsts: Iterable[int],
    metric: RouteMetric,
    with_paths: bool = False,
) -> dict[int, RouteResult]:
    """One-to-many Dijkstra from src, stopping once every dst is settled.

    Returns a RouteResult per requested destination. Relaxation keeps the
    first path found at equal cost, so results are deterministic for a
    fixed graph regardless of the destination set.
    """
    check_metric(metric)
    n = len(g.nodes)
    targets = set(dsts)
    for t in targets:
        if not 0 <= t < n:
            raise ValueError(f"destination node {t} out of range")
    if not 0 <= src < n:
        raise ValueError(f"source node {src} out of range")

    weight_slot = 1 if metric == "distance_m" else 2
    other_slot = 2 if metric == "distance_m" else 1

    dist: list[float] = [math.inf] * n
    other: list[float] = [math.inf] * n
    parent: list[int] = [-1] * n if with_paths else []
    settled = bytearray(n)
    dist[src] = 0.0
    other[src] = 0.0
    pending = set(targets)
    heap: list[tuple[float, int]] = [(0.0, src)]
    while heap and pending:
        d, u = heapq.heappop(heap)
        if settled[u]:
            continue
        settled[u] = 1
        pending.discard(u)
        if not pending:
            break
        du_other = other[u]
        for edge in g.out_edges[u]:
            v = edge[0]
            if settled[v]:
                continue
            nd = d + edge[weight_slot]
            if nd < dist[v]:
                dist[v] = nd
                other[v] = du_other + edge[other_slot]
                if with_paths:
                    parent[v] = u
                heapq.heappush(heap, (nd, v))

    results: dict[int, RouteResult] = {}
    for t in targets:
        if not settled[t]:
            results[t] = UNREACHABLE
            continue
        path: tuple[int, ...] | None = None
        if with_paths:
            rev = [t]
            while rev[-1] != src:
                rev.append(parent[rev[-1]])
            path = tuple(reversed(rev))
        results[t] = RouteResult(True, dist[t], other[t], path)
    return results


def table(
    g: StreetGraph,
    origins: Sequence[GeoPoint],
    destinations: Sequence[GeoPoint],
    metric: RouteMetric,
) -> list[list[RouteResult]]:
    """All-pairs cost matrix: one one-to-many run per origin.

    Every origin and destination is snapped exactly once.
    """
    check_metric(metric)
    origin_nodes = [snap(g, p) for p in origins]
    dest_nodes = [snap(g, p) for p in destinations]
    dest_set = set(dest_nodes)
    matrix: list[list[RouteResult]] = []
    for src in origin_nodes:
        row_costs = shortest_cost(g, src, dest_set, metric)
        matrix.append([row_costs[d] for d in dest_nodes])
    return matrix


def route(g: StreetGraph, waypoints: Sequence[GeoPoint], metric: RouteMetric) -> RoutePlan:
    """Chain of shortest-path legs through consecutive waypoints.

    Any unreachable leg marks the whole plan unreachable; per-leg results
    are still reported.
    """
    check_metric(metric)
    if len(waypoints) < 2:
        raise ValueError(f"route needs at least 2 waypoints, got {len(waypoints)}")
    nodes = [snap(g, p) for p in waypoints]
    legs: list[RouteResult] = []
    for a, b in zip(nodes, nodes[1:]):
        legs.append(shortest_cost(g, a, {b}, metric, with_paths=True)[b])
    if all(leg.reachable for leg in legs):
        total_cost = 0.0
        secondary = 0.0
        for leg in legs:
            assert leg.total_cost is not None and leg.secondary_cost is not None
            total_cost += leg.total_cost
            secondary += leg.secondary_cost
        total = RouteResult(True, total_cost, secondary)
    else:
        total = UNREACHABLE
    return RoutePlan(legs=tuple(legs), total=total)
