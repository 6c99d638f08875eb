"""Point-region quadtree over geographic coordinates.

Supports radius-bounded nearest-neighbor and radius queries with
branch-and-bound pruning. Trees are built once and never mutated, so
they are safe to share across threads or forked workers. Query results
are independent of insertion order: ties on distance always resolve to
the lowest payload id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterator, Sequence

from .geodesy import EARTH_RADIUS_M, GeoPoint, haversine_m

DEFAULT_CAPACITY = 16
MAX_DEPTH = 20


@dataclass(frozen=True)
class NearestHit:
    """One query result: payload id, point, and great-circle distance."""

    id: Any
    location: GeoPoint
    distance_m: float


@dataclass
class QueryStats:
    """Optional instrumentation: tree nodes touched by one query."""

    nodes_visited: int = 0


def _lon_gap_deg(a: float, b: float) -> float:
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


@dataclass
class _Node:
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float
    depth: int
    points: list[tuple[Any, GeoPoint]] = field(default_factory=list)
    children: list["_Node"] | None = None

    def min_distance_m(self, p: GeoPoint) -> float:
        """Conservative lower bound on the distance from p to any point in the box.

        Combines a meridional bound (central angle >= |dlat|) with a
        longitudinal bound scaled by the smallest cosine of latitude the
        box can reach. Both underestimate the true great-circle distance,
        so pruning on this value never discards a viable subtree.
        """
        inside_lat = self.lat_min <= p.lat <= self.lat_max
        inside_lon = self.lon_min <= p.lon <= self.lon_max
        if inside_lat and inside_lon:
            return 0.0
        dlat = max(0.0, self.lat_min - p.lat, p.lat - self.lat_max)
        if inside_lon:
            dlon = 0.0
        else:
            dlon = min(_lon_gap_deg(p.lon, self.lon_min), _lon_gap_deg(p.lon, self.lon_max))
        bound = EARTH_RADIUS_M * math.radians(dlat)
        if dlon > 0.0:
            # cos(lat) is smallest at the box latitude farthest from the equator
            cos_box = min(math.cos(math.radians(self.lat_min)), math.cos(math.radians(self.lat_max)))
            s = math.cos(math.radians(p.lat)) * cos_box * math.sin(math.radians(dlon) / 2.0) ** 2
            if s > 0.0:
                lon_bound = 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(s)))
                bound = max(bound, lon_bound)
        return bound

    def child_index(self, p: GeoPoint) -> int:
        mid_lat = (self.lat_min + self.lat_max) / 2.0
        mid_lon = (self.lon_min + self.lon_max) / 2.0
        return (2 if p.lat >= mid_lat else 0) + (1 if p.lon >= mid_lon else 0)

    def subdivide(self) -> None:
        mid_lat = (self.lat_min + self.lat_max) / 2.0
        mid_lon = (self.lon_min + self.lon_max) / 2.0
        d = self.depth + 1
        self.children = [
            _Node(self.lat_min, mid_lat, self.lon_min, mid_lon, d),
            _Node(self.lat_min, mid_lat, mid_lon, self.lon_max, d),
            _Node(mid_lat, self.lat_max, self.lon_min, mid_lon, d),
            _Node(mid_lat, self.lat_max, mid_lon, self.lon_max, d),
        ]


class QuadTree:
    """Static quadtree over (id, GeoPoint) pairs.

    Leaves split at `capacity` points until `MAX_DEPTH`, where they grow
    without bound so duplicate coordinates cannot recurse forever. Ids
    must be mutually comparable; they break distance ties.
    """

    def __init__(self, points: Sequence[tuple[Any, GeoPoint]], capacity: int = DEFAULT_CAPACITY):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._count = len(points)
        if points:
            lats = [p.lat for _, p in points]
            lons = [p.lon for _, p in points]
            self._root = _Node(min(lats), max(lats), min(lons), max(lons), depth=0)
        else:
            self._root = _Node(0.0, 0.0, 0.0, 0.0, depth=0)
        for pid, loc in points:
            self._insert(pid, loc)

    def __len__(self) -> int:
        return self._count

    def _insert(self, pid: Any, loc: GeoPoint) -> None:
        node = self._root
        while node.children is not None:
            node = node.children[node.child_index(loc)]
        node.points.append((pid, loc))
        if len(node.points) > self.capacity and node.depth < MAX_DEPTH:
            node.subdivide()
            assert node.children is not None
            for entry in node.points:
                node.children[node.child_index(entry[1])].points.append(entry)
            node.points = []

    def iter_points(self) -> Iterator[tuple[Any, GeoPoint]]:
        stack = [self._root]
        while stack:
            node = stack.pop()
            if node.children is not None:
                stack.extend(node.children)
            else:
                yield from node.points

    def nearest_within(self, p: GeoPoint, limit_m: float, stats: QueryStats | None = None) -> NearestHit | None:
        """Closest point strictly nearer than limit_m, or None.

        Ties on distance go to the lowest id. Subtrees are visited only
        while their lower bound can still hold the winner; bound == best
        is visited too, so an equal-distance lower id is never lost.
        """
        if not (limit_m > 0.0):
            raise ValueError(f"limit_m must be positive, got {limit_m!r}")
        best: tuple[float, Any, GeoPoint] | None = None

        def visit(node: _Node) -> None:
            nonlocal best
            if stats is not None:
                stats.nodes_visited += 1
            if node.children is None:
                for pid, loc in node.points:
                    d = haversine_m(p, loc)
                    if d >= limit_m:
                        continue
                    if best is None or (d, pid) < (best[0], best[1]):
                        best = (d, pid, loc)
                return
            ordered = sorted(node.children, key=lambda c: c.min_distance_m(p))
            for child in ordered:
                bound = child.min_distance_m(p)
                if bound >= limit_m:
                    continue
                if best is not None and bound > best[0]:
                    continue
                visit(child)

        visit(self._root)
        if best is None:
            return None
        return NearestHit(id=best[1], location=best[2], distance_m=best[0])

    def within_radius(self, p: GeoPoint, limit_m: float, stats: QueryStats | None = None) -> list[NearestHit]:
        """All points strictly nearer than limit_m, sorted by (distance, id)."""
        if not (limit_m > 0.0):
            raise ValueError(f"limit_m must be positive, got {limit_m!r}")
        hits: list[tuple[float, Any, GeoPoint]] = []
        stack = [self._root]
        while stack:
            node = stack.pop()
            if stats is not None:
                stats.nodes_visited += 1
            if node.children is not None:
                for child in node.children:
                    if child.min_distance_m(p) < limit_m:
                        stack.append(child)
                continue
            for pid, loc in node.points:
                d = haversine_m(p, loc)
                if d < limit_m:
                    hits.append((d, pid, loc))
        hits.sort(key=lambda h: (h[0], h[1]))
        return [NearestHit(id=pid, location=loc, distance_m=d) for d, pid, loc in hits]
