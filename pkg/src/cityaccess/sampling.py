"""Population-weighted random origin generation inside district polygons.

Districts get integer point counts by largest-remainder apportionment of
their population share. Points are drawn by rejection sampling uniform
lat/lon pairs over the polygon bounding box; a draw must fall strictly
inside the polygon (holes excluded, boundary counts as outside). Each
district samples with its own seed derived from (run seed, district id),
so output never depends on processing order.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .geodesy import GeoPoint

# rejection draws allowed per requested point before declaring the
# polygon degenerate
REJECTION_BUDGET_PER_POINT = 10_000

Ring = tuple[GeoPoint, ...]


def _validate_ring(ring: Sequence[GeoPoint], label: str) -> Ring:
    if len(ring) < 4:
        raise ValueError(f"{label}: ring needs at least 4 vertices including closure")
    if ring[0] != ring[-1]:
        raise ValueError(f"{label}: ring is not closed")
    _reject_self_intersection(ring, label)
    return tuple(ring)


def _orient(ax: float, ay: float, bx: float, by: float, cx: float, cy: float) -> float:
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _proper_cross(p1: GeoPoint, p2: GeoPoint, p3: GeoPoint, p4: GeoPoint) -> bool:
    d1 = _orient(p3.lon, p3.lat, p4.lon, p4.lat, p1.lon, p1.lat)
    d2 = _orient(p3.lon, p3.lat, p4.lon, p4.lat, p2.lon, p2.lat)
    d3 = _orient(p1.lon, p1.lat, p2.lon, p2.lat, p3.lon, p3.lat)
    d4 = _orient(p1.lon, p1.lat, p2.lon, p2.lat, p4.lon, p4.lat)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0


def _reject_self_intersection(ring: Sequence[GeoPoint], label: str) -> None:
    edges = [(ring[i], ring[i + 1]) for i in range(len(ring) - 1)]
    n = len(edges)
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue  # closing edge legitimately touches the first
            if _proper_cross(edges[i][0], edges[i][1], edges[j][0], edges[j][1]):
                raise ValueError(f"{label}: ring is self-intersecting")


@dataclass(frozen=True)
class PolygonPart:
    outer: Ring
    holes: tuple[Ring, ...] = ()


@dataclass(frozen=True)
class DistrictPolygon:
    """One administrative district: polygon parts plus census population."""

    district_id: str
    population: int
    parts: tuple[PolygonPart, ...]

    def __post_init__(self) -> None:
        if self.population < 0:
            raise ValueError(f"district {self.district_id}: population must be >= 0")
        if not self.parts:
            raise ValueError(f"district {self.district_id}: needs at least one polygon")

    @classmethod
    def build(
        cls, district_id: str, population: int, rings: Sequence[Sequence[Sequence[GeoPoint]]]
    ) -> "DistrictPolygon":
        """rings is a multipolygon: a list of [outer, hole, hole, ...] lists."""
        parts = []
        for i, part in enumerate(rings):
            if not part:
                raise ValueError(f"district {district_id}: polygon {i} has no rings")
            outer = _validate_ring(part[0], f"district {district_id} polygon {i} outer")
            holes = tuple(
                _validate_ring(h, f"district {district_id} polygon {i} hole {j}") for j, h in enumerate(part[1:])
            )
            parts.append(PolygonPart(outer=outer, holes=holes))
        return cls(district_id=district_id, population=population, parts=tuple(parts))


def _on_ring(lat: float, lon: float, ring: Ring) -> bool:
    for a, b in zip(ring, ring[1:]):
        cross = _orient(a.lon, a.lat, b.lon, b.lat, lon, lat)
        if cross != 0.0:
            continue
        if min(a.lon, b.lon) <= lon <= max(a.lon, b.lon) and min(a.lat, b.lat) <= lat <= max(a.lat, b.lat):
            return True
    return False


def _even_odd_inside(lat: float, lon: float, ring: Ring) -> bool:
    inside = False
    for a, b in zip(ring, ring[1:]):
        if (a.lat > lat) != (b.lat > lat):
            x_cross = a.lon + (lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat)
            if lon < x_cross:
                inside = not inside
    return inside


def point_strictly_inside(p: GeoPoint, district: DistrictPolygon) -> bool:
    """Ray-casting containment; points on any boundary count as outside."""
    for part in district.parts:
        if _on_ring(p.lat, p.lon, part.outer):
            continue
        if not _even_odd_inside(p.lat, p.lon, part.outer):
            continue
        in_hole = False
        for hole in part.holes:
            if _on_ring(p.lat, p.lon, hole) or _even_odd_inside(p.lat, p.lon, hole):
                in_hole = True
                break
        if not in_hole:
            return True
    return False


def allocate_counts(districts: Sequence[DistrictPolygon], total_n: int, seed: int) -> dict[str, int]:
    """Largest-remainder apportionment of total_n by population.

    Counts sum to total_n exactly. Remainder ties are broken by a
    seed-derived shuffle, so allocation is deterministic per seed.
    """
    if total_n < 0:
        raise ValueError(f"total_n must be >= 0, got {total_n}")
    ids = [d.district_id for d in districts]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate district ids")
    total_pop = sum(d.population for d in districts)
    if total_pop <= 0:
        raise ValueError("total population must be positive")

    ordered = sorted(districts, key=lambda d: d.district_id)
    rng = random.Random(seed)
    tie_keys = {d.district_id: rng.random() for d in ordered}

    counts: dict[str, int] = {}
    remainders: list[tuple[float, float, str]] = []
    assigned = 0
    for d in ordered:
        quota = d.population * total_n / total_pop
        base = math.floor(quota)
        counts[d.district_id] = base
        assigned += base
        remainders.append((quota - base, tie_keys[d.district_id], d.district_id))
    remainders.sort(key=lambda r: (-r[0], r[1], r[2]))
    for _, _, did in remainders[: total_n - assigned]:
        counts[did] += 1
    return counts


def district_seed(seed: int, district_id: str) -> int:
    """Stable per-district sub-seed; Python's hash() is salted per process
    so a cryptographic digest is used instead."""
    digest = hashlib.sha256(f"{seed}:{district_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def sample_in_polygon(district: DistrictPolygon, count: int, seed: int) -> list[GeoPoint]:
    """count points drawn uniformly (in lat/lon) strictly inside the district.

    Raises ValueError when the rejection budget runs out, which flags a
    degenerate polygon (zero or near-zero interior).
    """
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    if count == 0:
        return []
    lat_min = min(p.lat for part in district.parts for p in part.outer)
    lat_max = max(p.lat for part in district.parts for p in part.outer)
    lon_min = min(p.lon for part in district.parts for p in part.outer)
    lon_max = max(p.lon for part in district.parts for p in part.outer)
    rng = random.Random(seed)
    points: list[GeoPoint] = []
    budget = REJECTION_BUDGET_PER_POINT * count
    for _ in range(budget):
        candidate = GeoPoint(rng.uniform(lat_min, lat_max), rng.uniform(lon_min, lon_max))
        if point_strictly_inside(candidate, district):
            points.append(candidate)
            if len(points) == count:
                return points
    raise ValueError(
        f"district {district.district_id}: drew {budget} candidates but only "
        f"{len(points)}/{count} landed inside; polygon is degenerate"
    )


def sample_districts(districts: Sequence[DistrictPolygon], total_n: int, seed: int) -> list[tuple[str, GeoPoint]]:
    """Allocate and sample every district; rows are (origin_id, point) with
    ids of the form <district_id>-<k>, ordered by district then index."""
    counts = allocate_counts(districts, total_n, seed)
    out: list[tuple[str, GeoPoint]] = []
    for d in sorted(districts, key=lambda d: d.district_id):
        pts = sample_in_polygon(d, counts[d.district_id], district_seed(seed, d.district_id))
        out.extend((f"{d.district_id}-{k}", p) for k, p in enumerate(pts))
    return out


def load_districts_geojson(path: str | Path) -> list[DistrictPolygon]:
    """Read a FeatureCollection of Polygon/MultiPolygon districts.

    Each feature needs district_id and population properties. GeoJSON
    coordinates are [lon, lat].
    """
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("type") != "FeatureCollection":
        raise ValueError(f"{path}: expected a FeatureCollection")
    districts: list[DistrictPolygon] = []
    for i, feature in enumerate(payload.get("features", [])):
        props = feature.get("properties") or {}
        if "district_id" not in props or "population" not in props:
            raise ValueError(f"{path}: feature {i} lacks district_id/population properties")
        geom = feature.get("geometry") or {}
        gtype = geom.get("type")
        coords = geom.get("coordinates")
        if gtype == "Polygon":
            polys = [coords]
        elif gtype == "MultiPolygon":
            polys = coords
        else:
            raise ValueError(f"{path}: feature {i} has unsupported geometry {gtype!r}")
        rings = [
            [[GeoPoint(lat, lon) for lon, lat in ring] for ring in poly]
            for poly in polys
        ]
        districts.append(DistrictPolygon.build(str(props["district_id"]), int(props["population"]), rings))
    if not districts:
        raise ValueError(f"{path}: no district features found")
    return districts
