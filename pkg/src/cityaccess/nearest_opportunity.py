"""Nearest-opportunity queries with geodesic candidate pruning.

Exact network search over tens of thousands of opportunities per origin
is wasteful: straight-line distance is a good predictor of network
cost, so each query first takes the K geodesically closest opportunities
from a quadtree, then routes to only those candidates and keeps the
cheapest. K trades accuracy for speed; at K = |opportunities| the result
is exact by construction.

batch_compute runs one origin at a time, optionally across forked
worker processes. Output order always matches input order and per-origin
failures are recorded in their row rather than aborting the batch, so a
batch is deterministic for a fixed configuration at any worker count.
"""

from __future__ import annotations

import logging
import math
import multiprocessing
import os
from dataclasses import dataclass, field
from typing import Any, Literal, Mapping, Sequence

from .geodesy import GeoPoint, haversine_m
from .modes import STREET_MODES, check_mode
from .routing import RouteMetric, StreetGraph, check_metric, shortest_cost, snap, snap_distance_m
from .spatial_index import QuadTree
from .transit import Itinerary, TransitNetwork, ReachableLine, plan_single_ride, reachable_lines

logger = logging.getLogger(__name__)

ResultStatus = Literal["ok", "unreachable"]

DEFAULT_CANDIDATES = 10
DEFAULT_WALK_LIMIT_M = 500.0

# expanding-radius start for geodesic K-NN queries
_KNN_INITIAL_RADIUS_M = 500.0
# past half the Earth's circumference every point is strictly within range
_KNN_RADIUS_CEILING_M = 2.1e7


@dataclass(frozen=True)
class Opportunity:
    dest_id: str
    location: GeoPoint
    metadata: Mapping[str, str] = field(default_factory=dict)


@dataclass
class OpportunitySet:
    """Destination catalog with unique ids and a geodesic index.

    Entries are kept sorted by dest_id so quadtree tie-breaking on the
    entry position agrees with tie-breaking on dest_id.
    """

    entries: list[Opportunity]
    index: QuadTree

    @classmethod
    def build(cls, entries: Sequence[Opportunity]) -> "OpportunitySet":
        if not entries:
            raise ValueError("opportunity set cannot be empty")
        ordered = sorted(entries, key=lambda e: e.dest_id)
        for a, b in zip(ordered, ordered[1:]):
            if a.dest_id == b.dest_id:
                raise ValueError(f"duplicate dest_id {a.dest_id!r}")
        index = QuadTree([(i, e.location) for i, e in enumerate(ordered)])
        return cls(entries=ordered, index=index)


@dataclass(frozen=True)
class NearestConfig:
    """Knobs for one batch: mode, metric, candidate count, walk limit."""

    mode: str
    metric: RouteMetric = "time_s"
    candidates: int = DEFAULT_CANDIDATES
    walk_limit_m: float = DEFAULT_WALK_LIMIT_M

    def __post_init__(self) -> None:
        check_mode(self.mode)
        check_metric(self.metric)
        if self.candidates < 1:
            raise ValueError(f"candidates must be >= 1, got {self.candidates}")
        if self.mode == "public_transport" and not (
            math.isfinite(self.walk_limit_m) and self.walk_limit_m > 0.0
        ):
            raise ValueError(f"walk_limit_m must be positive, got {self.walk_limit_m!r}")


@dataclass(frozen=True)
class AccessibilityResult:
    """Nearest opportunity for one origin, or an unreachable marker."""

    origin_id: str
    mode: str
    status: ResultStatus
    dest_id: str | None = None
    travel_time_s: float | None = None
    distance_m: float | None = None
    itinerary: Itinerary | None = None
    snap_distance_m: float | None = None


@dataclass
class BatchStats:
    """Bookkeeping for the pruning-efficiency contract."""

    network_evaluations: int = 0


def knn_geodesic(p: GeoPoint, opportunities: OpportunitySet, k: int) -> list[Opportunity]:
    """The k geodesically closest opportunities, ties broken by dest_id.

    Runs radius queries with a doubling radius until at least k hits (or
    the whole set) are strictly inside, which guarantees the true k
    nearest are among them.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    want = min(k, len(opportunities.entries))
    radius = _KNN_INITIAL_RADIUS_M
    while True:
        hits = opportunities.index.within_radius(p, radius)
        if len(hits) >= want or radius > _KNN_RADIUS_CEILING_M:
            break
        radius *= 2.0
    # entry order is dest_id order, so the (distance, position) sort from
    # the quadtree already matches (distance, dest_id)
    return [opportunities.entries[h.id] for h in hits[:want]]


def nearest_by_network(
    p: GeoPoint,
    opportunities: OpportunitySet,
    cfg: NearestConfig,
    graph: StreetGraph,
    origin_id: str = "",
    snap_cache: dict[str, int] | None = None,
    stats: BatchStats | None = None,
) -> AccessibilityResult:
    """Cheapest street-mode opportunity among the K geodesic candidates.

    Always reports both travel time and network distance, plus how far
    the origin had to snap to reach the graph. Candidate ties on cost
    resolve to the lowest dest_id.
    """
    check_mode(cfg.mode, street_only=True)
    candidates = knn_geodesic(p, opportunities, cfg.candidates)
    if stats is not None:
        stats.network_evaluations += len(candidates)
    src = snap(graph, p)
    origin_snap_m = snap_distance_m(graph, p, src)

    cand_nodes: list[int] = []
    for c in candidates:
        if snap_cache is not None and c.dest_id in snap_cache:
            cand_nodes.append(snap_cache[c.dest_id])
            continue
        node = snap(graph, c.location)
        if snap_cache is not None:
            snap_cache[c.dest_id] = node
        cand_nodes.append(node)

    costs = shortest_cost(graph, src, set(cand_nodes), cfg.metric)
    best: tuple[float, str, int] | None = None
    for c, node in zip(candidates, cand_nodes):
        r = costs[node]
        if not r.reachable:
            continue
        assert r.total_cost is not None
        key = (r.total_cost, c.dest_id)
        if best is None or key < (best[0], best[1]):
            best = (r.total_cost, c.dest_id, node)
    if best is None:
        return AccessibilityResult(
            origin_id=origin_id, mode=cfg.mode, status="unreachable", snap_distance_m=origin_snap_m
        )
    chosen = costs[best[2]]
    assert chosen.total_cost is not None and chosen.secondary_cost is not None
    if cfg.metric == "time_s":
        time_s, dist_m = chosen.total_cost, chosen.secondary_cost
    else:
        time_s, dist_m = chosen.secondary_cost, chosen.total_cost
    return AccessibilityResult(
        origin_id=origin_id,
        mode=cfg.mode,
        status="ok",
        dest_id=best[1],
        travel_time_s=time_s,
        distance_m=dist_m,
        snap_distance_m=origin_snap_m,
    )


def nearest_by_transit(
    p: GeoPoint,
    opportunities: OpportunitySet,
    cfg: NearestConfig,
    network: TransitNetwork,
    foot_graph: StreetGraph,
    origin_id: str = "",
    reachable_cache: dict[str, list[ReachableLine]] | None = None,
    stats: BatchStats | None = None,
) -> AccessibilityResult:
    """Cheapest single-ride (or walk) opportunity among the K candidates.

    Walk-only itineraries compete on equal footing with bus rides. An
    origin whose every candidate is unreachable on foot gets an
    unreachable row.
    """
    candidates = knn_geodesic(p, opportunities, cfg.candidates)
    if stats is not None:
        stats.network_evaluations += len(candidates)
    src = snap(foot_graph, p)
    origin_snap_m = snap_distance_m(foot_graph, p, src)
    reach_p = reachable_lines(p, network, cfg.walk_limit_m)

    best: tuple[float, str, Itinerary] | None = None
    for c in candidates:
        if reachable_cache is not None and c.dest_id in reachable_cache:
            reach_c = reachable_cache[c.dest_id]
        else:
            reach_c = reachable_lines(c.location, network, cfg.walk_limit_m)
            if reachable_cache is not None:
                reachable_cache[c.dest_id] = reach_c
        itinerary = plan_single_ride(p, c.location, reach_p, reach_c, foot_graph)
        if math.isinf(itinerary.total_s):
            continue
        key = (itinerary.total_s, c.dest_id)
        if best is None or key < (best[0], best[1]):
            best = (itinerary.total_s, c.dest_id, itinerary)
    if best is None:
        return AccessibilityResult(
            origin_id=origin_id, mode="public_transport", status="unreachable", snap_distance_m=origin_snap_m
        )
    return AccessibilityResult(
        origin_id=origin_id,
        mode="public_transport",
        status="ok",
        dest_id=best[1],
        travel_time_s=best[0],
        itinerary=best[2],
        snap_distance_m=origin_snap_m,
    )


# worker state shared with forked processes; set before the pool spawns
_FORK_STATE: dict[str, Any] = {}


def _compute_one(
    origin_id: str,
    location: GeoPoint,
    opportunities: OpportunitySet,
    cfg: NearestConfig,
    graphs: Mapping[str, StreetGraph],
    transit: TransitNetwork | None,
    snap_cache: dict[str, int],
    reachable_cache: dict[str, list[ReachableLine]],
    stats: BatchStats | None,
) -> AccessibilityResult:
    try:
        if cfg.mode in STREET_MODES:
            return nearest_by_network(
                location, opportunities, cfg, graphs[cfg.mode],
                origin_id=origin_id, snap_cache=snap_cache, stats=stats,
            )
        assert transit is not None
        return nearest_by_transit(
            location, opportunities, cfg, transit, graphs["foot"],
            origin_id=origin_id, reachable_cache=reachable_cache, stats=stats,
        )
    except Exception:
        logger.exception("origin %s failed; recording unreachable row", origin_id)
        return AccessibilityResult(origin_id=origin_id, mode=cfg.mode, status="unreachable")


def _run_chunk(bounds: tuple[int, int]) -> tuple[list[AccessibilityResult], int]:
    origins = _FORK_STATE["origins"]
    stats = BatchStats()
    out = [
        _compute_one(
            origins[i][0], origins[i][1],
            _FORK_STATE["opportunities"], _FORK_STATE["cfg"], _FORK_STATE["graphs"],
            _FORK_STATE["transit"], _FORK_STATE["snap_cache"], _FORK_STATE["reachable_cache"],
            stats,
        )
        for i in range(bounds[0], bounds[1])
    ]
    return out, stats.network_evaluations


def batch_compute(
    origins: Sequence[tuple[str, GeoPoint]],
    opportunities: OpportunitySet,
    cfg: NearestConfig,
    graphs: Mapping[str, StreetGraph],
    transit: TransitNetwork | None = None,
    workers: int | None = None,
    stats: BatchStats | None = None,
) -> list[AccessibilityResult]:
    """Nearest-opportunity results for every origin, in input order.

    graphs maps mode name to street graph; transit mode additionally
    needs a foot graph for walk legs plus the transit network. workers
    defaults to the available parallelism; origins are independent, so
    results are identical at any worker count.
    """
    if cfg.mode in STREET_MODES:
        if cfg.mode not in graphs:
            raise ValueError(f"no street graph provided for mode {cfg.mode!r}")
    else:
        if transit is None:
            raise ValueError("public_transport mode needs a transit network")
        if "foot" not in graphs:
            raise ValueError("public_transport mode needs a foot graph for walk legs")

    # build lazy indexes up front so forked workers inherit them
    if cfg.mode in STREET_MODES:
        graphs[cfg.mode].node_index()
    else:
        graphs["foot"].node_index()

    if workers is None:
        workers = os.cpu_count() or 1
    workers = max(1, min(workers, len(origins) or 1))

    if workers > 1:
        try:
            ctx = multiprocessing.get_context("fork")
        except ValueError:
            logger.warning("fork start method unavailable; falling back to one worker")
            workers = 1

    if workers == 1 or len(origins) == 0:
        snap_cache: dict[str, int] = {}
        reachable_cache: dict[str, list[ReachableLine]] = {}
        return [
            _compute_one(oid, loc, opportunities, cfg, graphs, transit, snap_cache, reachable_cache, stats)
            for oid, loc in origins
        ]

    chunk = max(1, math.ceil(len(origins) / (workers * 4)))
    bounds = [(i, min(i + chunk, len(origins))) for i in range(0, len(origins), chunk)]
    _FORK_STATE.update(
        origins=list(origins), opportunities=opportunities, cfg=cfg, graphs=dict(graphs),
        transit=transit, snap_cache={}, reachable_cache={},
    )
    try:
        with ctx.Pool(processes=workers) as pool:
            pieces = pool.map(_run_chunk, bounds)
    finally:
        _FORK_STATE.clear()
    results: list[AccessibilityResult] = []
    for piece, evaluations in pieces:
        results.extend(piece)
        if stats is not None:
            stats.network_evaluations += evaluations
    return results
