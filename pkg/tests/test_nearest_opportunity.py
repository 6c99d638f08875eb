"""Candidate pruning, nearest-opportunity queries, batch execution."""

import math
import random

import pytest

from cityaccess.geodesy import GeoPoint, haversine_m
from cityaccess.nearest_opportunity import (
    AccessibilityResult,
    BatchStats,
    NearestConfig,
    Opportunity,
    OpportunitySet,
    batch_compute,
    knn_geodesic,
    nearest_by_network,
    nearest_by_transit,
)
from cityaccess.routing import StreetGraph
from cityaccess.transit import estimate_timetable, index_lines

from synthcity import (
    dijkstra_oracle,
    grid_graph,
    grid_profile,
    linear_snap,
    oracle_single_ride,
)

from test_transit import _line


def _random_set(rng, n, span=0.05):
    entries = [
        Opportunity(f"d{i:05d}", GeoPoint(rng.uniform(0, span), rng.uniform(0, span)))
        for i in range(n)
    ]
    return OpportunitySet.build(entries)


def _exhaustive_network_best(p, opportunities, graph, metric):
    """Snap everything with linear scans, run full Dijkstra, take the
    cheapest opportunity with ties on dest_id."""
    src = linear_snap(graph, p)
    dist = dijkstra_oracle(graph, src, metric)
    best = None
    for e in opportunities.entries:
        cost = dist[linear_snap(graph, e.location)]
        if math.isinf(cost):
            continue
        if best is None or (cost, e.dest_id) < best:
            best = (cost, e.dest_id)
    return best


# ---------------------------------------------------------------------------
# opportunity sets and K-NN
# ---------------------------------------------------------------------------

def test_build_validates():
    with pytest.raises(ValueError):
        OpportunitySet.build([])
    p = GeoPoint(0, 0)
    with pytest.raises(ValueError, match="duplicate"):
        OpportunitySet.build([Opportunity("a", p), Opportunity("a", p)])
    s = OpportunitySet.build([Opportunity("b", p), Opportunity("a", p)])
    assert [e.dest_id for e in s.entries] == ["a", "b"]


def test_knn_matches_full_sort():
    rng = random.Random(31)
    s = _random_set(rng, 1000)
    ranked = sorted(s.entries, key=lambda e: (haversine_m(GeoPoint(0.02, 0.02), e.location), e.dest_id))
    p = GeoPoint(0.02, 0.02)
    for k in (1, 5, 10, 100, 1000, 2000):
        got = knn_geodesic(p, s, k)
        want = ranked[: min(k, 1000)]
        assert [e.dest_id for e in got] == [e.dest_id for e in want]


def test_knn_coincident_and_tiny_k():
    rng = random.Random(32)
    s = _random_set(rng, 50)
    target = s.entries[17]
    got = knn_geodesic(target.location, s, 1)
    assert got[0].dest_id == target.dest_id
    with pytest.raises(ValueError):
        knn_geodesic(target.location, s, 0)


def test_knn_distance_ties_break_by_dest_id():
    p0 = GeoPoint(0, 0)
    # four opportunities at identical distance from the origin
    entries = [
        Opportunity("z", GeoPoint(0.001, 0)),
        Opportunity("m", GeoPoint(-0.001, 0)),
        Opportunity("a", GeoPoint(0.001, 0)),
        Opportunity("q", GeoPoint(-0.001, 0)),
    ]
    s = OpportunitySet.build(entries)
    got = knn_geodesic(p0, s, 3)
    assert [e.dest_id for e in got] == ["a", "m", "q"]


# ---------------------------------------------------------------------------
# street-mode nearest
# ---------------------------------------------------------------------------

def test_exhaustive_k_equals_oracle():
    rng = random.Random(33)
    g = grid_graph(8, 8, speed_kmh=5.0)
    entries = [
        Opportunity(f"d{i}", GeoPoint(rng.uniform(0, 0.007), rng.uniform(0, 0.007)))
        for i in range(40)
    ]
    s = OpportunitySet.build(entries)
    cfg = NearestConfig(mode="foot", metric="time_s", candidates=len(entries))
    for _ in range(20):
        p = GeoPoint(rng.uniform(0, 0.007), rng.uniform(0, 0.007))
        got = nearest_by_network(p, s, cfg, g, origin_id="o")
        want = _exhaustive_network_best(p, s, g, "time_s")
        assert got.status == "ok"
        assert (got.travel_time_s, got.dest_id) == (pytest.approx(want[0], rel=1e-9), want[1])


def test_k_monotone_and_never_better_than_exhaustive():
    rng = random.Random(34)
    g = grid_graph(8, 8, speed_kmh=5.0)
    entries = [
        Opportunity(f"d{i}", GeoPoint(rng.uniform(0, 0.007), rng.uniform(0, 0.007)))
        for i in range(60)
    ]
    s = OpportunitySet.build(entries)
    for _ in range(10):
        p = GeoPoint(rng.uniform(0, 0.007), rng.uniform(0, 0.007))
        exact = _exhaustive_network_best(p, s, g, "time_s")[0]
        prev = None
        for k in (1, 3, 10, 30, 60):
            cfg = NearestConfig(mode="foot", metric="time_s", candidates=k)
            r = nearest_by_network(p, s, cfg, g)
            assert r.travel_time_s >= exact - 1e-9
            if prev is not None:
                assert r.travel_time_s <= prev + 1e-9
            prev = r.travel_time_s
        assert prev == pytest.approx(exact, rel=1e-9)


def test_distance_metric_selects_shortest_length():
    g = grid_graph(6, 6, speed_kmh=5.0)
    rng = random.Random(35)
    entries = [
        Opportunity(f"d{i}", GeoPoint(rng.uniform(0, 0.005), rng.uniform(0, 0.005)))
        for i in range(25)
    ]
    s = OpportunitySet.build(entries)
    cfg = NearestConfig(mode="foot", metric="distance_m", candidates=25)
    p = GeoPoint(0.002, 0.002)
    got = nearest_by_network(p, s, cfg, g)
    want = _exhaustive_network_best(p, s, g, "distance_m")
    assert got.status == "ok"
    assert (got.distance_m, got.dest_id) == (pytest.approx(want[0], rel=1e-9), want[1])
    # both measures are populated and consistent with the uniform edge speed
    assert got.travel_time_s == pytest.approx(got.distance_m / (5.0 / 3.6), rel=1e-9)


def test_network_distance_bounded_below_by_geodesic():
    g = grid_graph(6, 6, speed_kmh=5.0)
    entries = [Opportunity(f"d{i}", g.nodes[i]) for i in (3, 17, 30, 35)]
    s = OpportunitySet.build(entries)
    cfg = NearestConfig(mode="foot", metric="distance_m", candidates=4)
    for i in (0, 7, 22):
        p = g.nodes[i]
        r = nearest_by_network(p, s, cfg, g)
        dest = next(e for e in s.entries if e.dest_id == r.dest_id)
        assert r.distance_m >= haversine_m(p, dest.location) - 1e-9
        assert r.snap_distance_m == 0.0


def test_street_unreachable_when_origin_component_has_no_candidates():
    pts = [GeoPoint(0, 0), GeoPoint(0, 0.001), GeoPoint(0.01, 0.01), GeoPoint(0.01, 0.011)]
    length = haversine_m(pts[0], pts[1])
    adjacency = [
        [(1, length, 60.0)],
        [(0, length, 60.0)],
        [(3, length, 60.0)],
        [(2, length, 60.0)],
    ]
    g = StreetGraph(nodes=pts, out_edges=adjacency, mode=grid_profile("foot", 5.0))
    s = OpportunitySet.build([Opportunity("far", GeoPoint(0.01, 0.0105))])
    cfg = NearestConfig(mode="foot", candidates=5)
    r = nearest_by_network(GeoPoint(0, 0.0005), s, cfg, g, origin_id="o1")
    assert r.status == "unreachable"
    assert r.dest_id is None and r.travel_time_s is None
    assert r.snap_distance_m is not None and r.snap_distance_m > 0
    assert r.origin_id == "o1"


def test_transit_mode_rejected_by_street_query():
    g = grid_graph(3, 3)
    s = OpportunitySet.build([Opportunity("d", GeoPoint(0, 0))])
    cfg = NearestConfig(mode="public_transport")
    with pytest.raises(ValueError):
        nearest_by_network(GeoPoint(0, 0), s, cfg, g)


# ---------------------------------------------------------------------------
# transit nearest
# ---------------------------------------------------------------------------

def _transit_fixture(rng):
    foot = grid_graph(7, 7, speed_kmh=5.0)
    car = grid_graph(7, 7, speed_kmh=50.0, mode="car")
    lines = []
    for k in range(4):
        order = rng.sample(range(49), rng.randrange(2, 6))
        raw = _line(f"L{k}", [(car.nodes[i].lat, car.nodes[i].lon) for i in order])
        lines.append(estimate_timetable(raw, car, multiplier=rng.choice([1.0, 1.5])))
    return foot, lines, index_lines(lines)


def test_transit_nearest_matches_composed_oracle():
    rng = random.Random(36)
    foot, lines, network = _transit_fixture(rng)
    entries = [
        Opportunity(f"d{i}", GeoPoint(rng.uniform(0, 0.006), rng.uniform(0, 0.006)))
        for i in range(15)
    ]
    s = OpportunitySet.build(entries)
    cfg = NearestConfig(mode="public_transport", candidates=15, walk_limit_m=500.0)
    for _ in range(12):
        p = GeoPoint(rng.uniform(0, 0.006), rng.uniform(0, 0.006))
        got = nearest_by_transit(p, s, cfg, network, foot, origin_id="o")
        best = None
        for e in s.entries:
            kind, lid, total = oracle_single_ride(p, e.location, lines, foot, 500.0)
            if math.isinf(total):
                continue
            if best is None or (total, e.dest_id) < best[:2]:
                best = (total, e.dest_id, kind, lid)
        assert got.status == "ok"
        assert got.dest_id == best[1]
        assert got.travel_time_s == pytest.approx(best[0], rel=1e-9)
        assert got.itinerary.kind == best[2]
        assert got.itinerary.line_id == best[3]


def test_transit_unreachable_when_walks_disconnected():
    # no foot edges at all: the boarding walk crosses isolated nodes
    pts = [GeoPoint(0, 0), GeoPoint(0, 0.005), GeoPoint(0.02, 0.02)]
    foot = StreetGraph(nodes=pts, out_edges=[[], [], []], mode=grid_profile("foot", 5.0))
    line = _line("A", [(0.0, 0.003), (0.02, 0.02)], timetable=[0.0, 60.0])
    network = index_lines([line])
    s = OpportunitySet.build([Opportunity("d", GeoPoint(0.02, 0.0201))])
    cfg = NearestConfig(mode="public_transport", candidates=3, walk_limit_m=500.0)
    # board stop is within the walk limit but snaps to a different island
    r = nearest_by_transit(GeoPoint(0, 0.0001), s, cfg, network, foot, origin_id="o9")
    assert r.status == "unreachable" and r.origin_id == "o9"


# ---------------------------------------------------------------------------
# batches
# ---------------------------------------------------------------------------

def _batch_fixture(rng, n_origins=24, n_dests=30):
    g = grid_graph(8, 8, speed_kmh=5.0)
    origins = [
        (f"o{i:03d}", GeoPoint(rng.uniform(0, 0.007), rng.uniform(0, 0.007)))
        for i in range(n_origins)
    ]
    entries = [
        Opportunity(f"d{i:03d}", GeoPoint(rng.uniform(0, 0.007), rng.uniform(0, 0.007)))
        for i in range(n_dests)
    ]
    return g, origins, OpportunitySet.build(entries)


def test_batch_results_in_input_order():
    rng = random.Random(37)
    g, origins, s = _batch_fixture(rng)
    cfg = NearestConfig(mode="foot", candidates=5)
    results = batch_compute(origins, s, cfg, {"foot": g}, workers=1)
    assert [r.origin_id for r in results] == [oid for oid, _ in origins]
    assert all(r.status == "ok" for r in results)


def test_batch_permutation_invariance():
    rng = random.Random(38)
    g, origins, s = _batch_fixture(rng)
    cfg = NearestConfig(mode="foot", candidates=5)
    base = {r.origin_id: r for r in batch_compute(origins, s, cfg, {"foot": g}, workers=1)}
    shuffled = origins[:]
    rng.shuffle(shuffled)
    perm = batch_compute(shuffled, s, cfg, {"foot": g}, workers=1)
    assert [r.origin_id for r in perm] == [oid for oid, _ in shuffled]
    for r in perm:
        assert r == base[r.origin_id]


def test_batch_worker_count_invariance():
    rng = random.Random(39)
    g, origins, s = _batch_fixture(rng, n_origins=37)
    cfg = NearestConfig(mode="foot", candidates=7)
    one = batch_compute(origins, s, cfg, {"foot": g}, workers=1)
    three = batch_compute(origins, s, cfg, {"foot": g}, workers=3)
    five = batch_compute(origins, s, cfg, {"foot": g}, workers=5)
    assert one == three == five


def test_batch_transit_worker_invariance():
    rng = random.Random(40)
    foot, lines, network = _transit_fixture(rng)
    origins = [
        (f"o{i}", GeoPoint(rng.uniform(0, 0.006), rng.uniform(0, 0.006)))
        for i in range(18)
    ]
    entries = [
        Opportunity(f"d{i}", GeoPoint(rng.uniform(0, 0.006), rng.uniform(0, 0.006)))
        for i in range(12)
    ]
    s = OpportunitySet.build(entries)
    cfg = NearestConfig(mode="public_transport", candidates=6, walk_limit_m=500.0)
    one = batch_compute(origins, s, cfg, {"foot": foot}, transit=network, workers=1)
    four = batch_compute(origins, s, cfg, {"foot": foot}, transit=network, workers=4)
    assert one == four
    assert all(r.mode == "public_transport" for r in one)


def test_batch_stats_count_candidate_evaluations():
    rng = random.Random(41)
    g, origins, s = _batch_fixture(rng, n_origins=11, n_dests=9)
    cfg = NearestConfig(mode="foot", candidates=4)
    for workers in (1, 3):
        stats = BatchStats()
        batch_compute(origins, s, cfg, {"foot": g}, workers=workers, stats=stats)
        assert stats.network_evaluations == 11 * 4
    # K larger than the catalog clamps to the catalog size
    cfg_big = NearestConfig(mode="foot", candidates=50)
    stats = BatchStats()
    batch_compute(origins, s, cfg_big, {"foot": g}, workers=1, stats=stats)
    assert stats.network_evaluations == 11 * 9


def test_batch_validates_resources():
    rng = random.Random(42)
    g, origins, s = _batch_fixture(rng, n_origins=2)
    with pytest.raises(ValueError, match="car"):
        batch_compute(origins, s, NearestConfig(mode="car"), {"foot": g})
    with pytest.raises(ValueError, match="transit"):
        batch_compute(origins, s, NearestConfig(mode="public_transport"), {"foot": g})
    line = _line("A", [(0.0, 0.0), (0.0, 0.001)], timetable=[0.0, 60.0])
    network = index_lines([line])
    with pytest.raises(ValueError, match="foot"):
        batch_compute(origins, s, NearestConfig(mode="public_transport"), {}, transit=network)


def test_batch_isolates_per_origin_failures(monkeypatch):
    rng = random.Random(43)
    g, origins, s = _batch_fixture(rng, n_origins=6)
    cfg = NearestConfig(mode="foot", candidates=3)
    poisoned = origins[2][1]

    import cityaccess.nearest_opportunity as mod

    real = mod.knn_geodesic

    def exploding(p, opportunities, k):
        if p == poisoned:
            raise RuntimeError("boom")
        return real(p, opportunities, k)

    monkeypatch.setattr(mod, "knn_geodesic", exploding)
    results = batch_compute(origins, s, cfg, {"foot": g}, workers=1)
    assert results[2].status == "unreachable"
    assert results[2].origin_id == origins[2][0]
    ok = [r for i, r in enumerate(results) if i != 2]
    assert all(r.status == "ok" for r in ok)


def test_empty_origin_list():
    rng = random.Random(44)
    g, _, s = _batch_fixture(rng, n_origins=1)
    cfg = NearestConfig(mode="foot")
    assert batch_compute([], s, cfg, {"foot": g}) == []


def test_config_validation():
    with pytest.raises(ValueError):
        NearestConfig(mode="submarine")
    with pytest.raises(ValueError):
        NearestConfig(mode="foot", metric="furlongs")
    with pytest.raises(ValueError):
        NearestConfig(mode="foot", candidates=0)
    with pytest.raises(ValueError):
        NearestConfig(mode="public_transport", walk_limit_m=0.0)
    # street modes tolerate any walk limit; it is unused there
    NearestConfig(mode="car", walk_limit_m=0.0)
