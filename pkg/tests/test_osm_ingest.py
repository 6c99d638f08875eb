"""OSM XML ingestion, mode profiles, chain compression, graph caches."""

import math

import pytest

from cityaccess.errors import CacheFormatError, IngestionError, OsmParseError
from cityaccess.geodesy import haversine_m
from cityaccess.osm_ingest import (
    ModeProfile,
    compression_report,
    default_profiles,
    extract_street_graph,
    load_graph_cache,
    parse_osm_xml,
    save_graph_cache,
)
from cityaccess.routing import shortest_cost

from synthcity import dijkstra_oracle, grid_osm, grid_profile, osm_xml, write_osm


def _parse(tmp_path, nodes, ways, name="map.osm"):
    path = tmp_path / name
    path.write_text(osm_xml(nodes, ways), encoding="utf8")
    return parse_osm_xml(path)


def test_minimal_two_node_way(tmp_path):
    raw = _parse(
        tmp_path,
        [(1, 0.0, 0.0), (2, 0.0, 0.001)],
        [(10, [1, 2], {"highway": "residential"})],
    )
    assert len(raw.nodes) == 2 and len(raw.ways) == 1
    g = extract_street_graph(raw, grid_profile("foot", 5.0))
    assert len(g.nodes) == 2 and g.edge_count == 2
    expected = haversine_m(g.nodes[0], g.nodes[1])
    assert g.out_edges[0][0][1] == pytest.approx(expected, rel=1e-12)


def test_non_highway_ways_dropped(tmp_path):
    raw = _parse(
        tmp_path,
        [(1, 0.0, 0.0), (2, 0.0, 0.001), (3, 0.001, 0.0), (4, 0.001, 0.001)],
        [
            (10, [1, 2], {"highway": "residential"}),
            (11, [3, 4], {"waterway": "river"}),
            (12, [1, 3], {"building": "yes"}),
        ],
    )
    assert len(raw.ways) == 1
    g = extract_street_graph(raw, grid_profile("foot", 5.0))
    assert len(g.nodes) == 2


def test_disallowed_highway_class_excluded_per_mode(tmp_path):
    raw = _parse(
        tmp_path,
        [(1, 0.0, 0.0), (2, 0.0, 0.001), (3, 0.0, 0.002)],
        [
            (10, [1, 2], {"highway": "residential"}),
            (11, [2, 3], {"highway": "motorway"}),
        ],
    )
    profiles = default_profiles()
    foot = extract_street_graph(raw, profiles["foot"])
    car = extract_street_graph(raw, profiles["car"])
    assert len(foot.nodes) == 2
    assert len(car.nodes) == 3


def test_grid_fixture_counts(tmp_path):
    raw = _parse(tmp_path, *grid_osm(5, 5))
    assert len(raw.nodes) == 25
    assert len(raw.ways) == 20


def test_malformed_xml_reports_position(tmp_path):
    path = tmp_path / "broken.osm"
    path.write_text("<osm><node id='1' lat='0'", encoding="utf8")
    with pytest.raises(OsmParseError) as err:
        parse_osm_xml(path)
    assert "line" in str(err.value)


def test_dangling_node_reference_names_way(tmp_path):
    with pytest.raises(IngestionError, match=r"way 10 references missing node 99"):
        _parse(
            tmp_path,
            [(1, 0.0, 0.0)],
            [(10, [1, 99], {"highway": "residential"})],
        )


def test_order_independence(tmp_path):
    # synthcity emits ways before nodes already; also interleave manually
    nodes = [(1, 0.0, 0.0), (2, 0.0, 0.001), (3, 0.0, 0.002)]
    body = [
        "<osm version='0.6'>",
        "<way id='10'><nd ref='1'/><nd ref='2'/><tag k='highway' v='residential'/></way>",
        f"<node id='1' lat='{nodes[0][1]}' lon='{nodes[0][2]}'/>",
        "<way id='11'><nd ref='2'/><nd ref='3'/><tag k='highway' v='residential'/></way>",
        f"<node id='2' lat='{nodes[1][1]}' lon='{nodes[1][2]}'/>",
        f"<node id='3' lat='{nodes[2][1]}' lon='{nodes[2][2]}'/>",
        "</osm>",
    ]
    path = tmp_path / "interleaved.osm"
    path.write_text("".join(body), encoding="utf8")
    raw = parse_osm_xml(path)
    assert len(raw.nodes) == 3 and len(raw.ways) == 2


def test_chain_merge_removes_degree_two_nodes(tmp_path):
    # 3 nodes in a line, single way: middle node merges away
    raw = _parse(
        tmp_path,
        [(1, 0.0, 0.0), (2, 0.0, 0.001), (3, 0.0, 0.002)],
        [(10, [1, 2, 3], {"highway": "residential"})],
    )
    merged = extract_street_graph(raw, grid_profile("foot", 5.0))
    flat = extract_street_graph(raw, grid_profile("foot", 5.0), merge_chains=False)
    assert len(merged.nodes) == 2
    assert len(flat.nodes) == 3
    report = compression_report(raw, merged)
    assert report.raw_node_count == 3 and report.graph_node_count == 2
    assert report.node_ratio == pytest.approx(2 / 3)
    # merged edge length equals the sum of the two segments
    seg = haversine_m(flat.nodes[0], flat.nodes[1])
    assert merged.out_edges[0][0][1] == pytest.approx(2 * seg, rel=1e-12)


def test_chain_merge_cuts_at_intersections(tmp_path):
    # plus sign: 4 arms meeting at center. Center node has usage 4, survives.
    nodes = [
        (1, 0.0, 0.0),
        (2, 0.0, 0.001),
        (3, 0.0, 0.002),
        (4, 0.001, 0.001),
        (5, -0.001, 0.001),
    ]
    ways = [
        (10, [1, 2, 3], {"highway": "residential"}),
        (11, [4, 2, 5], {"highway": "residential"}),
    ]
    raw = _parse(tmp_path, nodes, ways)
    g = extract_street_graph(raw, grid_profile("foot", 5.0))
    assert len(g.nodes) == 5


def test_oneway_semantics(tmp_path):
    nodes = [(1, 0.0, 0.0), (2, 0.0, 0.001)]
    for tag, fwd, back in [("yes", True, False), ("no", True, True), ("-1", False, True)]:
        ways = [(10, [1, 2], {"highway": "residential", "oneway": tag})]
        raw = _parse(tmp_path, nodes, ways, name=f"ow-{tag}.osm")
        car = extract_street_graph(raw, grid_profile("car", 40.0, respects_oneway=True))
        from cityaccess.geodesy import GeoPoint

        a = car.nodes.index(GeoPoint(0.0, 0.0))
        b = car.nodes.index(GeoPoint(0.0, 0.001))
        has_fwd = any(t == b for t, _, _ in car.out_edges[a])
        has_back = any(t == a for t, _, _ in car.out_edges[b])
        assert (has_fwd, has_back) == (fwd, back)
        # foot ignores the restriction entirely
        foot = extract_street_graph(raw, grid_profile("foot", 5.0))
        assert foot.edge_count == 2


def test_unrecognized_oneway_value_treated_as_open(tmp_path, caplog):
    raw = _parse(
        tmp_path,
        [(1, 0.0, 0.0), (2, 0.0, 0.001)],
        [(10, [1, 2], {"highway": "residential", "oneway": "reversible"})],
    )
    with caplog.at_level("WARNING"):
        g = extract_street_graph(raw, grid_profile("car", 40.0, respects_oneway=True))
    assert g.edge_count == 2
    assert any("oneway" in rec.message for rec in caplog.records)


def test_travel_time_formula_exact(tmp_path):
    raw = _parse(tmp_path, *grid_osm(4, 4))
    speed = 50.0
    g = extract_street_graph(raw, grid_profile("car", speed))
    for edges in g.out_edges:
        for _, length_m, time_s in edges:
            assert time_s == length_m / (speed / 3.6)


def test_maxspeed_override_only_for_car(tmp_path):
    nodes = [(1, 0.0, 0.0), (2, 0.0, 0.001)]
    ways = [(10, [1, 2], {"highway": "residential", "maxspeed": "30"})]
    raw = _parse(tmp_path, nodes, ways)
    profiles = default_profiles()
    car = extract_street_graph(raw, profiles["car"])
    bike = extract_street_graph(raw, profiles["bike"])
    length = car.out_edges[0][0][1]
    assert car.out_edges[0][0][2] == length / (30.0 / 3.6)
    assert bike.out_edges[0][0][2] == pytest.approx(length / (15.0 / 3.6))


def test_unparseable_maxspeed_falls_back(tmp_path, caplog):
    nodes = [(1, 0.0, 0.0), (2, 0.0, 0.001)]
    ways = [(10, [1, 2], {"highway": "residential", "maxspeed": "walk"})]
    raw = _parse(tmp_path, nodes, ways)
    with caplog.at_level("WARNING"):
        car = extract_street_graph(raw, default_profiles()["car"])
    length = car.out_edges[0][0][1]
    assert car.out_edges[0][0][2] == length / (40.0 / 3.6)
    assert any("maxspeed" in rec.message for rec in caplog.records)


def test_compression_preserves_shortest_costs(tmp_path):
    # random small street networks: costs between surviving nodes identical
    import random

    for seed in range(4):
        rng = random.Random(seed)
        n = rng.randrange(12, 30)
        nodes = [(i + 1, rng.uniform(0, 0.02), rng.uniform(0, 0.02)) for i in range(n)]
        ways = []
        ids = [nid for nid, _, _ in nodes]
        for w in range(n // 2):
            k = rng.randrange(2, 5)
            refs = rng.sample(ids, k)
            ways.append((100 + w, refs, {"highway": "residential"}))
        raw = _parse(tmp_path, nodes, ways, name=f"rand{seed}.osm")
        profile = grid_profile("foot", 5.0)
        try:
            merged = extract_street_graph(raw, profile)
        except IngestionError:
            continue
        flat = extract_street_graph(raw, profile, merge_chains=False)
        # merged nodes survive with identical coordinates; pair them up
        flat_by_point = {p: i for i, p in enumerate(flat.nodes)}
        pairs = [(mi, flat_by_point[p]) for mi, p in enumerate(merged.nodes)]
        all_merged = set(range(len(merged.nodes)))
        for m_src, f_src in pairs:
            full = dijkstra_oracle(flat, f_src, "time_s")
            got = shortest_cost(merged, m_src, all_merged, "time_s")
            for m_dst, f_dst in pairs:
                want = full[f_dst]
                r = got[m_dst]
                if math.isinf(want):
                    assert not r.reachable
                else:
                    assert r.total_cost == pytest.approx(want, rel=1e-6)


def test_compression_report_arithmetic(tmp_path):
    raw = _parse(tmp_path, *grid_osm(5, 5))
    g = extract_street_graph(raw, grid_profile("foot", 5.0))
    rep = compression_report(raw, g)
    assert rep.graph_node_count == len(g.nodes)
    assert rep.graph_edge_count == g.edge_count
    assert rep.node_ratio == rep.graph_node_count / rep.raw_node_count
    assert rep.edge_ratio == rep.graph_edge_count / rep.raw_edge_count
    # every grid node lies on both a row way and a column way, so all are
    # crossings and the merge changes nothing on this fixture
    assert rep.graph_node_count == rep.raw_node_count
    assert rep.node_ratio == 1.0


def test_empty_graph_rejected(tmp_path):
    raw = _parse(
        tmp_path,
        [(1, 0.0, 0.0), (2, 0.0, 0.001)],
        [(10, [1, 2], {"highway": "motorway"})],
    )
    with pytest.raises(IngestionError):
        extract_street_graph(raw, grid_profile("foot", 5.0))


def test_cache_round_trip_byte_identical(tmp_path):
    raw = _parse(tmp_path, *grid_osm(4, 4))
    g = extract_street_graph(raw, grid_profile("bike", 15.0))
    p1 = tmp_path / "a.json"
    p2 = tmp_path / "b.json"
    save_graph_cache(g, p1)
    loaded = load_graph_cache(p1)
    assert loaded.nodes == g.nodes
    assert loaded.out_edges == g.out_edges
    assert loaded.mode == g.mode
    save_graph_cache(loaded, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_cache_version_mismatch(tmp_path):
    raw = _parse(tmp_path, *grid_osm(3, 3))
    g = extract_street_graph(raw, grid_profile("foot", 5.0))
    path = tmp_path / "g.json"
    save_graph_cache(g, path)
    import json

    blob = json.loads(path.read_text())
    blob["version"] = 999
    path.write_text(json.dumps(blob))
    with pytest.raises(CacheFormatError, match="re-run ingest"):
        load_graph_cache(path)
    blob["version"] = 1
    blob["format"] = "something-else"
    path.write_text(json.dumps(blob))
    with pytest.raises(CacheFormatError):
        load_graph_cache(path)


def test_profile_validation():
    with pytest.raises(ValueError):
        ModeProfile(
            mode="foot",
            allowed_highway_tags=frozenset({"residential"}),
            speed_kmh={},
            fallback_speed_kmh=5.0,
            respects_oneway=True,
            respects_maxspeed=False,
        )
    with pytest.raises(ValueError):
        ModeProfile(
            mode="car",
            allowed_highway_tags=frozenset({"residential"}),
            speed_kmh={},
            fallback_speed_kmh=40.0,
            respects_oneway=False,
            respects_maxspeed=True,
        )
