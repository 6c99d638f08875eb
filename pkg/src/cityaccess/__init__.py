"""Batch multi-modal accessibility engine.

Computes nearest-opportunity travel costs over OpenStreetMap street
graphs (foot, bike, car) and single-ride bus itineraries from GTFS
feeds, and serializes results for heat-mapping.
"""

from .geodesy import EARTH_RADIUS_M, GeoPoint, haversine_m
from .nearest_opportunity import (
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
from .osm_ingest import (
    CompressionReport,
    ModeProfile,
    RawOsmData,
    compression_report,
    default_profiles,
    extract_street_graph,
    load_graph_cache,
    parse_osm_xml,
    save_graph_cache,
)
from .output import QuantileClassification, classify_quantiles, histogram, write_heatmap_geojson, write_results_csv
from .routing import RoutePlan, RouteResult, StreetGraph, route, shortest_cost, snap, table
from .sampling import DistrictPolygon, allocate_counts, sample_districts, sample_in_polygon
from .spatial_index import NearestHit, QuadTree
from .transit import (
    BusLine,
    Itinerary,
    ReachableLine,
    Stop,
    TransitNetwork,
    bus_travel_time,
    estimate_timetable,
    index_lines,
    parse_gtfs,
    plan_single_ride,
    reachable_lines,
)

__version__ = "0.1.0"
