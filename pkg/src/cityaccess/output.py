"""Result serialization: quantile classes, CSV tables, heatmap GeoJSON.

All writers format floats with repr, which round-trips exactly and
produces identical bytes for identical inputs, so downstream diffing and
re-run verification work at the byte level.
"""

from __future__ import annotations

import csv
import json
import math
from bisect import bisect_left
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .geodesy import GeoPoint
from .nearest_opportunity import AccessibilityResult
from .routing import RouteMetric, check_metric
from .transit import Itinerary

RESULTS_HEADER = (
    "origin_id,mode,metric,dest_id,value,distance_m,status,"
    "line_id,walk_to_s,ride_s,walk_from_s,snap_distance_m"
)
HISTOGRAM_HEADER = "bin_start,bin_end,count"

DEFAULT_CLASSES = 5

_RAMP_START = (255, 255, 0)  # yellow: shortest times
_RAMP_END = (128, 0, 255)  # violet: longest times


@dataclass(frozen=True)
class QuantileClassification:
    """Quantile breakpoints plus the class of each input value, in input
    order. Classes run 0 (lowest values) to n_classes - 1."""

    n_classes: int
    breakpoints: tuple[float, ...]
    classes: tuple[int, ...]


def classify_quantiles(values: Sequence[float], n_classes: int = DEFAULT_CLASSES) -> QuantileClassification:
    """Rank-based quantile classes over finite values.

    Breakpoint i (1-based, i < n_classes) is the sorted value at rank
    ceil(i * n / n_classes); a value's class is the number of breakpoints
    strictly below it. Equal values always share a class, so with heavy
    ties classes can be skipped entirely.
    """
    if n_classes < 2:
        raise ValueError(f"n_classes must be >= 2, got {n_classes}")
    n = len(values)
    if n < n_classes:
        raise ValueError(f"need at least {n_classes} values, got {n}")
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"values must be finite, got {v!r}")
    ordered = sorted(values)
    breakpoints = tuple(ordered[math.ceil(i * n / n_classes) - 1] for i in range(1, n_classes))
    classes = tuple(bisect_left(breakpoints, v) for v in values)
    return QuantileClassification(n_classes=n_classes, breakpoints=breakpoints, classes=classes)


def color_ramp(n_classes: int) -> list[str]:
    """Hex colors from yellow (class 0) to violet (highest class)."""
    if n_classes < 1:
        raise ValueError(f"n_classes must be >= 1, got {n_classes}")
    colors = []
    for i in range(n_classes):
        t = i / (n_classes - 1) if n_classes > 1 else 0.0
        rgb = tuple(round(a + (b - a) * t) for a, b in zip(_RAMP_START, _RAMP_END))
        colors.append("#{:02x}{:02x}{:02x}".format(*rgb))
    return colors


def _fmt(value: float | int | str | None) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results_csv(results: Iterable[AccessibilityResult], path: str | Path, metric: RouteMetric) -> None:
    """One row per result under a fixed header. Fields that do not apply
    to a row's mode or status stay empty. The metric decides which cost
    lands in the value column."""
    check_metric(metric)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULTS_HEADER.split(","))
        for r in results:
            value = r.travel_time_s if metric == "time_s" else r.distance_m
            it = r.itinerary
            bus = it is not None and it.kind == "bus_ride"
            writer.writerow(
                [
                    r.origin_id,
                    r.mode,
                    metric,
                    _fmt(r.dest_id),
                    _fmt(value),
                    _fmt(r.distance_m),
                    r.status,
                    _fmt(it.line_id if bus else None),
                    _fmt(it.walk_to_s if bus else None),
                    _fmt(it.ride_s if bus else None),
                    _fmt(it.walk_from_s if bus else None),
                    _fmt(r.snap_distance_m),
                ]
            )


def parse_results_csv(path: str | Path) -> tuple[list[AccessibilityResult], str | None]:
    """Read back a results table; returns (results, metric).

    The fixed header cannot carry board/alight stops, so bus itineraries
    come back with stop fields unset; everything else round-trips.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RESULTS_HEADER.split(","):
            raise ValueError(f"{path}: unexpected results header {header!r}")
        results: list[AccessibilityResult] = []
        metric: str | None = None
        for row in reader:
            (origin_id, mode, row_metric, dest_id, value, distance_m, status,
             line_id, walk_to_s, ride_s, walk_from_s, snap_dist) = row
            if metric is None:
                metric = row_metric
            elif metric != row_metric:
                raise ValueError(f"{path}: mixed metrics {metric!r} and {row_metric!r}")
            value_f = float(value) if value else None
            itinerary = None
            if mode == "public_transport" and status == "ok":
                if line_id:
                    itinerary = Itinerary(
                        kind="bus_ride",
                        total_s=value_f if value_f is not None else math.inf,
                        line_id=line_id,
                        walk_to_s=float(walk_to_s),
                        ride_s=float(ride_s),
                        walk_from_s=float(walk_from_s),
                    )
                else:
                    itinerary = Itinerary(kind="walk_only", total_s=value_f if value_f is not None else math.inf)
            results.append(
                AccessibilityResult(
                    origin_id=origin_id,
                    mode=mode,
                    status=status,  # type: ignore[arg-type]
                    dest_id=dest_id or None,
                    travel_time_s=value_f if row_metric == "time_s" else None,
                    distance_m=float(distance_m) if distance_m else None,
                    itinerary=itinerary,
                    snap_distance_m=float(snap_dist) if snap_dist else None,
                )
            )
    return results, metric


def write_heatmap_geojson(
    results: Sequence[AccessibilityResult],
    classification: QuantileClassification,
    locations: Mapping[str, GeoPoint],
    path: str | Path,
) -> None:
    """Point FeatureCollection for heat-mapping, plus a legend.

    Only ok results become features; the classification must have been
    computed over exactly their travel times, in order. The legend is a
    top-level foreign member carrying breakpoints and the yellow-to-violet
    class colors.
    """
    ok = [r for r in results if r.status == "ok"]
    if len(ok) != len(classification.classes):
        raise ValueError(
            f"classification covers {len(classification.classes)} values but there are {len(ok)} ok results"
        )
    features = []
    for r, cls in zip(ok, classification.classes):
        loc = locations[r.origin_id]
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [loc.lon, loc.lat]},
                "properties": {
                    "origin_id": r.origin_id,
                    "travel_time_s": r.travel_time_s,
                    "quantile_class": cls,
                    "dest_id": r.dest_id,
                },
            }
        )
    payload = {
        "type": "FeatureCollection",
        "features": features,
        "legend": {
            "breakpoints": list(classification.breakpoints),
            "colors": color_ramp(classification.n_classes),
        },
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8")


def histogram(values: Sequence[float], bin_count: int) -> tuple[list[float], list[int]]:
    """Equal-width histogram over [min, max]; returns (edges, counts).

    The maximum value lands in the last bin. A single distinct value
    degenerates to zero-width bins with everything in the first one.
    """
    if bin_count < 1:
        raise ValueError(f"bin_count must be >= 1, got {bin_count}")
    if not values:
        raise ValueError("histogram needs at least one value")
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"values must be finite, got {v!r}")
    lo, hi = min(values), max(values)
    width = (hi - lo) / bin_count
    edges = [lo + i * width for i in range(bin_count)] + [hi]
    counts = [0] * bin_count
    for v in values:
        if width == 0.0:
            idx = 0
        else:
            idx = min(int((v - lo) / width), bin_count - 1)
        counts[idx] += 1
    return edges, counts


def write_histogram_csv(edges: Sequence[float], counts: Sequence[int], path: str | Path) -> None:
    if len(edges) != len(counts) + 1:
        raise ValueError(f"{len(edges)} edges do not bound {len(counts)} bins")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTOGRAM_HEADER.split(","))
        for i, count in enumerate(counts):
            writer.writerow([_fmt(float(edges[i])), _fmt(float(edges[i + 1])), count])
