"""Readers for the engine's two published file formats.

Both loaders validate loudly. A renderer that shrugs off a missing field
draws a figure that lies about the data, so every check here raises
SchemaError naming the exact property that drifted.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

HISTOGRAM_HEADER = ["bin_start", "bin_end", "count"]


class SchemaError(ValueError):
    """An input file does not match the engine's published format."""


@dataclass(frozen=True)
class HeatmapPoint:
    lon: float
    lat: float
    quantile_class: int
    travel_time_s: float


@dataclass(frozen=True)
class HeatmapData:
    points: tuple[HeatmapPoint, ...]
    breakpoints: tuple[float, ...]
    colors: tuple[str, ...]

    @property
    def n_classes(self) -> int:
        return len(self.colors)


@dataclass(frozen=True)
class HistogramData:
    """Equal-width bins as emitted; a zero-width degenerate bin is legal."""

    bins: tuple[tuple[float, float, int], ...]

    @property
    def total(self) -> int:
        return sum(count for _, _, count in self.bins)


def _number(value: object, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise SchemaError(f"{where} must be a finite number, got {value!r}")
    return float(value)


def load_heatmap(path: str | Path) -> HeatmapData:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(payload, dict) or payload.get("type") != "FeatureCollection":
        raise SchemaError(f"{path}: expected a FeatureCollection")

    legend = payload.get("legend")
    if legend is None:
        raise SchemaError(f"{path}: missing property 'legend'")
    if not isinstance(legend, dict):
        raise SchemaError(f"{path}: 'legend' must be an object")
    for key in ("breakpoints", "colors"):
        if key not in legend:
            raise SchemaError(f"{path}: legend is missing property '{key}'")
        if not isinstance(legend[key], list):
            raise SchemaError(f"{path}: legend '{key}' must be a list")
    breakpoints = tuple(_number(v, "legend breakpoint") for v in legend["breakpoints"])
    if any(b < a for a, b in zip(breakpoints, breakpoints[1:])):
        raise SchemaError(f"{path}: legend 'breakpoints' must be sorted ascending")
    colors = []
    for value in legend["colors"]:
        if not (isinstance(value, str) and len(value) == 7 and value[0] == "#"):
            raise SchemaError(f"{path}: legend color {value!r} is not a #rrggbb string")
        try:
            int(value[1:], 16)
        except ValueError:
            raise SchemaError(f"{path}: legend color {value!r} is not a #rrggbb string") from None
        colors.append(value)
    if len(colors) != len(breakpoints) + 1:
        raise SchemaError(
            f"{path}: {len(colors)} legend colors do not fit {len(breakpoints)} breakpoints"
        )

    features = payload.get("features")
    if not isinstance(features, list):
        raise SchemaError(f"{path}: missing property 'features'")
    points = []
    for i, feature in enumerate(features):
        where = f"{path}: feature {i}"
        if not isinstance(feature, dict):
            raise SchemaError(f"{where} is not an object")
        geometry = feature.get("geometry")
        if not isinstance(geometry, dict) or geometry.get("type") != "Point":
            raise SchemaError(f"{where}: geometry must be a Point")
        coordinates = geometry.get("coordinates")
        if not (isinstance(coordinates, list) and len(coordinates) == 2):
            raise SchemaError(f"{where}: missing property 'coordinates'")
        lon = _number(coordinates[0], f"{where} longitude")
        lat = _number(coordinates[1], f"{where} latitude")
        properties = feature.get("properties")
        if not isinstance(properties, dict):
            raise SchemaError(f"{where}: missing property 'properties'")
        for key in ("quantile_class", "travel_time_s"):
            if key not in properties:
                raise SchemaError(f"{where}: missing property '{key}'")
        cls = properties["quantile_class"]
        if isinstance(cls, bool) or not isinstance(cls, int):
            raise SchemaError(f"{where}: 'quantile_class' must be an integer, got {cls!r}")
        if not 0 <= cls < len(colors):
            raise SchemaError(
                f"{where}: 'quantile_class' {cls} out of range for {len(colors)} classes"
            )
        value = _number(properties["travel_time_s"], f"{where} 'travel_time_s'")
        points.append(HeatmapPoint(lon=lon, lat=lat, quantile_class=cls, travel_time_s=value))
    return HeatmapData(points=tuple(points), breakpoints=breakpoints, colors=tuple(colors))


def load_histogram(path: str | Path) -> HistogramData:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != HISTOGRAM_HEADER:
        raise SchemaError(
            f"{path}: header must be {','.join(HISTOGRAM_HEADER)!r},"
            f" got {','.join(rows[0]) if rows else '<empty file>'!r}"
        )
    if len(rows) == 1:
        raise SchemaError(f"{path}: no bins")
    bins = []
    for lineno, row in enumerate(rows[1:], start=2):
        where = f"{path}: line {lineno}"
        if len(row) != 3:
            raise SchemaError(f"{where}: expected 3 fields, got {len(row)}")
        try:
            start, end = float(row[0]), float(row[1])
            count = int(row[2])
        except ValueError as exc:
            raise SchemaError(f"{where}: {exc}") from exc
        if not (math.isfinite(start) and math.isfinite(end)) or end < start:
            raise SchemaError(f"{where}: bin [{row[0]}, {row[1]}] is not a valid interval")
        if count < 0:
            raise SchemaError(f"{where}: 'count' must be >= 0, got {count}")
        if bins and start != bins[-1][1]:
            raise SchemaError(f"{where}: bin starts at {row[0]}, previous ended at {bins[-1][1]!r}")
        bins.append((start, end, count))
    return HistogramData(bins=tuple(bins))
