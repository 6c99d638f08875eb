"""Shared fixture builders: files in the engine's published formats."""

import json

import pytest


def heatmap_payload(n_classes=5, points=None):
    """A well-formed FeatureCollection with an evenly spread legend."""
    if points is None:
        points = [
            (0.001 * i, 0.0005 * i, i % n_classes, 60.0 * (i + 1)) for i in range(12)
        ]
    breakpoints = [100.0 * (i + 1) for i in range(n_classes - 1)]
    t = lambda i: i / (n_classes - 1) if n_classes > 1 else 0.0
    colors = [
        "#{:02x}{:02x}{:02x}".format(
            round(255 + (128 - 255) * t(i)), round(255 + (0 - 255) * t(i)), round(0 + (255 - 0) * t(i))
        )
        for i in range(n_classes)
    ]
    return {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [lon, lat]},
                "properties": {
                    "origin_id": f"o{i}",
                    "travel_time_s": value,
                    "quantile_class": cls,
                    "dest_id": f"d{i}",
                },
            }
            for i, (lon, lat, cls, value) in enumerate(points)
        ],
        "legend": {"breakpoints": breakpoints, "colors": colors},
    }


def write_heatmap(path, payload=None, **kwargs):
    if payload is None:
        payload = heatmap_payload(**kwargs)
    path.write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n")
    return path


def write_histogram(path, rows=None):
    if rows is None:
        rows = [(0.0, 100.0, 4), (100.0, 200.0, 7), (200.0, 300.0, 1)]
    lines = ["bin_start,bin_end,count"]
    lines += [f"{repr(float(a))},{repr(float(b))},{c}" for a, b, c in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture()
def heatmap_file(tmp_path):
    return write_heatmap(tmp_path / "heatmap.geojson")


@pytest.fixture()
def histogram_file(tmp_path):
    return write_histogram(tmp_path / "histogram.csv")
