"""Presentation layer for the accessibility engine's published files.

The engine emits a heatmap GeoJSON (points with quantile classes plus a
legend) and a histogram CSV; this package turns them into images and
nothing more. It never recomputes classes or bins, and it refuses to
guess: anything off-format raises SchemaError naming the problem field.
"""

from .formats import HeatmapData, HistogramData, SchemaError, load_heatmap, load_histogram
from .render import PlotSpec, heatmap_figure, histogram_figure, legend_labels, render_heatmap, render_histogram

__all__ = [
    "HeatmapData",
    "HistogramData",
    "PlotSpec",
    "SchemaError",
    "heatmap_figure",
    "histogram_figure",
    "legend_labels",
    "load_heatmap",
    "load_histogram",
    "render_heatmap",
    "render_histogram",
]
