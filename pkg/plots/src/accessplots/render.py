"""Figure builders and file renderers.

Figures present exactly what the loaders hand over: class colors come
from the GeoJSON legend, bin geometry from the CSV. Every class gets a
legend entry even when no point landed in it, so two figures rendered
from runs with the same classification are directly comparable.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.figure import Figure

from .formats import HeatmapData, HistogramData, load_heatmap, load_histogram

DEFAULT_DPI = 150
# keeps matplotlib's version string out of the PNG so byte-level golden
# comparisons survive patch releases that do not change rendering
_SOFTWARE_TAG = "accessplots"


@dataclass(frozen=True)
class PlotSpec:
    """One render request: where to read, where to write, how to label."""

    heatmap_path: Path | None = None
    histogram_path: Path | None = None
    heatmap_out: Path | None = None
    histogram_out: Path | None = None
    title: str | None = None
    dpi: int = DEFAULT_DPI

    def __post_init__(self) -> None:
        if self.dpi < 1:
            raise ValueError(f"dpi must be >= 1, got {self.dpi}")


def legend_labels(breakpoints: tuple[float, ...] | list[float]) -> list[str]:
    """Human-readable interval per class, in seconds.

    Class boundaries are inclusive below: a value equal to a breakpoint
    belongs to the class under it, so the first label is <= and the last
    is strictly >.
    """
    if not breakpoints:
        return ["all values"]
    labels = [f"<= {breakpoints[0]:g} s"]
    for low, high in zip(breakpoints, breakpoints[1:]):
        labels.append(f"{low:g} to {high:g} s")
    labels.append(f"> {breakpoints[-1]:g} s")
    return labels


def heatmap_figure(data: HeatmapData, title: str | None = None) -> Figure:
    """Scatter of origins colored by quantile class, yellow to violet."""
    fig, ax = plt.subplots(figsize=(8.0, 8.0))
    labels = legend_labels(data.breakpoints)
    for cls, (color, label) in enumerate(zip(data.colors, labels)):
        xs = [p.lon for p in data.points if p.quantile_class == cls]
        ys = [p.lat for p in data.points if p.quantile_class == cls]
        ax.scatter(xs, ys, s=12.0, color=color, label=label, edgecolors="none")
    ax.set_xlabel("longitude")
    ax.set_ylabel("latitude")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(title="travel time", loc="best", framealpha=0.9)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return fig


def histogram_figure(data: HistogramData, title: str | None = None) -> Figure:
    """Bar chart of the emitted bins, annotated with the total count."""
    fig, ax = plt.subplots(figsize=(8.0, 5.0))
    span = data.bins[-1][1] - data.bins[0][0]
    for start, end, count in data.bins:
        # a single distinct value produces zero-width bins; give the bar
        # a visible width instead of dropping it
        width = (end - start) or (span or 1.0) * 0.8
        ax.bar(start, count, width=width, align="edge", color="#5a7bd8", edgecolor="white")
    ax.set_xlabel("travel time (s)")
    ax.set_ylabel("count")
    ax.annotate(
        f"n = {data.total}",
        xy=(0.98, 0.95),
        xycoords="axes fraction",
        ha="right",
        va="top",
    )
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return fig


def render_heatmap(spec: PlotSpec) -> Path:
    """Read spec.heatmap_path, write a PNG, return its path.

    The PNG carries a point_count metadata entry equal to the feature
    count, so downstream checks can audit the image against its source.
    """
    if spec.heatmap_path is None or spec.heatmap_out is None:
        raise ValueError("spec needs heatmap_path and heatmap_out")
    data = load_heatmap(spec.heatmap_path)
    fig = heatmap_figure(data, spec.title)
    try:
        fig.savefig(
            spec.heatmap_out,
            dpi=spec.dpi,
            metadata={"Software": _SOFTWARE_TAG, "point_count": str(len(data.points))},
        )
    finally:
        plt.close(fig)
    return Path(spec.heatmap_out)


def render_histogram(spec: PlotSpec) -> Path:
    """Read spec.histogram_path, write a PNG, return its path."""
    if spec.histogram_path is None or spec.histogram_out is None:
        raise ValueError("spec needs histogram_path and histogram_out")
    data = load_histogram(spec.histogram_path)
    fig = histogram_figure(data, spec.title)
    try:
        fig.savefig(
            spec.histogram_out,
            dpi=spec.dpi,
            metadata={"Software": _SOFTWARE_TAG, "total_count": str(data.total)},
        )
    finally:
        plt.close(fig)
    return Path(spec.histogram_out)
