"""Command line entry point: render engine outputs to images."""

from __future__ import annotations

from pathlib import Path

import click

from .formats import SchemaError, load_heatmap, load_histogram
from .render import DEFAULT_DPI, PlotSpec, render_heatmap, render_histogram


@click.command()
@click.option(
    "--heatmap",
    "heatmap_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Heatmap GeoJSON emitted by the engine.",
)
@click.option(
    "--hist",
    "histogram_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Histogram CSV emitted by the engine.",
)
@click.option(
    "--out-dir",
    type=click.Path(file_okay=False, path_type=Path),
    required=True,
    help="Directory for the rendered PNG files.",
)
@click.option("--title", default=None, help="Title drawn on each figure.")
@click.option("--dpi", default=DEFAULT_DPI, show_default=True, help="Output resolution.")
def render(
    heatmap_path: Path | None,
    histogram_path: Path | None,
    out_dir: Path,
    title: str | None,
    dpi: int,
) -> None:
    """Render accessibility outputs to heatmap.png and histogram.png.

    Inputs must match the engine's published formats exactly; anything
    off-format aborts with a message naming the drifted property.
    """
    if heatmap_path is None and histogram_path is None:
        raise click.UsageError("nothing to render: pass --heatmap and/or --hist")
    if dpi < 1:
        raise click.UsageError(f"dpi must be >= 1, got {dpi}")
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = PlotSpec(
        heatmap_path=heatmap_path,
        histogram_path=histogram_path,
        heatmap_out=out_dir / "heatmap.png",
        histogram_out=out_dir / "histogram.png",
        title=title,
        dpi=dpi,
    )
    try:
        if heatmap_path is not None:
            data = load_heatmap(heatmap_path)
            out = render_heatmap(spec)
            click.echo(f"heatmap: {len(data.points)} points, {data.n_classes} classes -> {out}")
        if histogram_path is not None:
            data = load_histogram(histogram_path)
            out = render_histogram(spec)
            click.echo(f"histogram: {len(data.bins)} bins, {data.total} values -> {out}")
    except SchemaError as exc:
        raise click.ClickException(str(exc)) from exc


if __name__ == "__main__":
    render()
