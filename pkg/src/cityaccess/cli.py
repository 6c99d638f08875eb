"""Command-line pipeline: ingest, prepare, sample, compute, export.

Every command validates its inputs before touching outputs, echoes its
effective configuration, and uses exit status 2 for usage or
configuration problems and 1 for runtime failures. Outputs are removed
when a command dies partway, so a half-written results file never looks
finished.
"""

from __future__ import annotations

import csv
import logging
import sys
import time
from pathlib import Path

import click

from . import output as output_mod
from .errors import EngineError, EstimationError
from .geodesy import GeoPoint
from .modes import ALL_MODES, STREET_MODES
from .nearest_opportunity import (
    DEFAULT_CANDIDATES,
    DEFAULT_WALK_LIMIT_M,
    BatchStats,
    NearestConfig,
    Opportunity,
    OpportunitySet,
    batch_compute,
)
from .osm_ingest import (
    ModeProfile,
    compression_report,
    default_profiles,
    extract_street_graph,
    load_graph_cache,
    parse_osm_xml,
    save_graph_cache,
)
from .routing import ROUTE_METRICS
from .sampling import load_districts_geojson, sample_districts
from .transit import estimate_timetable, index_lines, load_transit_cache, parse_gtfs, save_transit_cache

logger = logging.getLogger(__name__)

DEFAULT_BINS = 20

_config_option = click.option(
    "--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
    help="key=value file supplying defaults for any long option; explicit flags win.",
)


def _read_config(path: str | None) -> dict[str, str]:
    values: dict[str, str] = {}
    if path is None:
        return values
    for i, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise click.UsageError(f"{path}:{i}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def _merge(flag_value, config: dict[str, str], key: str, default, cast):
    """Explicit flag > config file > built-in default."""
    if flag_value is not None:
        return flag_value
    if key in config:
        try:
            return cast(config[key])
        except ValueError as exc:
            raise click.UsageError(f"config key {key}: {exc}") from exc
    return default


def _echo_config(pairs: dict[str, object]) -> None:
    click.echo("config: " + " ".join(f"{k}={pairs[k]}" for k in sorted(pairs)))


def _load_speed_overrides(path: str | None) -> dict[str, dict[str, float]]:
    """Speed file rows look like car.residential=35 or bike.fallback=14."""
    overrides: dict[str, dict[str, float]] = {}
    if path is None:
        return overrides
    for key, value in _read_config(path).items():
        mode, _, tag = key.partition(".")
        if mode not in STREET_MODES or not tag:
            raise click.UsageError(f"speed override {key!r}: expected <mode>.<highway_tag>=kmh")
        try:
            overrides.setdefault(mode, {})[tag] = float(value)
        except ValueError as exc:
            raise click.UsageError(f"speed override {key!r}: {exc}") from exc
    return overrides


def _apply_speed_overrides(profile: ModeProfile, overrides: dict[str, float]) -> ModeProfile:
    if not overrides:
        return profile
    speeds = dict(profile.speed_kmh)
    fallback = profile.fallback_speed_kmh
    for tag, kmh in overrides.items():
        if tag == "fallback":
            fallback = kmh
        else:
            speeds[tag] = kmh
    return ModeProfile(
        mode=profile.mode,
        allowed_highway_tags=profile.allowed_highway_tags,
        speed_kmh=speeds,
        fallback_speed_kmh=fallback,
        respects_oneway=profile.respects_oneway,
        respects_maxspeed=profile.respects_maxspeed,
    )


@click.group()
def main() -> None:
    """Batch accessibility engine over OSM street graphs and GTFS feeds."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")


@main.command("ingest-osm")
@click.argument("osm_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", type=click.Path(file_okay=False), required=True, help="Directory for graph caches.")
@click.option("--profiles", "profile_names", default=",".join(STREET_MODES), show_default=True,
              help="Comma-separated subset of foot,bike,car.")
@click.option("--speeds", "speeds_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="key=value speed overrides, e.g. car.residential=35.")
def ingest_osm(osm_path: str, out_dir: str, profile_names: str, speeds_path: str | None) -> None:
    """Parse an OSM XML extract and write one graph cache per profile."""
    wanted = [name.strip() for name in profile_names.split(",") if name.strip()]
    profiles = default_profiles()
    for name in wanted:
        if name not in profiles:
            raise click.UsageError(f"unknown profile {name!r}; expected subset of {','.join(STREET_MODES)}")
    overrides = _load_speed_overrides(speeds_path)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    try:
        raw = parse_osm_xml(osm_path)
        click.echo(f"parsed: {len(raw.nodes)} nodes, {len(raw.ways)} highway ways")
        reports = []
        for name in wanted:
            profile = _apply_speed_overrides(profiles[name], overrides.get(name, {}))
            graph = extract_street_graph(raw, profile)
            report = compression_report(raw, graph)
            reports.append(report)
            cache = out / f"graph-{name}.json"
            save_graph_cache(graph, cache)
            written.append(cache)
            click.echo(f"wrote: {cache} ({len(graph.nodes)} nodes, {graph.edge_count} edges)")
        header = "".join(f"{r.mode:>12}" for r in reports)
        click.echo(f"{'':<12}{header}")
        click.echo(f"{'node ratio':<12}" + "".join(f"{r.node_ratio:>12.6f}" for r in reports))
        click.echo(f"{'edge ratio':<12}" + "".join(f"{r.edge_ratio:>12.6f}" for r in reports))
    except EngineError as exc:
        for path in written:
            path.unlink(missing_ok=True)
        raise click.ClickException(str(exc)) from exc


@main.command("prepare-transit")
@click.argument("gtfs_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--car-graph", "car_graph_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Car graph cache used to estimate missing timetables.")
@click.option("--multiplier", type=float, default=None, help="Scale estimated ride times. [default: 1.0]")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True, help="Transit cache to write.")
@_config_option
def prepare_transit(gtfs_dir: str, car_graph_path: str, multiplier: float | None, out_path: str,
                    config_path: str | None) -> None:
    """Parse a GTFS feed, estimate missing timetables, write the transit cache."""
    config = _read_config(config_path)
    multiplier = _merge(multiplier, config, "multiplier", 1.0, float)
    if multiplier <= 0:
        raise click.UsageError(f"multiplier must be positive, got {multiplier}")
    _echo_config({"gtfs_dir": gtfs_dir, "car_graph": car_graph_path, "multiplier": multiplier, "out": out_path})

    out = Path(out_path)
    try:
        lines = parse_gtfs(gtfs_dir)
        car_graph = load_graph_cache(car_graph_path)
        prepared = []
        excluded = []
        n_gtfs = 0
        n_estimated = 0
        for line in lines:
            if line.timetable is not None:
                prepared.append(line)
                n_gtfs += 1
                continue
            try:
                prepared.append(estimate_timetable(line, car_graph, multiplier))
                n_estimated += 1
            except EstimationError as exc:
                excluded.append(line.line_id)
                logger.warning("%s", exc)
        if not prepared:
            raise click.ClickException("no usable lines in feed")
        network = index_lines(prepared)
        save_transit_cache(network, out, multiplier)
    except EngineError as exc:
        out.unlink(missing_ok=True)
        raise click.ClickException(str(exc)) from exc
    mean_stops = sum(len(l.stops) for l in prepared) / len(prepared)
    click.echo(f"lines: {len(prepared)} (gtfs timetables: {n_gtfs}, estimated: {n_estimated})")
    click.echo(f"mean stops per line: {mean_stops:.1f}")
    if excluded:
        click.echo(f"excluded (unroutable stops): {' '.join(sorted(excluded))}")
    click.echo(f"wrote: {out}")


@main.command("sample")
@click.argument("districts_path", type=click.Path(exists=True, dir_okay=False))
@click.option("-n", "--count", "total_n", type=int, required=True, help="Total points to draw.")
@click.option("--seed", type=int, default=None, help="RNG seed. [default: 0]")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True, help="Origins CSV to write.")
@_config_option
def sample(districts_path: str, total_n: int, seed: int | None, out_path: str, config_path: str | None) -> None:
    """Draw population-weighted random origins inside district polygons."""
    config = _read_config(config_path)
    seed = _merge(seed, config, "seed", 0, int)
    if total_n <= 0:
        raise click.UsageError(f"-n must be positive, got {total_n}")
    _echo_config({"districts": districts_path, "n": total_n, "seed": seed, "out": out_path})
    out = Path(out_path)
    try:
        districts = load_districts_geojson(districts_path)
        rows = sample_districts(districts, total_n, seed)
        with open(out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["id", "lat", "lon", "district_id"])
            for origin_id, p in rows:
                district_id = origin_id.rsplit("-", 1)[0]
                writer.writerow([origin_id, repr(p.lat), repr(p.lon), district_id])
    except (EngineError, ValueError) as exc:
        out.unlink(missing_ok=True)
        raise click.ClickException(str(exc)) from exc
    click.echo(f"districts: {len(districts)}  points: {len(rows)}")
    click.echo(f"wrote: {out}")


def _read_origins_csv(path: str | Path) -> list[tuple[str, GeoPoint]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"id", "lat", "lon"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"{path}: origins CSV needs columns id,lat,lon")
        out = []
        seen: set[str] = set()
        for row in reader:
            oid = row["id"]
            if oid in seen:
                raise ValueError(f"{path}: duplicate origin id {oid!r}")
            seen.add(oid)
            out.append((oid, GeoPoint(float(row["lat"]), float(row["lon"]))))
    if not out:
        raise ValueError(f"{path}: no origins")
    return out


def _read_destinations_csv(path: str | Path) -> OpportunitySet:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"id", "lat", "lon"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"{path}: destinations CSV needs columns id,lat,lon")
        extra = [c for c in reader.fieldnames if c not in required]
        entries = [
            Opportunity(
                dest_id=row["id"],
                location=GeoPoint(float(row["lat"]), float(row["lon"])),
                metadata={c: row[c] for c in extra},
            )
            for row in reader
        ]
    return OpportunitySet.build(entries)


@main.command("compute")
@click.option("--graphs-dir", type=click.Path(exists=True, file_okay=False), required=True,
              help="Directory holding graph-<mode>.json caches from ingest-osm.")
@click.option("--origins", "origins_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--destinations", "destinations_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
@click.option("--mode", type=click.Choice(ALL_MODES), default=None, help="[default: foot]")
@click.option("--metric", type=click.Choice(ROUTE_METRICS), default=None, help="[default: time_s]")
@click.option("-k", "--candidates", type=int, default=None,
              help=f"Geodesic candidates per origin. [default: {DEFAULT_CANDIDATES}]")
@click.option("--walk-radius-m", type=float, default=None,
              help=f"Stop walking limit for transit. [default: {DEFAULT_WALK_LIMIT_M:g}]")
@click.option("--classes", "n_classes", type=int, default=None,
              help=f"Quantile classes for the heatmap. [default: {output_mod.DEFAULT_CLASSES}]")
@click.option("--bins", type=int, default=None, help=f"Histogram bins. [default: {DEFAULT_BINS}]")
@click.option("--transit-cache", "transit_cache_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Required for --mode public_transport.")
@click.option("--workers", type=int, default=None, help="Worker processes. [default: available parallelism]")
@_config_option
def compute(graphs_dir: str, origins_path: str, destinations_path: str, out_dir: str,
            mode: str | None, metric: str | None, candidates: int | None, walk_radius_m: float | None,
            n_classes: int | None, bins: int | None, transit_cache_path: str | None,
            workers: int | None, config_path: str | None) -> None:
    """Compute nearest opportunities for every origin and write results,
    heatmap GeoJSON, and a travel-time histogram."""
    started = time.monotonic()
    config = _read_config(config_path)
    mode = _merge(mode, config, "mode", "foot", str)
    metric = _merge(metric, config, "metric", "time_s", str)
    candidates = _merge(candidates, config, "candidates", DEFAULT_CANDIDATES, int)
    walk_radius_m = _merge(walk_radius_m, config, "walk-radius-m", DEFAULT_WALK_LIMIT_M, float)
    n_classes = _merge(n_classes, config, "classes", output_mod.DEFAULT_CLASSES, int)
    bins = _merge(bins, config, "bins", DEFAULT_BINS, int)
    workers = _merge(workers, config, "workers", None, int)
    transit_cache_path = _merge(transit_cache_path, config, "transit-cache", None, str)

    if mode not in ALL_MODES:
        raise click.UsageError(f"unknown mode {mode!r}")
    if metric not in ROUTE_METRICS:
        raise click.UsageError(f"unknown metric {metric!r}")
    try:
        cfg = NearestConfig(mode=mode, metric=metric, candidates=candidates, walk_limit_m=walk_radius_m)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    if n_classes < 2:
        raise click.UsageError(f"--classes must be >= 2, got {n_classes}")
    if bins < 1:
        raise click.UsageError(f"--bins must be >= 1, got {bins}")
    if workers is not None and workers < 1:
        raise click.UsageError(f"--workers must be >= 1, got {workers}")
    if mode == "public_transport" and transit_cache_path is None:
        raise click.UsageError("--mode public_transport requires --transit-cache")

    graph_mode = "foot" if mode == "public_transport" else mode
    graph_path = Path(graphs_dir) / f"graph-{graph_mode}.json"
    if not graph_path.is_file():
        raise click.UsageError(f"missing graph cache {graph_path}; run ingest-osm first")

    _echo_config(
        {
            "mode": mode, "metric": metric, "candidates": candidates, "walk_radius_m": walk_radius_m,
            "classes": n_classes, "bins": bins, "workers": workers if workers is not None else "auto",
            "graphs_dir": graphs_dir, "origins": origins_path, "destinations": destinations_path,
            "transit_cache": transit_cache_path, "out_dir": out_dir,
        }
    )

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results_path = out / "results.csv"
    heatmap_path = out / "heatmap.geojson"
    histogram_path = out / "histogram.csv"
    outputs = [results_path, heatmap_path, histogram_path]
    try:
        origins = _read_origins_csv(origins_path)
        opportunities = _read_destinations_csv(destinations_path)
        graphs = {graph_mode: load_graph_cache(graph_path)}
        transit = None
        if mode == "public_transport":
            transit, _ = load_transit_cache(transit_cache_path)
        results = batch_compute(origins, opportunities, cfg, graphs, transit=transit, workers=workers)

        locations = dict(origins)
        ok_times = [r.travel_time_s for r in results if r.status == "ok"]
        assert all(t is not None for t in ok_times)
        n_ok = len(ok_times)
        output_mod.write_results_csv(results, results_path, metric)
        if n_ok >= n_classes:
            classification = output_mod.classify_quantiles(ok_times, n_classes)  # type: ignore[arg-type]
            output_mod.write_heatmap_geojson(results, classification, locations, heatmap_path)
            edges, counts = output_mod.histogram(ok_times, bins)  # type: ignore[arg-type]
            output_mod.write_histogram_csv(edges, counts, histogram_path)
        else:
            raise click.ClickException(
                f"only {n_ok} reachable origins; need at least {n_classes} to classify the heatmap"
            )
    except (EngineError, ValueError, OSError) as exc:
        for path in outputs:
            path.unlink(missing_ok=True)
        raise click.ClickException(str(exc)) from exc
    except click.ClickException:
        for path in outputs:
            path.unlink(missing_ok=True)
        raise
    n_unreachable = len(results) - n_ok
    click.echo(f"origins: {len(results)}  ok: {n_ok}  unreachable: {n_unreachable}")
    click.echo(f"wall_time_s: {time.monotonic() - started:.2f}")
    for path in outputs:
        click.echo(f"wrote: {path}")


@main.command("export-heatmap")
@click.option("--results", "results_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="results.csv from a previous compute run.")
@click.option("--origins", "origins_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Origins CSV supplying coordinates.")
@click.option("--classes", "n_classes", type=int, default=None,
              help=f"Quantile classes. [default: {output_mod.DEFAULT_CLASSES}]")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@_config_option
def export_heatmap(results_path: str, origins_path: str, n_classes: int | None, out_path: str,
                   config_path: str | None) -> None:
    """Re-classify an existing results table and export heatmap GeoJSON."""
    config = _read_config(config_path)
    n_classes = _merge(n_classes, config, "classes", output_mod.DEFAULT_CLASSES, int)
    if n_classes < 2:
        raise click.UsageError(f"--classes must be >= 2, got {n_classes}")
    _echo_config({"results": results_path, "origins": origins_path, "classes": n_classes, "out": out_path})
    out = Path(out_path)
    try:
        results, _ = output_mod.parse_results_csv(results_path)
        locations = dict(_read_origins_csv(origins_path))
        ok_times = [r.travel_time_s for r in results if r.status == "ok"]
        if any(t is None for t in ok_times):
            raise ValueError("results lack travel times; export needs a time_s run")
        classification = output_mod.classify_quantiles(ok_times, n_classes)  # type: ignore[arg-type]
        output_mod.write_heatmap_geojson(results, classification, locations, out)
    except (EngineError, ValueError, OSError) as exc:
        out.unlink(missing_ok=True)
        raise click.ClickException(str(exc)) from exc
    click.echo(f"features: {len(ok_times)}")
    click.echo(f"wrote: {out}")


if __name__ == "__main__":
    sys.exit(main())
