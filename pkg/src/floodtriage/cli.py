"""Pipeline driver: each stage reads/writes plain files under an output root.

Stages are idempotent: identical inputs and config produce bit-identical
outputs, and every command records run metadata (config + input hashes)
under ``<out>/runs/``.
"""

from __future__ import annotations

import csv
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from . import analysis, casebase, enhance, ingest, masks, metrics, roadgraph, spatial
from .config import load_config, speed_table_from, write_run_metadata
from .errors import ContractViolation, IngestError
from .geometry import FeatureClass, load_tiles
from .masks import MaskProduct, RasterizeParams

log = logging.getLogger(__name__)


def _fail(message: str) -> "click.ClickException":
    return click.ClickException(message)


def _write_json(path: Path, payload, indent: int | None = 2) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=indent, sort_keys=True) + "\n",
                    encoding="utf-8")


def _load_features(path: Path, config: dict) -> list:
    schema = ingest.IngestSchema.from_mapping(config.get("schema", {}))
    try:
        result = ingest.ingest_annotations(path, schema)
    except IngestError as exc:
        raise _fail(str(exc)) from exc
    return list(result.features)


def _read_scores_dir(scores_dir: Path) -> list[metrics.ScoreRecord]:
    records = []
    for path in sorted(scores_dir.glob("*.json")):
        records.append(metrics.ScoreRecord.from_json_dict(
            json.loads(path.read_text(encoding="utf-8"))))
    if not records:
        raise _fail(f"no score records in {scores_dir}; run `floodtriage score` first")
    return records


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Geospatial evaluation and error triage for flood-mapping outputs."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


@main.command()
@click.argument("annotations", type=click.Path(exists=True, path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--out-dir", required=True, type=click.Path(path_type=Path))
@click.option("--name", default="aoi", show_default=True,
              help="Basename for the cleaned output files.")
@click.option("--area-km2", type=float, default=None,
              help="AOI area; enables the summary report.")
@click.option("--crs-unit-m", type=float, default=1.0, show_default=True)
def ingest_cmd(annotations: Path, config_path: Path | None, out_dir: Path,
               name: str, area_km2: float | None, crs_unit_m: float) -> None:
    """Clean a GeoJSON annotation file and assign road speeds."""
    config = load_config(config_path)
    schema = ingest.IngestSchema.from_mapping(config.get("schema", {}))
    try:
        result = ingest.ingest_annotations(annotations, schema)
    except IngestError as exc:
        raise _fail(str(exc)) from exc
    speed_table = speed_table_from(config)
    features = [
        ingest.assign_road_speed(f, speed_table, schema.road_type_property)
        if f.feature_class is FeatureClass.ROAD and f.road_speed_mph is None else f
        for f in result.features
    ]
    for warning in result.warnings:
        log.warning("%s", warning)

    out = out_dir / "features" / f"{name}.geojson"
    _write_json(out, ingest.features_to_geojson(features, schema))
    click.echo(f"kept {len(features)} features, dropped {result.dropped} -> {out}")

    if area_km2 is not None:
        summary = ingest.summarize_aoi(features, area_km2, crs_unit_m)
        _write_json(out_dir / "features" / f"{name}.summary.json",
                    summary.to_json_dict())
    write_run_metadata(out_dir, "ingest", config, [annotations, config_path or ""])


main.add_command(ingest_cmd, name="ingest")


@main.command()
@click.option("--tiles", "tiles_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--ratio", type=float, default=0.85, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--stratify-key", default=None,
              help="tiles.json per-tile key to stratify the split by.")
@click.option("--out-dir", required=True, type=click.Path(path_type=Path))
def split(tiles_path: Path, ratio: float, seed: int,
          stratify_key: str | None, out_dir: Path) -> None:
    """Split tiles into train/validation sets."""
    raw = json.loads(tiles_path.read_text(encoding="utf-8"))
    tile_ids = [t["tile_id"] for t in raw["tiles"]]
    stratify = None
    if stratify_key:
        stratify = {t["tile_id"]: str(t.get(stratify_key, "")) for t in raw["tiles"]}
    try:
        train, val = ingest.split_dataset(tile_ids, ratio, seed, stratify)
    except ContractViolation as exc:
        raise _fail(str(exc)) from exc
    _write_json(out_dir / "splits.json",
                {"ratio": ratio, "seed": seed, "train": train, "val": val})
    click.echo(f"{len(train)} train / {len(val)} val")
    write_run_metadata(out_dir, "split",
                       {"ratio": ratio, "seed": seed, "stratify_key": stratify_key},
                       [tiles_path])


@main.command()
@click.option("--tiles", "tiles_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--features", "features_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--product", type=click.Choice([p.value for p in MaskProduct]),
              default=MaskProduct.FLOOD.value, show_default=True)
@click.option("--out-dir", required=True, type=click.Path(path_type=Path))
@click.option("--jobs", type=int, default=None, help="Worker threads (default: cores).")
def rasterize(tiles_path: Path, features_path: Path, config_path: Path | None,
              product: str, out_dir: Path, jobs: int | None) -> None:
    """Rasterize cleaned features into per-tile masks."""
    config = load_config(config_path)
    tiles = load_tiles(tiles_path)
    features = _load_features(features_path, config)
    params = RasterizeParams(**config.get("rasterize", {}))
    index = spatial.build_index((f.id, f.geometry) for f in features)
    by_id = {f.id: f for f in features}
    mask_dir = out_dir / "masks"

    def run(tile):
        hits = spatial.range_query(index, tile.bounds)
        subset = [by_id[i] for i in hits.ids]
        mask = masks.rasterize(subset, tile, MaskProduct(product), params)
        masks.write_mask(mask, masks.sidecar_path(mask_dir, tile.tile_id))
        return tile.tile_id

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        done = list(pool.map(run, tiles))
    click.echo(f"rasterized {len(done)} tiles -> {mask_dir}")
    write_run_metadata(out_dir, f"rasterize-{product}", config,
                       [tiles_path, features_path, config_path or ""])


@main.command()
@click.option("--images-dir", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out-dir", required=True, type=click.Path(path_type=Path))
@click.option("--mode", type=click.Choice(["global", "clahe"]), default="global",
              show_default=True)
@click.option("--which", type=click.Choice(["pre", "post", "both"]), default="both",
              show_default=True, help="Which event phase images to enhance.")
@click.option("--jobs", type=int, default=None)
def equalize(images_dir: Path, out_dir: Path, mode: str, which: str,
             jobs: int | None) -> None:
    """Histogram-equalize tile imagery (global or experimental CLAHE)."""
    suffixes = {"pre": (".pre.png",), "post": (".post.png",),
                "both": (".pre.png", ".post.png")}[which]
    paths = sorted(p for p in images_dir.glob("*.png")
                   if any(p.name.endswith(s) for s in suffixes))
    if not paths:
        raise _fail(f"no matching images under {images_dir}")
    image_out = out_dir / "images"

    def run(path: Path):
        image = enhance.read_image(path)
        if mode == "global":
            result = enhance.equalize(image)
        else:
            result = enhance.equalize_clahe(image)
        enhance.write_image(result, image_out / path.name)
        return path.name

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        done = list(pool.map(run, paths))
    click.echo(f"equalized {len(done)} images -> {image_out}")
    write_run_metadata(out_dir, "equalize", {"mode": mode, "which": which},
                       list(paths))


@main.command()
@click.option("--reference-dir", required=True, type=click.Path(exists=True, path_type=Path),
              help="Directory of reference flood masks.")
@click.option("--prediction-dir", required=True, type=click.Path(exists=True, path_type=Path),
              help="Directory of prediction flood masks.")
@click.option("--roads-reference-dir", type=click.Path(exists=True, path_type=Path),
              help="Per-tile reference road GeoJSONs (<tile>.geojson) for APLS.")
@click.option("--roads-prediction-dir", type=click.Path(exists=True, path_type=Path),
              help="Per-tile predicted road GeoJSONs (<tile>.geojson) for APLS.")
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--out-dir", required=True, type=click.Path(path_type=Path))
@click.option("--tags/--no-tags", default=True, show_default=True,
              help="Also emit heuristic error-tag suggestions.")
@click.option("--jobs", type=int, default=None)
def score(reference_dir: Path, prediction_dir: Path,
          roads_reference_dir: Path | None, roads_prediction_dir: Path | None,
          config_path: Path | None, out_dir: Path, tags: bool,
          jobs: int | None) -> None:
    """Score prediction masks against reference masks, one record per tile."""
    config = load_config(config_path)
    apls_cfg = config.get("apls", {})
    snap = float(apls_cfg.get("snap_tolerance_m", roadgraph.DEFAULT_SNAP_TOLERANCE_M))
    spacing = apls_cfg.get("control_spacing_m", roadgraph.DEFAULT_CONTROL_SPACING_M)
    spacing = None if spacing in (None, 0, "none") else float(spacing)

    sidecars = sorted(reference_dir.glob(f"*{masks.SIDECAR_SUFFIX}"))
    if not sidecars:
        raise _fail(f"no reference masks under {reference_dir}; "
                    "run `floodtriage rasterize` first")

    def road_graph_for(directory: Path | None, tile_id: str):
        if directory is None:
            return None
        path = directory / f"{tile_id}.geojson"
        if not path.exists():
            return None
        features = _load_features(path, config)
        table = speed_table_from(config)
        schema = ingest.IngestSchema.from_mapping(config.get("schema", {}))
        roads = [
            ingest.assign_road_speed(f, table, schema.road_type_property)
            if f.road_speed_mph is None else f
            for f in features if f.feature_class is FeatureClass.ROAD
        ]
        return roadgraph.graph_from_roads(roads)

    def run(sidecar: Path):
        reference = masks.read_mask(sidecar)
        pred_sidecar = masks.sidecar_path(prediction_dir, reference.tile_id)
        if not pred_sidecar.exists():
            log.warning("tile %s: no prediction mask, skipped", reference.tile_id)
            return None
        prediction = masks.read_mask(pred_sidecar)
        apls_length = apls_time = None
        ref_graph = road_graph_for(roads_reference_dir, reference.tile_id)
        pred_graph = road_graph_for(roads_prediction_dir, reference.tile_id)
        if ref_graph is not None and pred_graph is not None:
            apls_length = roadgraph.apls(
                ref_graph, pred_graph, roadgraph.PathWeight.LENGTH,
                snap_tolerance_m=snap, control_spacing_m=spacing)
            apls_time = roadgraph.apls(
                ref_graph, pred_graph, roadgraph.PathWeight.TRAVEL_TIME,
                snap_tolerance_m=snap, control_spacing_m=spacing)
        record = metrics.score_flood_masks(reference, prediction,
                                           apls_length=apls_length,
                                           apls_time=apls_time)
        suggestions = (analysis.suggest_error_tags(record, reference, prediction)
                       if tags else [])
        return record, suggestions

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        results = [r for r in pool.map(run, sidecars) if r is not None]

    scores_dir = out_dir / "scores"
    all_tags: dict[str, list[str]] = {}
    for record, suggestions in results:
        _write_json(scores_dir / f"{record.tile_id}.json", record.to_json_dict())
        if suggestions:
            all_tags[record.tile_id] = [t.type.value for t in suggestions]

    rollup = out_dir / "scores.csv"
    with open(rollup, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("tile_id",) + metrics.SCORE_METRICS)
        for record, _ in sorted(results, key=lambda r: r[0].tile_id):
            writer.writerow([record.tile_id] + [
                "" if record.value(m) is None else f"{record.value(m):.6f}"
                for m in metrics.SCORE_METRICS])
    if tags:
        _write_json(out_dir / "analysis" / "tags.json",
                    {k: sorted(v) for k, v in sorted(all_tags.items())})
    click.echo(f"scored {len(results)} tiles -> {scores_dir} and {rollup}")
    write_run_metadata(
        out_dir, "score",
        {"apls": {"snap_tolerance_m": snap, "control_spacing_m": spacing}},
        [config_path or ""])


@main.command()
@click.option("--scores-dir", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--k", type=int, default=analysis.BASELINE_DEFAULT_K, show_default=True,
              help="Cluster count (3 suits baseline-style runs, 2 SOTA-style).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--dims", default=",".join(analysis.DEFAULT_CLUSTER_DIMS),
              show_default=True)
@click.option("--out-dir", required=True, type=click.Path(path_type=Path))
def cluster(scores_dir: Path, k: int, seed: int, dims: str, out_dir: Path) -> None:
    """Cluster per-tile score vectors to expose error regimes."""
    records = _read_scores_dir(scores_dir)
    dim_names = tuple(d.strip() for d in dims.split(",") if d.strip())
    try:
        model = analysis.cluster_scores(records, k=k, seed=seed, dims=dim_names)
    except ContractViolation as exc:
        raise _fail(str(exc)) from exc
    _write_json(out_dir / "analysis" / "clusters.json", model.to_json_dict())
    sizes = [sum(1 for c in model.assignments.values() if c == i) for i in range(k)]
    click.echo(f"k={k} cluster sizes {sizes}, inertia {model.inertia:.6f}")
    write_run_metadata(out_dir, "cluster",
                       {"k": k, "seed": seed, "dims": list(dim_names)},
                       list(scores_dir.glob("*.json")))


@main.command()
@click.option("--scores-dir", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--dims", default=",".join(analysis.DEFAULT_CLUSTER_DIMS),
              show_default=True)
@click.option("--out-dir", required=True, type=click.Path(path_type=Path))
def badcases(scores_dir: Path, dims: str, out_dir: Path) -> None:
    """Select bad cases (below-median / below-25th-percentile criteria)."""
    records = _read_scores_dir(scores_dir)
    dim_names = tuple(d.strip() for d in dims.split(",") if d.strip())
    try:
        selected = analysis.select_bad_cases(records, dims=dim_names)
    except ContractViolation as exc:
        raise _fail(str(exc)) from exc
    _write_json(out_dir / "analysis" / "badcases.json", selected.to_json_dict())
    click.echo(f"criterion1: {len(selected.criterion1)} tiles, "
               f"criterion2: {len(selected.criterion2)} tiles")
    write_run_metadata(out_dir, "badcases", {"dims": list(dim_names)},
                       list(scores_dir.glob("*.json")))


@main.command()
@click.option("--before", "before_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--after", "after_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--claims", "claims_path", type=click.Path(exists=True, path_type=Path),
              help="JSON map of metric -> claimed relative delta (percent).")
@click.option("--out", "out_path", type=click.Path(path_type=Path))
@click.option("--format", "fmt", type=click.Choice(["md", "csv"]), default="md",
              show_default=True)
def report(before_path: Path, after_path: Path, claims_path: Path | None,
           out_path: Path | None, fmt: str) -> None:
    """Render an improvement report between two metric tables."""
    before = json.loads(before_path.read_text(encoding="utf-8"))
    after = json.loads(after_path.read_text(encoding="utf-8"))
    claims = (json.loads(claims_path.read_text(encoding="utf-8"))
              if claims_path else None)
    try:
        result = analysis.improvement_report(before, after, claims)
    except ContractViolation as exc:
        raise _fail(str(exc)) from exc
    rendered = result.to_markdown() if fmt == "md" else result.to_csv()
    if out_path:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(rendered, encoding="utf-8")
        write_run_metadata(out_path.parent, "report", {"format": fmt},
                           [before_path, after_path])
    click.echo(rendered, nl=False)


@main.group()
def case() -> None:
    """Retain and retrieve solved cases."""


@case.command()
@click.option("--base", "base_path", required=True, type=click.Path(path_type=Path))
@click.option("--case", "case_path", required=True,
              type=click.Path(exists=True, path_type=Path))
def retain(base_path: Path, case_path: Path) -> None:
    """Append a case record (JSON file) to the case journal."""
    record = casebase.CaseRecord.from_json_dict(
        json.loads(case_path.read_text(encoding="utf-8")))
    base = casebase.CaseBase(base_path)
    try:
        base.retain(record)
    except ContractViolation as exc:
        raise _fail(str(exc)) from exc
    click.echo(f"retained {record.case_id} ({len(base)} cases)")


@case.command()
@click.option("--base", "base_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--descriptor", required=True,
              help="Comma-separated probe descriptor values.")
@click.option("--k", type=int, default=5, show_default=True)
def retrieve(base_path: Path, descriptor: str, k: int) -> None:
    """Print the k most similar cases as JSON."""
    probe = [float(v) for v in descriptor.split(",")]
    base = casebase.CaseBase(base_path)
    try:
        ranked = base.retrieve_similar(probe, k)
    except ContractViolation as exc:
        raise _fail(str(exc)) from exc
    click.echo(json.dumps([r.to_json_dict() for r in ranked], indent=2))


@main.group()
def query() -> None:
    """Ad-hoc spatial queries over a feature file."""


def _query_index(features_path: Path, config_path: Path | None):
    features = _load_features(features_path, load_config(config_path))
    return spatial.build_index((f.id, f.geometry) for f in features)


@query.command(name="range")
@click.option("--features", "features_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--window", required=True, help="minx,miny,maxx,maxy")
def query_range(features_path: Path, config_path: Path | None, window: str) -> None:
    parts = [float(v) for v in window.split(",")]
    if len(parts) != 4:
        raise _fail("window must be minx,miny,maxx,maxy")
    index = _query_index(features_path, config_path)
    result = spatial.range_query(index, tuple(parts))
    click.echo(json.dumps({"ids": list(result.ids)}))


@query.command(name="knn")
@click.option("--features", "features_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--probe", required=True, help="x,y")
@click.option("--k", type=int, default=5, show_default=True)
def query_knn(features_path: Path, config_path: Path | None, probe: str, k: int) -> None:
    parts = [float(v) for v in probe.split(",")]
    if len(parts) != 2:
        raise _fail("probe must be x,y")
    index = _query_index(features_path, config_path)
    result = spatial.knn_query(index, (parts[0], parts[1]), k)
    click.echo(json.dumps({"ids": list(result.ids),
                           "distances": list(result.distances)}))


@main.command()
@click.option("--data-dir", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8008, show_default=True)
@click.option("--ui-dir", type=click.Path(exists=True, path_type=Path),
              help="Static frontend bundle to serve at /.")
def serve(data_dir: Path, host: str, port: int, ui_dir: Path | None) -> None:
    """Run the triage HTTP service."""
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(data_dir, ui_dir), host=host, port=port)


@main.command(name="export-manifest")
@click.option("--data-dir", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_path", type=click.Path(path_type=Path))
def export_manifest(data_dir: Path, out_path: Path | None) -> None:
    """Export the triage manifest from the verdict journal."""
    from .service import TriageStore, manifest_to_json_bytes

    store = TriageStore(data_dir)
    payload = manifest_to_json_bytes(store.manifest())
    if out_path:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_bytes(payload)
        counts = store.manifest()["counts"]
        click.echo(f"manifest: {counts['included']} included, "
                   f"{counts['excluded']} excluded -> {out_path}")
    else:
        click.echo(payload.decode(), nl=False)


if __name__ == "__main__":
    main()
