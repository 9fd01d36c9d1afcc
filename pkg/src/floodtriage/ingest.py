"""Annotation ingestion and cleaning, speed assignment, AOI summaries, splits."""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .errors import ContractViolation, IngestError
from .geometry import (
    AoiSummary,
    FeatureClass,
    Geometry,
    GeometryKind,
    VectorFeature,
    close_rings,
    geometry_problems,
    is_self_intersecting,
    to_shapely,
)

log = logging.getLogger(__name__)

_TRUE_VALUES = frozenset({"true", "yes", "1", "flooded", "t"})


@dataclass(frozen=True)
class IngestSchema:
    """How to read class, flood state, and road type out of GeoJSON properties.

    ``class_values`` maps raw property values (lowercased) to feature classes;
    anything else is dropped with a warning. A missing flood property counts
    as not flooded so that the flag is defined for every feature.
    """

    class_property: str = "feature_class"
    class_values: Mapping[str, FeatureClass] = field(default_factory=lambda: {
        "building": FeatureClass.BUILDING,
        "road": FeatureClass.ROAD,
    })
    flooded_property: str = "flooded"
    road_type_property: str = "road_type"
    crs_id: str = "local"

    @classmethod
    def from_mapping(cls, raw: Mapping[str, Any]) -> "IngestSchema":
        class_values = {
            str(k).lower(): FeatureClass(v)
            for k, v in raw.get("class_values", {}).items()
        } or None
        kwargs: dict[str, Any] = {}
        if class_values:
            kwargs["class_values"] = class_values
        for key in ("class_property", "flooded_property", "road_type_property", "crs_id"):
            if key in raw:
                kwargs[key] = raw[key]
        return cls(**kwargs)


@dataclass(frozen=True)
class IngestResult:
    features: tuple[VectorFeature, ...]
    dropped: int
    warnings: tuple[str, ...]

    def __iter__(self):
        return iter(self.features)

    def __len__(self):
        return len(self.features)


def _parse_flooded(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    if value is None:
        return False
    return str(value).strip().lower() in _TRUE_VALUES


def _geometry_from_geojson(raw: Any, crs_id: str) -> Geometry | None:
    if not isinstance(raw, dict):
        return None
    gtype = raw.get("type")
    coords = raw.get("coordinates")
    if gtype not in (k.value for k in GeometryKind) or coords in (None, [], ()):
        return None
    return Geometry(kind=GeometryKind(gtype), coordinates=coords, crs_id=crs_id)


def ingest_annotations(path: str | Path, schema: IngestSchema) -> IngestResult:
    """Load a GeoJSON FeatureCollection and keep only clean Building/Road features.

    Records with null, empty, or non-finite geometry are dropped and counted.
    Unclosed polygon rings are repaired by closing; self-intersecting polygons
    are kept but flagged via the ``self_intersecting`` attribute. Output order
    is input order.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}", path=str(path)) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IngestError(
            f"malformed JSON in {path} at byte {exc.pos}: {exc.msg}",
            path=str(path), byte_offset=exc.pos) from exc

    if not isinstance(raw, dict) or raw.get("type") != "FeatureCollection":
        raise IngestError(f"{path} is not a GeoJSON FeatureCollection", path=str(path))

    features: list[VectorFeature] = []
    warnings: list[str] = []
    dropped = 0
    for i, feat in enumerate(raw.get("features", [])):
        fid = str(feat.get("id") or feat.get("properties", {}).get("id") or f"feature-{i}")
        props = feat.get("properties") or {}

        raw_class = props.get(schema.class_property)
        feature_class = schema.class_values.get(str(raw_class).lower()) if raw_class is not None else None
        if feature_class is None:
            warnings.append(f"{fid}: unknown feature class {raw_class!r}, dropped")
            dropped += 1
            continue

        geometry = _geometry_from_geojson(feat.get("geometry"), schema.crs_id)
        if geometry is None:
            dropped += 1
            continue
        geometry, _repaired = close_rings(geometry)
        if geometry_problems(geometry):
            dropped += 1
            continue

        reserved = (schema.class_property, schema.flooded_property, "road_speed_mph")
        attributes = {str(k): str(v) for k, v in props.items()
                      if k not in reserved and v is not None}
        if is_self_intersecting(geometry):
            attributes["self_intersecting"] = "true"
            warnings.append(f"{fid}: self-intersecting polygon kept, flagged")

        # Speeds written by a previous cleaning pass survive the round-trip.
        speed = props.get("road_speed_mph")
        if feature_class is not FeatureClass.ROAD:
            speed = None

        features.append(VectorFeature(
            id=fid,
            geometry=geometry,
            feature_class=feature_class,
            flooded=_parse_flooded(props.get(schema.flooded_property)),
            road_speed_mph=float(speed) if speed is not None else None,
            attributes=attributes,
        ))
    return IngestResult(tuple(features), dropped, tuple(warnings))


def assign_road_speed(feature: VectorFeature,
                      speed_table: Mapping[str, float],
                      road_type_attribute: str = "road_type") -> VectorFeature:
    """Set a road's speed from its road-type attribute via the speed table.

    A missing road type (or a type absent from the table) falls back to the
    table's ``default`` entry; without one this raises, naming the key.
    """
    if feature.feature_class is not FeatureClass.ROAD:
        raise ContractViolation(
            f"assign_road_speed called on {feature.feature_class.value} {feature.id}")
    road_type = feature.attributes.get(road_type_attribute)
    if road_type is not None and road_type in speed_table:
        speed = speed_table[road_type]
    elif "default" in speed_table:
        speed = speed_table["default"]
    else:
        raise ContractViolation(
            f"feature {feature.id}: road type {road_type!r} not in speed table "
            "and no 'default' entry present")
    speed = float(speed)
    if speed < 0:
        raise ContractViolation(f"speed table entry for {road_type!r} is negative")
    return replace(feature, road_speed_mph=speed)


def summarize_aoi(features: Iterable[VectorFeature], area_km2: float,
                  crs_unit_m: float = 1.0) -> AoiSummary:
    """Summarize an AOI: building counts, road kilometres, inundation ratios.

    Road lengths are planar in the feature CRS, scaled by ``crs_unit_m``
    (metres per CRS unit); the choice is recorded in the summary metadata.
    """
    if area_km2 <= 0:
        raise ContractViolation("area_km2 must be positive")
    building_count = 0
    buildings_inundated = 0
    road_m = 0.0
    road_inund_m = 0.0
    for feature in features:
        if feature.feature_class is FeatureClass.BUILDING:
            building_count += 1
            if feature.flooded:
                buildings_inundated += 1
        else:
            length = to_shapely(feature.geometry).length * crs_unit_m
            road_m += length
            if feature.flooded:
                road_inund_m += length
    return AoiSummary.from_counts(
        area_km2=area_km2,
        building_count=building_count,
        buildings_inundated=buildings_inundated,
        road_km=road_m / 1000.0,
        road_inund_km=road_inund_m / 1000.0,
        metadata={"length_method": "planar", "crs_unit_m": str(crs_unit_m)},
    )


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_dataset(tile_ids: Sequence[str], ratio: float, seed: int,
                  stratify_by: Mapping[str, str] | None = None
                  ) -> tuple[list[str], list[str]]:
    """Randomly partition tile ids into train/validation lists.

    |train| = round-half-up(ratio * N) per group; the split is a seeded
    shuffle, deterministic for a fixed seed. With ``stratify_by`` the ratio
    is applied within each group independently.
    """
    if not tile_ids:
        raise ContractViolation("tile_ids must be non-empty")
    if not (0.0 < ratio < 1.0):
        raise ContractViolation(f"ratio {ratio} outside (0, 1)")
    if len(set(tile_ids)) != len(tile_ids):
        raise ContractViolation("tile_ids contains duplicates")

    rng = random.Random(seed)
    if stratify_by is None:
        groups = [list(tile_ids)]
    else:
        by_key: dict[str, list[str]] = {}
        for tid in tile_ids:
            by_key.setdefault(str(stratify_by.get(tid, "")), []).append(tid)
        groups = [by_key[k] for k in sorted(by_key)]

    train: list[str] = []
    val: list[str] = []
    for group in groups:
        shuffled = list(group)
        rng.shuffle(shuffled)
        n_train = _round_half_up(ratio * len(shuffled))
        train.extend(shuffled[:n_train])
        val.extend(shuffled[n_train:])
    return train, val


def features_to_geojson(features: Iterable[VectorFeature],
                        schema: IngestSchema | None = None) -> dict:
    """Re-serialize cleaned features as a GeoJSON FeatureCollection."""
    schema = schema or IngestSchema()
    out = []
    for f in features:
        props = dict(f.attributes)
        props[schema.class_property] = f.feature_class.value.lower()
        props[schema.flooded_property] = f.flooded
        if f.road_speed_mph is not None:
            props["road_speed_mph"] = f.road_speed_mph
        out.append({
            "type": "Feature",
            "id": f.id,
            "geometry": {
                "type": f.geometry.kind.value,
                "coordinates": _nested_lists(f.geometry.coordinates),
            },
            "properties": props,
        })
    return {"type": "FeatureCollection", "features": out}


def _nested_lists(node):
    if isinstance(node, tuple):
        return [_nested_lists(c) for c in node]
    return node
