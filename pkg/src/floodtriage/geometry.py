"""Core geometry model: features, affine geotransforms, tiles, AOI summaries.

Coordinates are planar (x, y) pairs in the units of the declared CRS.
All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Sequence

import shapely
import shapely.geometry as sgeom

from .errors import ContractViolation

# Round-trip guarantee for world <-> pixel conversions, in CRS units.
TRANSFORM_TOLERANCE = 1e-9


class GeometryKind(str, Enum):
    POINT = "Point"
    LINESTRING = "LineString"
    POLYGON = "Polygon"
    MULTIPOLYGON = "MultiPolygon"


class FeatureClass(str, Enum):
    BUILDING = "Building"
    ROAD = "Road"


def _as_tuple(coords: Any) -> Any:
    if isinstance(coords, (list, tuple)):
        return tuple(_as_tuple(c) for c in coords)
    return float(coords)


@dataclass(frozen=True)
class Geometry:
    """A point, line, polygon, or multipolygon with a CRS declaration.

    ``coordinates`` follows the GeoJSON nesting convention for the kind:
    Point -> (x, y); LineString -> ((x, y), ...); Polygon -> rings of
    points; MultiPolygon -> polygons of rings.
    """

    kind: GeometryKind
    coordinates: tuple
    crs_id: str = "local"

    def __post_init__(self):
        object.__setattr__(self, "coordinates", _as_tuple(self.coordinates))

    def points(self):
        """Yield every (x, y) vertex regardless of nesting depth."""
        def walk(node):
            if isinstance(node, tuple) and node and not isinstance(node[0], tuple):
                yield node
            else:
                for child in node:
                    yield from walk(child)
        if self.kind is GeometryKind.POINT:
            yield self.coordinates
        else:
            yield from walk(self.coordinates)


def geometry_problems(geometry: Geometry) -> list[str]:
    """Return invariant violations for a geometry (empty list when valid).

    Checks: finite coordinates, LineString arity, ring closure and ring
    length for polygonal kinds.
    """
    problems: list[str] = []
    pts = list(geometry.points())
    if not pts:
        return ["geometry has no coordinates"]
    for x, y in pts:
        if not (math.isfinite(x) and math.isfinite(y)):
            problems.append(f"non-finite coordinate ({x}, {y})")
            return problems

    def check_ring(ring, label):
        if len(ring) < 4:
            problems.append(f"{label} has {len(ring)} vertices, need >= 4")
        elif ring[0] != ring[-1]:
            problems.append(f"{label} is not closed")

    kind = geometry.kind
    coords = geometry.coordinates
    if kind is GeometryKind.POINT:
        if len(coords) != 2:
            problems.append("point must be a single (x, y) pair")
    elif kind is GeometryKind.LINESTRING:
        if len(coords) < 2:
            problems.append(f"linestring has {len(coords)} points, need >= 2")
    elif kind is GeometryKind.POLYGON:
        if not coords:
            problems.append("polygon has no rings")
        for i, ring in enumerate(coords):
            check_ring(ring, f"ring {i}")
    elif kind is GeometryKind.MULTIPOLYGON:
        if not coords:
            problems.append("multipolygon has no polygons")
        for p, poly in enumerate(coords):
            for i, ring in enumerate(poly):
                check_ring(ring, f"polygon {p} ring {i}")
    return problems


def validate_geometry(geometry: Geometry) -> None:
    problems = geometry_problems(geometry)
    if problems:
        raise ContractViolation(
            f"invalid {geometry.kind.value}: " + "; ".join(problems))


def close_rings(geometry: Geometry) -> tuple[Geometry, bool]:
    """Close any unclosed polygon ring by appending its first vertex.

    Returns the (possibly repaired) geometry and whether a repair happened.
    """
    if geometry.kind not in (GeometryKind.POLYGON, GeometryKind.MULTIPOLYGON):
        return geometry, False

    repaired = False

    def fix_ring(ring):
        nonlocal repaired
        if len(ring) >= 3 and ring[0] != ring[-1]:
            repaired = True
            return ring + (ring[0],)
        return ring

    if geometry.kind is GeometryKind.POLYGON:
        coords = tuple(fix_ring(r) for r in geometry.coordinates)
    else:
        coords = tuple(tuple(fix_ring(r) for r in poly)
                       for poly in geometry.coordinates)
    if not repaired:
        return geometry, False
    return replace(geometry, coordinates=coords), True


def to_shapely(geometry: Geometry):
    """Convert to a shapely geometry (drops the CRS declaration)."""
    if geometry.kind is GeometryKind.POINT:
        return sgeom.Point(geometry.coordinates)
    if geometry.kind is GeometryKind.LINESTRING:
        return sgeom.LineString(geometry.coordinates)
    if geometry.kind is GeometryKind.POLYGON:
        rings = geometry.coordinates
        return sgeom.Polygon(rings[0], rings[1:])
    polys = [sgeom.Polygon(rings[0], rings[1:]) for rings in geometry.coordinates]
    return sgeom.MultiPolygon(polys)


def from_shapely(geom, crs_id: str = "local") -> Geometry:
    mapping = sgeom.mapping(geom)
    kind = GeometryKind(mapping["type"])
    return Geometry(kind=kind, coordinates=_as_tuple(mapping["coordinates"]),
                    crs_id=crs_id)


def is_self_intersecting(geometry: Geometry) -> bool:
    if geometry.kind not in (GeometryKind.POLYGON, GeometryKind.MULTIPOLYGON):
        return False
    return not shapely.is_valid(to_shapely(geometry))


@dataclass(frozen=True)
class VectorFeature:
    """A cleaned annotation feature (building or road).

    ``road_speed_mph`` stays None for roads until a speed is assigned;
    buildings must never carry one. ``flooded`` is always defined.
    """

    id: str
    geometry: Geometry
    feature_class: FeatureClass
    flooded: bool
    road_speed_mph: float | None = None
    attributes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.feature_class is FeatureClass.BUILDING and self.road_speed_mph is not None:
            raise ContractViolation(
                f"feature {self.id}: buildings cannot carry road_speed_mph")
        if self.road_speed_mph is not None and self.road_speed_mph < 0:
            raise ContractViolation(
                f"feature {self.id}: road_speed_mph must be non-negative")


@dataclass(frozen=True)
class AffineGeotransform:
    """Affine mapping between pixel indices and world coordinates.

    world_x = origin_x + col * pixel_width
    world_y = origin_y + row * pixel_height   (pixel_height < 0 for north-up)

    Pixel (row, col) covers the half-open cell starting at that corner;
    its center sits at (col + 0.5, row + 0.5).
    """

    origin_x: float
    origin_y: float
    pixel_width: float
    pixel_height: float

    def __post_init__(self):
        if self.pixel_width == 0 or self.pixel_height == 0:
            raise ContractViolation("pixel size must be nonzero")

    def pixel_to_world(self, col: float, row: float) -> tuple[float, float]:
        return (self.origin_x + col * self.pixel_width,
                self.origin_y + row * self.pixel_height)

    def world_to_pixel(self, x: float, y: float) -> tuple[float, float]:
        return ((x - self.origin_x) / self.pixel_width,
                (y - self.origin_y) / self.pixel_height)

    def pixel_center(self, row: int, col: int) -> tuple[float, float]:
        return self.pixel_to_world(col + 0.5, row + 0.5)

    def as_gdal(self) -> list[float]:
        """Six-number GDAL-style representation (no rotation terms)."""
        return [self.origin_x, self.pixel_width, 0.0,
                self.origin_y, 0.0, self.pixel_height]

    @classmethod
    def from_gdal(cls, gt: Sequence[float]) -> "AffineGeotransform":
        if len(gt) != 6 or gt[2] != 0.0 or gt[4] != 0.0:
            raise ContractViolation(f"unsupported geotransform {list(gt)}")
        return cls(origin_x=gt[0], origin_y=gt[3],
                   pixel_width=gt[1], pixel_height=gt[5])


@dataclass(frozen=True)
class Tile:
    """A georeferenced image tile with pre/post imagery paths."""

    tile_id: str
    bounds: tuple[float, float, float, float]
    width_px: int
    height_px: int
    geotransform: AffineGeotransform
    crs_id: str = "local"
    pre_image_path: str | None = None
    post_image_path: str | None = None

    def __post_init__(self):
        min_x, min_y, max_x, max_y = self.bounds
        if not (max_x > min_x and max_y > min_y):
            raise ContractViolation(f"tile {self.tile_id}: degenerate bounds {self.bounds}")
        if self.width_px <= 0 or self.height_px <= 0:
            raise ContractViolation(f"tile {self.tile_id}: non-positive pixel dimensions")
        gt = self.geotransform
        xs = (gt.origin_x, gt.origin_x + self.width_px * gt.pixel_width)
        ys = (gt.origin_y, gt.origin_y + self.height_px * gt.pixel_height)
        derived = (min(xs), min(ys), max(xs), max(ys))
        tol = 1e-6 * max(1.0, abs(max_x - min_x), abs(max_y - min_y))
        if any(abs(a - b) > tol for a, b in zip(derived, self.bounds)):
            raise ContractViolation(
                f"tile {self.tile_id}: bounds {self.bounds} disagree with "
                f"geotransform-derived {derived}")


@dataclass(frozen=True)
class AoiSummary:
    """Area-of-interest statistics over a cleaned feature set."""

    area_km2: float
    building_count: int
    road_km: float
    buildings_inundated: int
    building_inund_ratio_pct: float
    road_inund_km: float
    road_inund_ratio_pct: float
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.buildings_inundated > self.building_count:
            raise ContractViolation("inundated building count exceeds total")
        if self.road_inund_km > self.road_km + 1e-9:
            raise ContractViolation("inundated road length exceeds total")
        for pct in (self.building_inund_ratio_pct, self.road_inund_ratio_pct):
            if not (0.0 <= pct <= 100.0):
                raise ContractViolation(f"ratio {pct} outside [0, 100]")

    @classmethod
    def from_counts(cls, area_km2: float, building_count: int,
                    buildings_inundated: int, road_km: float,
                    road_inund_km: float,
                    metadata: Mapping[str, str] | None = None) -> "AoiSummary":
        """Build a summary from raw counts; ratios are 100 * flooded / total."""
        b_ratio = 100.0 * buildings_inundated / building_count if building_count else 0.0
        r_ratio = 100.0 * road_inund_km / road_km if road_km > 0 else 0.0
        return cls(area_km2=area_km2, building_count=building_count,
                   road_km=road_km, buildings_inundated=buildings_inundated,
                   building_inund_ratio_pct=b_ratio, road_inund_km=road_inund_km,
                   road_inund_ratio_pct=r_ratio, metadata=dict(metadata or {}))

    def to_json_dict(self) -> dict:
        return {
            "area_km2": self.area_km2,
            "building_count": self.building_count,
            "road_km": self.road_km,
            "buildings_inundated": self.buildings_inundated,
            "building_inund_ratio_pct": self.building_inund_ratio_pct,
            "road_inund_km": self.road_inund_km,
            "road_inund_ratio_pct": self.road_inund_ratio_pct,
            "metadata": dict(self.metadata),
        }


def load_tiles(path: str | Path) -> list[Tile]:
    """Read a tiles manifest (see README for the schema)."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    crs_id = raw.get("crs_id", "local")
    tiles = []
    for entry in raw["tiles"]:
        tiles.append(Tile(
            tile_id=entry["tile_id"],
            bounds=tuple(entry["bounds"]),
            width_px=int(entry["width_px"]),
            height_px=int(entry["height_px"]),
            geotransform=AffineGeotransform.from_gdal(entry["geotransform"]),
            crs_id=entry.get("crs_id", crs_id),
            pre_image_path=entry.get("pre_image_path"),
            post_image_path=entry.get("post_image_path"),
        ))
    return tiles
