"""Vector features -> raster mask products, plus mask file I/O.

Four products are supported: binary_road, binary_building, flood (four
channels), and road_speed. Pixel inclusion rule: a pixel is set iff its
center lies inside the (buffered) geometry or on its boundary. Rasterization
is deterministic; identical inputs yield bit-identical masks.

Masks are stored as one 8-bit grayscale PNG per channel plus a JSON sidecar
(`<tile_id>.mask.json`) carrying the geotransform, channel list, and product.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import shapely
from PIL import Image
from shapely.geometry.base import BaseGeometry

from .errors import ContractViolation, MaskIOError
from .geometry import (
    AffineGeotransform,
    FeatureClass,
    Geometry,
    GeometryKind,
    Tile,
    VectorFeature,
    from_shapely,
    to_shapely,
)

SIDECAR_SUFFIX = ".mask.json"
MASK_SCHEMA_VERSION = 1

FLOOD_CHANNELS = ("non_flooded_building", "flooded_building",
                  "non_flooded_road", "flooded_road")

# Fixed overlay palette (RGB) for the flood-mask channels.
FLOOD_PALETTE = {
    "non_flooded_building": (0, 92, 230),
    "flooded_building": (220, 30, 30),
    "non_flooded_road": (40, 160, 60),
    "flooded_road": (255, 150, 20),
}


class MaskProduct(str, Enum):
    BINARY_ROAD = "binary_road"
    BINARY_BUILDING = "binary_building"
    FLOOD = "flood"
    ROAD_SPEED = "road_speed"


_CHANNEL_NAMES = {
    MaskProduct.BINARY_ROAD: ("road",),
    MaskProduct.BINARY_BUILDING: ("building",),
    MaskProduct.FLOOD: FLOOD_CHANNELS,
    MaskProduct.ROAD_SPEED: ("road_speed_mph",),
}


@dataclass(frozen=True)
class MaskRaster:
    """Channel-major 8-bit raster with georeferencing.

    Binary products hold only {0, 255}; the road_speed channel holds the
    rounded speed in mph with 0 meaning no road.
    """

    tile_id: str
    product: MaskProduct
    channel_names: tuple[str, ...]
    data: np.ndarray  # (channels, height, width) uint8
    geotransform: AffineGeotransform
    crs_id: str = "local"

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.dtype != np.uint8:
            raise ContractViolation("mask data must be (C, H, W) uint8")
        if len(self.channel_names) != self.data.shape[0]:
            raise ContractViolation("channel_names length must equal channel count")
        if self.product is not MaskProduct.ROAD_SPEED:
            values = np.unique(self.data)
            if not np.isin(values, (0, 255)).all():
                raise ContractViolation(
                    f"binary mask contains values other than 0/255: {values[:8]}")
        if self.product is MaskProduct.FLOOD:
            if self.channel_names != FLOOD_CHANNELS:
                raise ContractViolation("flood mask must use the fixed channel order")
            building = (self.data[0] > 0) & (self.data[1] > 0)
            road = (self.data[2] > 0) & (self.data[3] > 0)
            if building.any() or road.any():
                raise ContractViolation("flood channels must be mutually exclusive")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height_px(self) -> int:
        return self.data.shape[1]

    @property
    def width_px(self) -> int:
        return self.data.shape[2]

    def channel(self, name: str) -> np.ndarray:
        return self.data[self.channel_names.index(name)]


@dataclass(frozen=True)
class RasterizeParams:
    """Knobs for mask construction.

    ``road_half_width_m`` buffers road centerlines into drawable regions
    (default 2.0, roughly a 4 m lane). Point geometries are buffered with
    the same radius. ``quad_segs`` controls buffer arc fidelity.
    """

    road_half_width_m: float = 2.0
    quad_segs: int = 8

    def __post_init__(self):
        if self.road_half_width_m < 0:
            raise ContractViolation("road_half_width_m must be non-negative")


def buffer_geometry(geometry: Geometry, half_width_m: float,
                    quad_segs: int = 8) -> Geometry:
    """Polygonal region containing every point within half_width_m of the input.

    buffer(polygon, 0) returns the polygon unchanged.
    """
    if half_width_m < 0:
        raise ContractViolation(f"buffer width must be non-negative, got {half_width_m}")
    if half_width_m == 0 and geometry.kind in (GeometryKind.POLYGON,
                                               GeometryKind.MULTIPOLYGON):
        return geometry
    buffered = to_shapely(geometry).buffer(half_width_m, quad_segs=quad_segs)
    return from_shapely(buffered, crs_id=geometry.crs_id)


def _drawable_geometry(feature: VectorFeature, params: RasterizeParams) -> BaseGeometry:
    geom = to_shapely(feature.geometry)
    if feature.geometry.kind in (GeometryKind.LINESTRING, GeometryKind.POINT):
        return geom.buffer(params.road_half_width_m, quad_segs=params.quad_segs)
    return geom


def _pixel_window(geom: BaseGeometry, tile: Tile) -> tuple[int, int, int, int] | None:
    """Pixel row/col range (inclusive-exclusive) covering the geometry bounds."""
    gx0, gy0, gx1, gy1 = geom.bounds
    gt = tile.geotransform
    ca, cb = (gx0 - gt.origin_x) / gt.pixel_width, (gx1 - gt.origin_x) / gt.pixel_width
    ra, rb = (gy0 - gt.origin_y) / gt.pixel_height, (gy1 - gt.origin_y) / gt.pixel_height
    c0 = max(0, int(math.floor(min(ca, cb))) - 1)
    c1 = min(tile.width_px, int(math.ceil(max(ca, cb))) + 1)
    r0 = max(0, int(math.floor(min(ra, rb))) - 1)
    r1 = min(tile.height_px, int(math.ceil(max(ra, rb))) + 1)
    if c0 >= c1 or r0 >= r1:
        return None
    return r0, r1, c0, c1


def _stamp(geom: BaseGeometry, tile: Tile) -> tuple[np.ndarray, tuple[int, int, int, int]] | None:
    """Boolean window of pixels whose centers fall inside the geometry."""
    if geom.is_empty:
        return None
    window = _pixel_window(geom, tile)
    if window is None:
        return None
    r0, r1, c0, c1 = window
    gt = tile.geotransform
    xs = gt.origin_x + (np.arange(c0, c1) + 0.5) * gt.pixel_width
    ys = gt.origin_y + (np.arange(r0, r1) + 0.5) * gt.pixel_height
    xx = np.repeat(xs[np.newaxis, :], r1 - r0, axis=0)
    yy = np.repeat(ys[:, np.newaxis], c1 - c0, axis=1)
    shapely.prepare(geom)
    inside = shapely.intersects_xy(geom, xx.ravel(), yy.ravel()).reshape(r1 - r0, c1 - c0)
    if not inside.any():
        return None
    return inside, window


def rasterize(features: list[VectorFeature], tile: Tile, product: MaskProduct | str,
              params: RasterizeParams | None = None) -> MaskRaster:
    """Rasterize features into one of the four mask products for a tile.

    Pixels outside all features are 0. Where flooded and non-flooded
    features of the same class overlap, flooded wins. Overlapping roads in
    the road_speed product keep the highest speed.
    """
    product = MaskProduct(product)
    params = params or RasterizeParams()
    for feature in features:
        if feature.geometry.crs_id != tile.crs_id:
            raise ContractViolation(
                f"feature {feature.id} CRS {feature.geometry.crs_id!r} does not "
                f"match tile CRS {tile.crs_id!r}")

    channel_names = _CHANNEL_NAMES[product]
    shape = (len(channel_names), tile.height_px, tile.width_px)
    data = np.zeros(shape, dtype=np.uint8)

    wanted = {
        MaskProduct.BINARY_ROAD: (FeatureClass.ROAD,),
        MaskProduct.ROAD_SPEED: (FeatureClass.ROAD,),
        MaskProduct.BINARY_BUILDING: (FeatureClass.BUILDING,),
        MaskProduct.FLOOD: (FeatureClass.BUILDING, FeatureClass.ROAD),
    }[product]

    for feature in features:
        if feature.feature_class not in wanted:
            continue
        if product is MaskProduct.ROAD_SPEED and feature.road_speed_mph is None:
            raise ContractViolation(
                f"road {feature.id} has no speed assigned; run assign_road_speed first")
        stamped = _stamp(_drawable_geometry(feature, params), tile)
        if stamped is None:
            continue
        inside, (r0, r1, c0, c1) = stamped
        if product in (MaskProduct.BINARY_ROAD, MaskProduct.BINARY_BUILDING):
            channel = 0
            data[channel, r0:r1, c0:c1][inside] = 255
        elif product is MaskProduct.FLOOD:
            base = 0 if feature.feature_class is FeatureClass.BUILDING else 2
            channel = base + (1 if feature.flooded else 0)
            data[channel, r0:r1, c0:c1][inside] = 255
        else:
            speed = int(min(255, math.floor(feature.road_speed_mph + 0.5)))
            window = data[0, r0:r1, c0:c1]
            window[inside] = np.maximum(window[inside], speed)

    if product is MaskProduct.FLOOD:
        # Flooded wins where both states of a class claim a pixel.
        data[0][data[1] > 0] = 0
        data[2][data[3] > 0] = 0

    return MaskRaster(tile_id=tile.tile_id, product=product,
                      channel_names=channel_names, data=data,
                      geotransform=tile.geotransform, crs_id=tile.crs_id)


def sidecar_path(directory: str | Path, tile_id: str) -> Path:
    return Path(directory) / f"{tile_id}{SIDECAR_SUFFIX}"


def write_mask(mask: MaskRaster, path: str | Path) -> None:
    """Write channel PNGs plus the JSON sidecar at ``path``.

    ``path`` is the sidecar path (``<tile_id>.mask.json``); channel PNGs are
    written next to it as ``<tile_id>.<channel_name>.png``.
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        for i, name in enumerate(mask.channel_names):
            png_path = path.parent / f"{mask.tile_id}.{name}.png"
            Image.fromarray(mask.data[i], mode="L").save(png_path, format="PNG")
        sidecar = {
            "schema_version": MASK_SCHEMA_VERSION,
            "tile_id": mask.tile_id,
            "product": mask.product.value,
            "width_px": mask.width_px,
            "height_px": mask.height_px,
            "channel_names": list(mask.channel_names),
            "geotransform": mask.geotransform.as_gdal(),
            "crs_id": mask.crs_id,
        }
        path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
    except OSError as exc:
        raise MaskIOError(f"cannot write mask to {path}: {exc}", path=str(path)) from exc


def read_mask(path: str | Path) -> MaskRaster:
    """Read a mask written by :func:`write_mask`. Round-trips bit-identically."""
    path = Path(path)
    try:
        sidecar = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise MaskIOError(f"cannot read mask sidecar {path}: {exc}", path=str(path)) from exc
    except json.JSONDecodeError as exc:
        raise MaskIOError(f"corrupt mask sidecar {path}: {exc}", path=str(path)) from exc

    tile_id = sidecar["tile_id"]
    names = tuple(sidecar["channel_names"])
    width, height = sidecar["width_px"], sidecar["height_px"]
    channels = []
    for name in names:
        png_path = path.parent / f"{tile_id}.{name}.png"
        try:
            with Image.open(png_path) as img:
                arr = np.asarray(img.convert("L"), dtype=np.uint8)
        except (OSError, SyntaxError) as exc:
            raise MaskIOError(f"cannot read mask channel {png_path}: {exc}",
                              path=str(png_path)) from exc
        if arr.shape != (height, width):
            raise MaskIOError(
                f"channel {png_path} has shape {arr.shape}, sidecar says "
                f"{(height, width)}", path=str(png_path))
        channels.append(arr)
    return MaskRaster(
        tile_id=tile_id,
        product=MaskProduct(sidecar["product"]),
        channel_names=names,
        data=np.stack(channels, axis=0),
        geotransform=AffineGeotransform.from_gdal(sidecar["geotransform"]),
        crs_id=sidecar.get("crs_id", "local"),
    )


def flood_overlay_rgba(mask: MaskRaster, alpha: int = 160,
                       channels: tuple[str, ...] | None = None) -> np.ndarray:
    """Colorize a flood mask with the fixed palette; transparent elsewhere.

    ``channels`` restricts rendering to a subset of the four flood channels.
    """
    if mask.product is not MaskProduct.FLOOD:
        raise ContractViolation("overlay rendering expects a flood mask")
    out = np.zeros((mask.height_px, mask.width_px, 4), dtype=np.uint8)
    for name in FLOOD_CHANNELS:
        if channels is not None and name not in channels:
            continue
        on = mask.channel(name) > 0
        r, g, b = FLOOD_PALETTE[name]
        out[on] = (r, g, b, alpha)
    return out
