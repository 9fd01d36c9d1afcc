import numpy as np
import pytest

from floodtriage.geometry import (
    AffineGeotransform,
    FeatureClass,
    Geometry,
    GeometryKind,
    Tile,
    VectorFeature,
)
from floodtriage.masks import FLOOD_CHANNELS, MaskProduct, MaskRaster


def make_tile(tile_id="tile-0", size=100.0, res=64, crs_id="local"):
    return Tile(
        tile_id=tile_id,
        bounds=(0.0, 0.0, size, size),
        width_px=res,
        height_px=res,
        geotransform=AffineGeotransform(
            origin_x=0.0, origin_y=size,
            pixel_width=size / res, pixel_height=-size / res),
        crs_id=crs_id,
    )


def rect_geometry(x0, y0, x1, y1, crs_id="local"):
    ring = ((x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0))
    return Geometry(kind=GeometryKind.POLYGON, coordinates=(ring,), crs_id=crs_id)


def building(fid, x0, y0, x1, y1, flooded=False, crs_id="local"):
    return VectorFeature(id=fid, geometry=rect_geometry(x0, y0, x1, y1, crs_id),
                         feature_class=FeatureClass.BUILDING, flooded=flooded)


def road(fid, coords, flooded=False, speed=25.0, crs_id="local"):
    return VectorFeature(
        id=fid,
        geometry=Geometry(kind=GeometryKind.LINESTRING,
                          coordinates=tuple(coords), crs_id=crs_id),
        feature_class=FeatureClass.ROAD, flooded=flooded, road_speed_mph=speed)


def flood_mask_from_planes(tile_id, nfb, fb, nfr, fr):
    """Assemble a flood MaskRaster from boolean planes."""
    planes = [np.asarray(p, dtype=bool) for p in (nfb, fb, nfr, fr)]
    data = np.stack([np.where(p, 255, 0).astype(np.uint8) for p in planes])
    return MaskRaster(
        tile_id=tile_id, product=MaskProduct.FLOOD,
        channel_names=FLOOD_CHANNELS, data=data,
        geotransform=AffineGeotransform(0.0, float(data.shape[1]), 1.0, -1.0),
    )


def empty_planes(shape):
    return [np.zeros(shape, dtype=bool) for _ in range(4)]


@pytest.fixture
def tile():
    return make_tile()
