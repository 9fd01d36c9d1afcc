import math

import pytest
from hypothesis import given, strategies as st

from floodtriage.errors import ContractViolation
from floodtriage.geometry import (
    AffineGeotransform,
    FeatureClass,
    Geometry,
    GeometryKind,
    Tile,
    VectorFeature,
    close_rings,
    from_shapely,
    geometry_problems,
    to_shapely,
)

from conftest import rect_geometry


def test_linestring_needs_two_points():
    geom = Geometry(kind=GeometryKind.LINESTRING, coordinates=((0.0, 0.0),))
    assert geometry_problems(geom)


def test_polygon_ring_closure_detected_and_repaired():
    open_ring = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))
    geom = Geometry(kind=GeometryKind.POLYGON, coordinates=(open_ring,))
    assert geometry_problems(geom)
    fixed, repaired = close_rings(geom)
    assert repaired
    assert geometry_problems(fixed) == []
    assert fixed.coordinates[0][0] == fixed.coordinates[0][-1]


def test_non_finite_coordinates_rejected():
    geom = Geometry(kind=GeometryKind.POINT, coordinates=(float("nan"), 1.0))
    assert geometry_problems(geom)


def test_shapely_round_trip():
    geom = rect_geometry(0, 0, 2, 3)
    back = from_shapely(to_shapely(geom))
    assert back.kind is GeometryKind.POLYGON
    assert to_shapely(back).equals(to_shapely(geom))


def test_building_cannot_carry_speed():
    with pytest.raises(ContractViolation):
        VectorFeature(id="b", geometry=rect_geometry(0, 0, 1, 1),
                      feature_class=FeatureClass.BUILDING, flooded=False,
                      road_speed_mph=25.0)


@given(
    origin_x=st.floats(-1e6, 1e6),
    origin_y=st.floats(-1e6, 1e6),
    pixel_width=st.floats(1e-3, 10.0),
    north_up=st.booleans(),
    col=st.floats(0, 4096),
    row=st.floats(0, 4096),
)
def test_world_pixel_round_trip(origin_x, origin_y, pixel_width, north_up, col, row):
    gt = AffineGeotransform(origin_x=origin_x, origin_y=origin_y,
                            pixel_width=pixel_width,
                            pixel_height=-pixel_width if north_up else pixel_width)
    x, y = gt.pixel_to_world(col, row)
    col2, row2 = gt.world_to_pixel(x, y)
    x2, y2 = gt.pixel_to_world(col2, row2)
    assert math.isclose(x, x2, abs_tol=1e-9)
    assert math.isclose(y, y2, abs_tol=1e-9)


def test_geotransform_gdal_round_trip():
    gt = AffineGeotransform(12.5, 99.0, 0.3, -0.3)
    assert AffineGeotransform.from_gdal(gt.as_gdal()) == gt


def test_tile_bounds_must_match_geotransform():
    gt = AffineGeotransform(origin_x=0.0, origin_y=100.0,
                            pixel_width=1.0, pixel_height=-1.0)
    Tile(tile_id="ok", bounds=(0, 0, 100, 100), width_px=100, height_px=100,
         geotransform=gt)
    with pytest.raises(ContractViolation):
        Tile(tile_id="bad", bounds=(0, 0, 50, 100), width_px=100, height_px=100,
             geotransform=gt)


def test_degenerate_bounds_rejected():
    gt = AffineGeotransform(0.0, 1.0, 1.0, -1.0)
    with pytest.raises(ContractViolation):
        Tile(tile_id="bad", bounds=(0, 0, 0, 1), width_px=1, height_px=1,
             geotransform=gt)
