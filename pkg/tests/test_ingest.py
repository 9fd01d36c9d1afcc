import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from floodtriage.errors import ContractViolation, IngestError
from floodtriage.geometry import FeatureClass
from floodtriage.ingest import (
    IngestSchema,
    assign_road_speed,
    features_to_geojson,
    ingest_annotations,
    split_dataset,
    summarize_aoi,
)

from conftest import building, road

SCHEMA = IngestSchema()


def geojson_feature(fid, geometry, feature_class="building", flooded=False, **props):
    properties = {"feature_class": feature_class, "flooded": flooded}
    properties.update(props)
    return {"type": "Feature", "id": fid, "geometry": geometry,
            "properties": properties}


def square(x0=0.0, y0=0.0, size=1.0, close=True):
    ring = [[x0, y0], [x0 + size, y0], [x0 + size, y0 + size], [x0, y0 + size]]
    if close:
        ring.append([x0, y0])
    return {"type": "Polygon", "coordinates": [ring]}


def write_collection(tmp_path, features, name="annotations.geojson"):
    path = tmp_path / name
    path.write_text(json.dumps({"type": "FeatureCollection", "features": features}))
    return path


def test_null_geometry_dropped_and_counted(tmp_path):
    path = write_collection(tmp_path, [
        geojson_feature("f0", None),
        geojson_feature("f1", square()),
    ])
    result = ingest_annotations(path, SCHEMA)
    assert len(result.features) == 1
    assert result.dropped == 1


def test_valid_features_pass_through_in_order(tmp_path):
    path = write_collection(tmp_path, [
        geojson_feature(f"b{i}", square(x0=float(i))) for i in range(3)
    ] + [geojson_feature("r0", {"type": "LineString",
                                "coordinates": [[0, 0], [5, 5]]},
                         feature_class="road")])
    result = ingest_annotations(path, SCHEMA)
    assert [f.id for f in result.features] == ["b0", "b1", "b2", "r0"]
    assert [f.feature_class for f in result.features] == [
        FeatureClass.BUILDING] * 3 + [FeatureClass.ROAD]


def test_open_ring_closed_and_kept(tmp_path):
    path = write_collection(tmp_path, [geojson_feature("f0", square(close=False))])
    result = ingest_annotations(path, SCHEMA)
    assert len(result.features) == 1
    ring = result.features[0].geometry.coordinates[0]
    assert ring[0] == ring[-1]


def test_unknown_class_warns_and_drops(tmp_path):
    path = write_collection(tmp_path, [
        geojson_feature("f0", square(), feature_class="swimming_pool"),
    ])
    result = ingest_annotations(path, SCHEMA)
    assert not result.features
    assert result.dropped == 1
    assert any("swimming_pool" in w for w in result.warnings)


def test_malformed_json_reports_byte_offset(tmp_path):
    path = tmp_path / "broken.geojson"
    path.write_text('{"type": "FeatureCollection", "features": [,]}')
    with pytest.raises(IngestError) as excinfo:
        ingest_annotations(path, SCHEMA)
    assert excinfo.value.byte_offset is not None
    assert "byte" in str(excinfo.value)


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(IngestError):
        ingest_annotations(tmp_path / "nope.geojson", SCHEMA)


def test_self_intersecting_polygon_kept_and_flagged(tmp_path):
    bowtie = {"type": "Polygon",
              "coordinates": [[[0, 0], [2, 2], [2, 0], [0, 2], [0, 0]]]}
    path = write_collection(tmp_path, [geojson_feature("f0", bowtie)])
    result = ingest_annotations(path, SCHEMA)
    assert len(result.features) == 1
    assert result.features[0].attributes.get("self_intersecting") == "true"


def test_geojson_round_trip_preserves_speeds(tmp_path):
    features = [road("r0", [(0, 0), (10, 0)], speed=40.0)]
    doc = features_to_geojson(features)
    path = tmp_path / "clean.geojson"
    path.write_text(json.dumps(doc))
    result = ingest_annotations(path, SCHEMA)
    assert result.features[0].road_speed_mph == 40.0


# Geometry nodes for the randomized-cleaning property test.
coord = st.one_of(
    st.floats(-100, 100),
    st.just(float("nan")),
    st.just(float("inf")),
)
point = st.tuples(coord, coord).map(list)
raw_geometry = st.one_of(
    st.none(),
    st.builds(lambda: {"type": "Polygon", "coordinates": []}),
    st.builds(lambda pts: {"type": "LineString", "coordinates": pts},
              st.lists(point, min_size=0, max_size=5)),
    st.builds(lambda pts, close: {"type": "Polygon",
                                  "coordinates": [pts + ([pts[0]] if close and pts else [])]},
              st.lists(point, min_size=1, max_size=6), st.booleans()),
)


@settings(max_examples=150, deadline=None)
@given(st.lists(raw_geometry, max_size=8), st.randoms())
def test_every_ingested_feature_satisfies_invariants(tmp_path_factory, geoms, rng):
    from floodtriage.geometry import geometry_problems
    tmp = tmp_path_factory.mktemp("ingest-prop")
    features = [
        geojson_feature(f"f{i}", g,
                        feature_class=rng.choice(["building", "road", "nonsense"]))
        for i, g in enumerate(geoms)
    ]
    path = write_collection(tmp, features, name=f"case-{rng.random()}.geojson")
    result = ingest_annotations(path, SCHEMA)
    for feature in result.features:
        assert geometry_problems(feature.geometry) == []
        assert isinstance(feature.flooded, bool)
    assert len(result.features) + result.dropped == len(features)


def _bare_road(road_type=None):
    from dataclasses import replace
    attributes = {"road_type": road_type} if road_type else {}
    return replace(road("r0", [(0, 0), (1, 1)]), road_speed_mph=None,
                   attributes=attributes)


def test_assign_road_speed_lookup_and_default():
    table = {"residential": 25, "default": 35}
    assert assign_road_speed(_bare_road("residential"), table).road_speed_mph == 25.0
    assert assign_road_speed(_bare_road(), table).road_speed_mph == 35.0


def test_assign_road_speed_error_contracts():
    with pytest.raises(ContractViolation):
        assign_road_speed(building("b0", 0, 0, 1, 1), {"default": 30})
    with pytest.raises(ContractViolation, match="canal"):
        assign_road_speed(_bare_road("canal"), {"residential": 25})


def test_summarize_aoi_reproduces_reference_aoi_ratios():
    # Counts from the published per-AOI statistics; ratios round to 14 / 17.
    summary_inputs = dict(area_km2=741.1, building_count=18892,
                          buildings_inundated=2736, road_km=885.0,
                          road_inund_km=148.4)
    from floodtriage.geometry import AoiSummary
    summary = AoiSummary.from_counts(**summary_inputs)
    assert round(summary.building_inund_ratio_pct) == 14
    assert round(summary.road_inund_ratio_pct) == 17


def test_summarize_aoi_counts_and_saturation():
    feats = [building("b0", 0, 0, 10, 10, flooded=True),
             building("b1", 20, 0, 30, 10, flooded=True),
             road("r0", [(0, 0), (1000, 0)], flooded=True)]
    summary = summarize_aoi(feats, area_km2=1.0)
    assert summary.building_inund_ratio_pct == 100.0
    assert summary.road_inund_ratio_pct == 100.0
    assert summary.road_km == pytest.approx(1.0)


def test_summarize_aoi_quarter():
    feats = [building(f"b{i}", 10.0 * i, 0, 10.0 * i + 5, 5,
                      flooded=(i == 0)) for i in range(4)]
    summary = summarize_aoi(feats, area_km2=2.0)
    assert summary.building_inund_ratio_pct == 25.0


def test_summarize_aoi_empty_is_zero():
    summary = summarize_aoi([], area_km2=1.0)
    assert summary.building_count == 0
    assert summary.building_inund_ratio_pct == 0.0
    assert summary.road_inund_ratio_pct == 0.0


def test_split_85_15():
    train, val = split_dataset([f"t{i}" for i in range(100)], 0.85, seed=7)
    assert len(train) == 85 and len(val) == 15


def test_split_deterministic_and_single_tile():
    ids = [f"t{i}" for i in range(13)]
    assert split_dataset(ids, 0.85, seed=3) == split_dataset(ids, 0.85, seed=3)
    train, val = split_dataset(["only"], 0.85, seed=0)
    assert train == ["only"] and val == []


def test_split_rejects_bad_ratio():
    with pytest.raises(ContractViolation):
        split_dataset(["a"], 1.0, seed=0)


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, 200), ratio=st.floats(0.01, 0.99), seed=st.integers(0, 2**31))
def test_split_partition_property(n, ratio, seed):
    ids = [f"t{i}" for i in range(n)]
    train, val = split_dataset(ids, ratio, seed)
    assert set(train) | set(val) == set(ids)
    assert not set(train) & set(val)
    assert len(train) == math.floor(ratio * n + 0.5)


def test_split_stratified_keeps_groups_balanced():
    ids = [f"a{i}" for i in range(20)] + [f"b{i}" for i in range(20)]
    groups = {tid: tid[0] for tid in ids}
    train, val = split_dataset(ids, 0.75, seed=1, stratify_by=groups)
    assert sum(1 for t in train if t.startswith("a")) == 15
    assert sum(1 for t in train if t.startswith("b")) == 15
