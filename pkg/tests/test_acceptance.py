"""Acceptance gate: one test per release criterion, at its stated tolerance.

Each test prints `ACCEPTANCE PASS/FAIL: <criterion>`; run with `pytest -s`
(or check captured output) to see the lines. The suite has no dependency on
the browser frontend.
"""

import itertools
import json
import math
import random
import time
from contextlib import contextmanager

import numpy as np
import pytest
import shapely
import shapely.geometry as sg
from fastapi.testclient import TestClient

from floodtriage.analysis import improvement_report, kmeans, select_bad_cases
from floodtriage.enhance import RasterImage, compute_tables, equalize
from floodtriage.masks import MaskProduct, rasterize
from floodtriage.metrics import ScoreRecord, pixel_metrics
from floodtriage.roadgraph import RoadGraph, apls, make_edge
from floodtriage.service import TriageStore, create_app, manifest_to_json_bytes
from floodtriage.spatial import (
    JoinPredicate,
    PartitionedIndex,
    build_index,
    knn_query,
    range_query,
    spatial_join,
)

from conftest import building, make_tile, road
from test_analysis import exhaustive_min_inertia, records_1d
from test_roadgraph import apls_oracle, degrade, random_graph


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE FAIL: {name}")
        raise
    print(f"ACCEPTANCE PASS: {name}")


# -- histogram equalization ---------------------------------------------------

def test_histogram_equalization_criterion():
    with criterion("histogram equalization fixtures exact + monotone invariant, <1s"):
        start = time.perf_counter()

        constant = RasterImage(data=np.full((6, 6), 42, dtype=np.uint8))
        assert (equalize(constant).data == 255).all()

        two_pixel = RasterImage(data=np.array([[0, 255]], dtype=np.uint8))
        assert equalize(two_pixel).data.tolist() == [[128, 255]]
        tables = compute_tables(two_pixel)
        assert tables.normalized[0] == 0.5 and tables.normalized[255] == 1.0

        ramp = RasterImage(data=np.arange(256, dtype=np.uint8).reshape(16, 16))
        expected = np.floor(255 * (np.arange(256) + 1) / 256 + 0.5).astype(np.uint8)
        assert (equalize(ramp).data.ravel() == expected).all()

        rng = np.random.default_rng(1234)
        for _ in range(1000):
            shape = (int(rng.integers(1, 32)), int(rng.integers(1, 32)))
            image = RasterImage(data=rng.integers(0, 256, shape).astype(np.uint8))
            mapping = compute_tables(image).mapping
            assert (np.diff(mapping) >= 0).all()

        assert time.perf_counter() - start < 1.0


# -- pixel metrics ------------------------------------------------------------

def _oracle_pixel(ref, pred):
    tp = fp = fn = 0
    for r, p in zip(ref.ravel().tolist(), pred.ravel().tolist()):
        r, p = bool(r), bool(p)
        tp += r and p
        fp += (not r) and p
        fn += r and not p
    if tp + fp + fn == 0:
        return 1.0, 1.0, 1.0, 1.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1, tp / (tp + fp + fn)


def test_pixel_metrics_criterion():
    with criterion("pixel metrics exact vs brute-force oracle; half-overlap IoU 1/3"):
        rng = np.random.default_rng(42)
        for _ in range(200):
            ref = (rng.random((64, 64)) < rng.uniform(0, 0.9)).astype(np.uint8) * 255
            pred = (rng.random((64, 64)) < rng.uniform(0, 0.9)).astype(np.uint8) * 255
            pm = pixel_metrics(ref, pred)
            precision, recall, f1, iou = _oracle_pixel(ref, pred)
            assert (pm.precision, pm.recall, pm.f1, pm.iou) == (precision, recall, f1, iou)

        ref = np.zeros((3, 8), dtype=np.uint8)
        pred = np.zeros((3, 8), dtype=np.uint8)
        ref[0:2] = 255
        pred[1:3] = 255
        assert pixel_metrics(ref, pred).iou == 1 / 3


# -- APLS ---------------------------------------------------------------------

def test_apls_criterion():
    with criterion("APLS vs all-pairs brute force (1e-9, 50 graphs); identity/empty exact, <10s"):
        start = time.perf_counter()
        rng = random.Random(2024)
        for _ in range(50):
            reference = random_graph(rng, max_nodes=12)
            proposal = degrade(reference, rng)
            got = apls(reference, proposal, control_spacing_m=None)
            expected = apls_oracle(reference, proposal)
            assert got is not None and expected is not None
            assert abs(got - expected) <= 1e-9

        fixed = random_graph(random.Random(5), max_nodes=10)
        assert apls(fixed, fixed, control_spacing_m=None) == 1.0
        assert apls(fixed, RoadGraph(nodes={}, edges=()), control_spacing_m=None) == 0.0
        assert time.perf_counter() - start < 10.0


# -- spatial engine -----------------------------------------------------------

def _random_geoms(rng, n):
    geoms = []
    for i in range(n):
        x, y = rng.uniform(0, 1000), rng.uniform(0, 1000)
        pick = rng.randrange(3)
        if pick == 0:
            geoms.append((f"g{i}", sg.box(x, y, x + rng.uniform(1, 30),
                                          y + rng.uniform(1, 30))))
        elif pick == 1:
            geoms.append((f"g{i}", sg.Point(x, y)))
        else:
            geoms.append((f"g{i}", sg.LineString(
                [(x, y), (x + rng.uniform(-20, 20), y + rng.uniform(-20, 20))])))
    return geoms


def test_spatial_engine_criterion():
    with criterion("spatial range/KNN/join equal brute force on 100 instances; "
                   "partition-merge P in {1,2,4,8}, <30s"):
        start = time.perf_counter()
        rng = random.Random(99)
        for instance in range(100):
            n = rng.randint(1, 1000)
            items = _random_geoms(rng, n)
            geom_arr = np.array([g for _, g in items], dtype=object)
            ids = np.array([i for i, _ in items], dtype=object)
            index = build_index(items)

            x0, y0 = rng.uniform(-50, 950), rng.uniform(-50, 950)
            window = (x0, y0, x0 + rng.uniform(0, 300), y0 + rng.uniform(0, 300))
            got = set(range_query(index, window).ids)
            expected = set(ids[shapely.intersects(geom_arr, sg.box(*window))]) \
                if window[0] < window[2] and window[1] < window[3] \
                else set(ids[shapely.intersects(geom_arr, sg.Point(window[0], window[1]))])
            assert got == expected

            probe = (rng.uniform(0, 1000), rng.uniform(0, 1000))
            k = rng.randint(1, 9)
            got_knn = list(knn_query(index, probe, k).ids)
            dists = shapely.distance(geom_arr, sg.Point(probe))
            ranked = sorted(zip(dists.tolist(), ids.tolist()))[:k]
            assert got_knn == [i for _, i in ranked]

            right = items[:: max(1, n // 20)][:20]
            got_join = spatial_join(index, right, JoinPredicate.INTERSECTS)
            expected_join = sorted(
                (lid, rid)
                for rid, rgeom in right
                for lid in ids[shapely.intersects(geom_arr, rgeom)].tolist())
            assert got_join == expected_join

        items = _random_geoms(rng, 400)
        single = build_index(items)
        window = (100, 100, 700, 700)
        probe = (500.0, 500.0)
        right = items[::10]
        for partitions in (1, 2, 4, 8):
            parted = PartitionedIndex(items, partitions=partitions)
            assert parted.range_query(window) == range_query(single, window)
            assert parted.knn_query(probe, 11) == knn_query(single, probe, 11)
            assert parted.spatial_join(right) == spatial_join(single, right)
        assert time.perf_counter() - start < 30.0


# -- rasterization ------------------------------------------------------------

def test_rasterization_criterion():
    with criterion("rasterized area error <=1.5% at 512^2, strictly decreasing; "
                   "flood channels exclusive"):
        rect = (11.3, 17.7, 77.9, 88.1)
        area = (rect[2] - rect[0]) * (rect[3] - rect[1])
        errors = []
        for res in (128, 256, 512):
            tile = make_tile(tile_id=f"acc{res}", size=100.0, res=res)
            mask = rasterize([building("b", *rect)], tile, MaskProduct.BINARY_BUILDING)
            count = int((mask.data[0] > 0).sum())
            errors.append(abs(count * (100.0 / res) ** 2 - area) / area)
        assert errors[2] <= 0.015
        assert errors[0] > errors[1] > errors[2]

        rng = random.Random(17)
        for trial in range(5):
            tile = make_tile(tile_id=f"x{trial}", size=100.0, res=96)
            features = []
            for i in range(8):
                x, y = rng.uniform(0, 80), rng.uniform(0, 80)
                features.append(building(
                    f"b{i}", x, y, x + rng.uniform(3, 20), y + rng.uniform(3, 20),
                    flooded=rng.random() < 0.5))
            for i in range(4):
                x, y = rng.uniform(0, 90), rng.uniform(0, 90)
                features.append(road(
                    f"r{i}", [(x, y), (x + rng.uniform(-40, 40), y + rng.uniform(-40, 40))],
                    flooded=rng.random() < 0.5))
            mask = rasterize(features, tile, MaskProduct.FLOOD)
            assert not ((mask.data[0] > 0) & (mask.data[1] > 0)).any()
            assert not ((mask.data[2] > 0) & (mask.data[3] > 0)).any()


# -- clustering & bad cases ---------------------------------------------------

def test_clustering_and_badcases_criterion():
    with criterion("k-means equals exhaustive oracle on 1-D fixtures; inertia "
                   "non-increasing; criterion2 subset on 1000 tables"):
        fixtures = [
            ([1.0, 2.0, 9.0, 10.0], 2),
            ([1.0, 2.0, 9.0, 10.0], 1),
            ([0.1, 0.15, 0.5, 0.55, 0.9, 0.95], 3),
            ([0.0, 0.1, 5.0, 5.1, 10.0, 10.2, 15.0, 15.1], 4),
            ([0.2, 0.25, 0.3, 0.8, 0.85], 2),
            ([1.0, 2.0, 3.0, 10.0, 11.0, 12.0, 20.0, 21.0], 3),
            ([4.0, 4.1, 4.2, 7.7], 2),
        ]
        for values, k in fixtures:
            for seed in (0, 1, 2):
                result = kmeans(np.asarray(values), k=k, seed=seed)
                assert result.inertia == pytest.approx(
                    exhaustive_min_inertia(values, k), abs=1e-9)
                history = result.inertia_history
                assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))

        rng = np.random.default_rng(77)
        for _ in range(1000):
            n = int(rng.integers(4, 16))
            table = records_1d(rng.random(n).tolist())
            selected = select_bad_cases(table, dims=("building_iou",))
            assert set(selected.criterion2) <= set(selected.criterion1)


# -- report arithmetic --------------------------------------------------------

def test_report_arithmetic_criterion():
    with criterion("published metric tables reproduce +4.5% IoU, +2.7% F1, "
                   "+5.4% precision; abstract discrepancy flagged"):
        baseline = {"precision": 0.758, "recall": 0.812, "f1": 0.784, "iou": 0.645}
        err_rem = {"precision": 0.789, "recall": 0.821, "f1": 0.805, "iou": 0.674}
        hist_eq = {"precision": 0.799, "recall": 0.777, "f1": 0.788, "iou": 0.65}

        report = improvement_report(baseline, err_rem,
                                    claims={"f1": 2.6, "iou": 4.5})
        by_name = {d.metric: d for d in report.deltas}
        assert abs(by_name["iou"].relative_pct - 4.5) <= 0.15
        assert abs(by_name["f1"].relative_pct - 2.7) <= 0.15
        assert by_name["iou"].rendered_pct == "+4.5%"
        assert by_name["f1"].rendered_pct == "+2.7%"
        assert by_name["f1"].claim_flagged          # abstract says 2.6
        assert not by_name["iou"].claim_flagged
        assert "Flagged" in report.to_markdown()

        contrast = improvement_report(baseline, hist_eq, claims={"precision": 5.0})
        precision = {d.metric: d for d in contrast.deltas}["precision"]
        assert abs(precision.relative_pct - 5.4) <= 0.15
        assert precision.rendered_pct == "+5.4%"
        assert precision.claim_flagged              # abstract says 5


# -- triage service -----------------------------------------------------------

def test_triage_service_criterion(tmp_path):
    with criterion("300-tile triage: 32 mislabeled -> 268/32 manifest; "
                   "journal replay byte-identical"):
        rng = np.random.default_rng(8)
        scores_dir = tmp_path / "scores"
        scores_dir.mkdir()
        tile_ids = []
        for i in range(300):
            tile_id = f"tile{i:04d}"
            p, r = float(rng.uniform(0.3, 1)), float(rng.uniform(0.3, 1))
            record = ScoreRecord(
                tile_id=tile_id,
                building_iou=float(rng.uniform(0, 1)),
                road_iou=float(rng.uniform(0, 1)),
                flood_iou=float(rng.uniform(0, 1)),
                precision=p, recall=r, f1=2 * p * r / (p + r))
            (scores_dir / f"{tile_id}.json").write_text(
                json.dumps(record.to_json_dict()))
            tile_ids.append(tile_id)

        client = TestClient(create_app(tmp_path))
        chosen = rng.choice(np.array(tile_ids), size=32, replace=False).tolist()
        error_types = ["target_omission", "spatial_confusion",
                       "missing_information", "inherent_inaccuracy"]
        for idx, tile in enumerate(chosen):
            response = client.post(f"/api/tiles/{tile}/verdict", json={
                "status": "mislabeled",
                "error_type": error_types[idx % 4],
                "annotator": "acceptance",
            })
            assert response.status_code == 200

        manifest = client.get("/api/export/manifest")
        payload = json.loads(manifest.content)
        assert payload["counts"]["excluded"] == 32
        assert payload["counts"]["included"] == 268
        assert len(payload["excluded"]) == 32
        assert {t["tile_id"] for t in payload["excluded"]} == set(chosen)

        replayed = TriageStore(tmp_path)
        assert manifest_to_json_bytes(replayed.manifest()) == manifest.content
