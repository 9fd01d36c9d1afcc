"""Pixel-level scoring of prediction masks against reference masks.

Zero-denominator conventions, used everywhere a per-tile score is produced:
precision, recall, F1, and IoU are all 1.0 when both masks are empty
(nothing to find, nothing found) and 0.0 when exactly one is empty. These
conventions keep per-tile aggregation well defined.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ContractViolation
from .masks import MaskProduct, MaskRaster

BUILDING_STATUS_LABELS = ("no_building", "flooded_building", "non_flooded_building")


class BuildingStatus(IntEnum):
    NO_BUILDING = 0
    FLOODED_BUILDING = 1
    NON_FLOODED_BUILDING = 2


@dataclass(frozen=True)
class PixelConfusion:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ContractViolation("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class PixelMetrics:
    confusion: PixelConfusion
    precision: float
    recall: float
    f1: float
    iou: float


def _as_bool(channel: np.ndarray) -> np.ndarray:
    if channel.dtype == np.bool_:
        return channel
    return channel > 0


def pixel_metrics(reference: np.ndarray, prediction: np.ndarray) -> PixelMetrics:
    """Precision/recall/F1/IoU between two binary channels of equal shape."""
    if reference.shape != prediction.shape:
        raise ContractViolation(
            f"shape mismatch: reference {reference.shape} vs prediction {prediction.shape}")
    ref = _as_bool(reference)
    pred = _as_bool(prediction)
    tp = int(np.count_nonzero(ref & pred))
    fp = int(np.count_nonzero(~ref & pred))
    fn = int(np.count_nonzero(ref & ~pred))
    tn = ref.size - tp - fp - fn
    confusion = PixelConfusion(tp=tp, fp=fp, fn=fn, tn=tn)

    if tp + fp + fn == 0:
        return PixelMetrics(confusion, 1.0, 1.0, 1.0, 1.0)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    iou = tp / (tp + fp + fn)
    return PixelMetrics(confusion, precision, recall, f1, iou)


@dataclass(frozen=True)
class BuildingStatusMatrix:
    """3x3 matrix over {no building, flooded building, non-flooded building}.

    Rows are reference status, columns predicted status. Diagonal cells hold
    the per-class IoU (with the empty-mask conventions above); off-diagonal
    cells hold row-normalized confusion fractions. ``overall_score`` is the
    mean of the three diagonal IoUs.
    """

    matrix: np.ndarray  # (3, 3) float64
    overall_score: float
    labels: tuple[str, str, str] = BUILDING_STATUS_LABELS

    def __post_init__(self):
        if self.matrix.shape != (3, 3):
            raise ContractViolation("building status matrix must be 3x3")
        if ((self.matrix < 0) | (self.matrix > 1)).any():
            raise ContractViolation("matrix cells must be in [0, 1]")


def building_status(mask: MaskRaster) -> np.ndarray:
    """Per-pixel building status classes from a flood mask."""
    if mask.product is not MaskProduct.FLOOD:
        raise ContractViolation("building status requires a flood-product mask")
    status = np.zeros((mask.height_px, mask.width_px), dtype=np.uint8)
    status[mask.channel("non_flooded_building") > 0] = BuildingStatus.NON_FLOODED_BUILDING
    status[mask.channel("flooded_building") > 0] = BuildingStatus.FLOODED_BUILDING
    return status


def _class_iou(ref: np.ndarray, pred: np.ndarray, cls: int) -> float:
    ref_c = ref == cls
    pred_c = pred == cls
    union = int(np.count_nonzero(ref_c | pred_c))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(ref_c & pred_c)) / union


def building_status_matrix(reference: MaskRaster,
                           prediction: MaskRaster) -> BuildingStatusMatrix:
    if reference.product is not MaskProduct.FLOOD or prediction.product is not MaskProduct.FLOOD:
        raise ContractViolation("building_status_matrix requires flood-product masks")
    if reference.data.shape != prediction.data.shape:
        raise ContractViolation("reference and prediction mask shapes differ")
    ref = building_status(reference)
    pred = building_status(prediction)

    matrix = np.zeros((3, 3), dtype=np.float64)
    for r in range(3):
        row_total = int(np.count_nonzero(ref == r))
        for c in range(3):
            if r == c:
                matrix[r, c] = _class_iou(ref, pred, r)
            elif row_total:
                matrix[r, c] = int(np.count_nonzero((ref == r) & (pred == c))) / row_total
    overall = float(np.mean(np.diag(matrix)))
    return BuildingStatusMatrix(matrix=matrix, overall_score=overall)


SCORE_METRICS = ("building_iou", "road_iou", "flood_iou",
                 "precision", "recall", "f1", "apls_length", "apls_time")
SCORE_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ScoreRecord:
    """Per-tile metric vector.

    precision/recall/f1 are computed on building presence (union of the two
    building channels); the IoUs cover building, road, and flooded-anything
    pixel sets. APLS fields are null when no road comparison was available.
    """

    tile_id: str
    building_iou: float
    road_iou: float
    flood_iou: float
    precision: float
    recall: float
    f1: float
    apls_length: float | None = None
    apls_time: float | None = None

    def __post_init__(self):
        for name in ("building_iou", "road_iou", "flood_iou",
                     "precision", "recall", "f1"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ContractViolation(f"{name}={value} outside [0, 1]")
        for name in ("apls_length", "apls_time"):
            value = getattr(self, name)
            if value is not None and not (0.0 <= value <= 1.0):
                raise ContractViolation(f"{name}={value} outside [0, 1]")
        if self.precision + self.recall > 0:
            expected = 2 * self.precision * self.recall / (self.precision + self.recall)
            if abs(self.f1 - expected) > 1e-9:
                raise ContractViolation(
                    f"f1={self.f1} inconsistent with precision/recall (expected {expected})")

    def value(self, metric: str) -> float | None:
        if metric not in SCORE_METRICS:
            raise ContractViolation(f"unknown metric {metric!r}; valid: {SCORE_METRICS}")
        return getattr(self, metric)

    def to_json_dict(self) -> dict:
        out = {"schema_version": SCORE_SCHEMA_VERSION, "tile_id": self.tile_id}
        for name in SCORE_METRICS:
            out[name] = getattr(self, name)
        return out

    @classmethod
    def from_json_dict(cls, raw: dict) -> "ScoreRecord":
        kwargs = {name: raw[name] for name in SCORE_METRICS if name in raw}
        return cls(tile_id=raw["tile_id"], **kwargs)


def score_flood_masks(reference: MaskRaster, prediction: MaskRaster,
                      apls_length: float | None = None,
                      apls_time: float | None = None) -> ScoreRecord:
    """Score a prediction flood mask against the reference for one tile."""
    if reference.tile_id != prediction.tile_id:
        raise ContractViolation(
            f"tile mismatch: {reference.tile_id} vs {prediction.tile_id}")

    def union(mask: MaskRaster, names: tuple[str, str]) -> np.ndarray:
        return (mask.channel(names[0]) > 0) | (mask.channel(names[1]) > 0)

    building_ref = union(reference, ("non_flooded_building", "flooded_building"))
    building_pred = union(prediction, ("non_flooded_building", "flooded_building"))
    road_ref = union(reference, ("non_flooded_road", "flooded_road"))
    road_pred = union(prediction, ("non_flooded_road", "flooded_road"))
    flood_ref = union(reference, ("flooded_building", "flooded_road"))
    flood_pred = union(prediction, ("flooded_building", "flooded_road"))

    building = pixel_metrics(building_ref, building_pred)
    road = pixel_metrics(road_ref, road_pred)
    flood = pixel_metrics(flood_ref, flood_pred)
    return ScoreRecord(
        tile_id=reference.tile_id,
        building_iou=building.iou,
        road_iou=road.iou,
        flood_iou=flood.iou,
        precision=building.precision,
        recall=building.recall,
        f1=building.f1,
        apls_length=apls_length,
        apls_time=apls_time,
    )
