"""Score clustering, bad-case selection, improvement reports, error tagging."""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import ndimage

from .errors import ContractViolation
from .masks import MaskProduct, MaskRaster
from .metrics import ScoreRecord

log = logging.getLogger(__name__)

DEFAULT_CLUSTER_DIMS = ("building_iou", "road_iou", "flood_iou")
MAX_KMEANS_ITERATIONS = 300

# k defaults mirroring the two analyzed model families.
BASELINE_DEFAULT_K = 3
SOTA_DEFAULT_K = 2

TARGET_OMISSION_AREA_PX = 100


class ErrorType(str, Enum):
    TARGET_OMISSION = "target_omission"
    SPATIAL_CONFUSION = "spatial_confusion"
    MISSING_INFORMATION = "missing_information"
    INHERENT_INACCURACY = "inherent_inaccuracy"


class TagSource(str, Enum):
    HEURISTIC = "heuristic"
    HUMAN = "human"


@dataclass(frozen=True)
class ErrorTag:
    tile_id: str
    type: ErrorType
    source: TagSource


@dataclass(frozen=True)
class ClusterModel:
    """k-means result: centroids, per-tile assignments, inertia trace."""

    k: int
    dims: tuple[str, ...]
    centroids: np.ndarray          # (k, len(dims))
    assignments: dict[str, int]    # tile_id -> cluster index
    inertia: float
    inertia_history: tuple[float, ...]
    excluded: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "k": self.k,
            "dims": list(self.dims),
            "centroids": self.centroids.tolist(),
            "assignments": dict(sorted(self.assignments.items())),
            "inertia": self.inertia,
            "excluded": list(self.excluded),
        }


def _score_matrix(records: list[ScoreRecord], dims: tuple[str, ...]
                  ) -> tuple[np.ndarray, list[str], list[str]]:
    rows, ids, excluded = [], [], []
    for record in records:
        values = [record.value(d) for d in dims]
        if any(v is None for v in values):
            log.warning("tile %s: null metric in %s, excluded from clustering",
                        record.tile_id, dims)
            excluded.append(record.tile_id)
            continue
        rows.append(values)
        ids.append(record.tile_id)
    return np.asarray(rows, dtype=np.float64), ids, excluded


def _farthest_point_seeds(points: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Deterministic seeding: random first centroid, then farthest points."""
    rng = random.Random(seed)
    chosen = [rng.randrange(len(points))]
    dist = np.linalg.norm(points - points[chosen[0]], axis=1)
    while len(chosen) < k:
        nxt = int(np.argmax(dist))  # ties -> lowest index
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(points - points[nxt], axis=1))
    return points[chosen].copy()


@dataclass(frozen=True)
class KMeansResult:
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    inertia_history: tuple[float, ...]


def kmeans(points: np.ndarray, k: int, seed: int) -> KMeansResult:
    """Lloyd iteration with deterministic farthest-point seeding.

    Runs to an assignment fixpoint or 300 iterations; the recorded inertia
    trace is non-increasing. Ties in assignment go to the lowest cluster
    index; empty clusters keep their previous centroid.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points.reshape(-1, 1)
    n = len(points)
    if k < 1 or k > n:
        raise ContractViolation(f"k={k} outside [1, {n}] for {n} points")

    centroids = _farthest_point_seeds(points, k, seed)
    assignments = np.zeros(n, dtype=np.int64)
    history: list[float] = []
    for _ in range(MAX_KMEANS_ITERATIONS):
        distances = np.linalg.norm(points[:, np.newaxis, :] - centroids, axis=2)
        new_assignments = np.argmin(distances, axis=1)
        history.append(float((distances[np.arange(n), new_assignments] ** 2).sum()))
        moved = bool((new_assignments != assignments).any())
        assignments = new_assignments
        for c in range(k):
            members = points[assignments == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
        if not moved and len(history) > 1:
            break

    distances = np.linalg.norm(points[:, np.newaxis, :] - centroids, axis=2)
    inertia = float((distances[np.arange(n), assignments] ** 2).sum())
    return KMeansResult(centroids=centroids, assignments=assignments,
                        inertia=inertia, inertia_history=tuple(history))


def cluster_scores(records: list[ScoreRecord], k: int, seed: int,
                   dims: tuple[str, ...] = DEFAULT_CLUSTER_DIMS) -> ClusterModel:
    """Cluster per-tile score vectors, deterministic per seed.

    Records with a null value in any requested dim are excluded with a
    warning.
    """
    if not dims:
        raise ContractViolation("dims must be non-empty")
    points, ids, excluded = _score_matrix(records, tuple(dims))
    n = len(ids)
    if k < 1 or k > n:
        raise ContractViolation(f"k={k} outside [1, {n}] for {n} usable records")
    result = kmeans(points, k, seed)
    return ClusterModel(
        k=k, dims=tuple(dims), centroids=result.centroids,
        assignments={tid: int(c) for tid, c in zip(ids, result.assignments)},
        inertia=result.inertia, inertia_history=result.inertia_history,
        excluded=tuple(excluded),
    )


@dataclass(frozen=True)
class BadCaseSet:
    """Tiles below per-metric thresholds.

    criterion1: any score strictly below its metric's median.
    criterion2: any score strictly below its metric's 25th percentile.
    criterion2 is always a subset of criterion1, so combined == criterion1.
    """

    criterion1: tuple[str, ...]
    criterion2: tuple[str, ...]
    combined: tuple[str, ...]
    reasons: dict[str, list[dict]] = field(default_factory=dict)
    thresholds: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "criterion1": list(self.criterion1),
            "criterion2": list(self.criterion2),
            "combined": list(self.combined),
            "reasons": {k: self.reasons[k] for k in sorted(self.reasons)},
            "thresholds": {k: self.thresholds[k] for k in sorted(self.thresholds)},
        }


def select_bad_cases(records: list[ScoreRecord],
                     dims: tuple[str, ...] = DEFAULT_CLUSTER_DIMS) -> BadCaseSet:
    """Select under-performing tiles by the median / 25th-percentile criteria.

    Thresholds are computed per metric over all records with a value for it
    (percentiles by linear interpolation). Needs at least 4 records for a
    meaningful 25th percentile; with fewer, skip this and triage directly.
    """
    if len(records) < 4:
        raise ContractViolation(
            "need >= 4 records for a 25th percentile; skip the percentile "
            "criterion for smaller sets")
    thresholds: dict[str, dict[str, float]] = {}
    for dim in dims:
        values = [r.value(dim) for r in records if r.value(dim) is not None]
        if not values:
            continue
        arr = np.asarray(values, dtype=np.float64)
        thresholds[dim] = {
            "median": float(np.percentile(arr, 50)),
            "p25": float(np.percentile(arr, 25)),
        }

    criterion1: list[str] = []
    criterion2: list[str] = []
    reasons: dict[str, list[dict]] = {}
    for record in records:
        hit1 = hit2 = False
        for dim, t in thresholds.items():
            value = record.value(dim)
            if value is None:
                continue
            if value < t["median"]:
                hit1 = True
                reasons.setdefault(record.tile_id, []).append(
                    {"metric": dim, "criterion": "below_median",
                     "threshold": t["median"], "value": value})
            if value < t["p25"]:
                hit2 = True
                reasons.setdefault(record.tile_id, []).append(
                    {"metric": dim, "criterion": "below_p25",
                     "threshold": t["p25"], "value": value})
        if hit1:
            criterion1.append(record.tile_id)
        if hit2:
            criterion2.append(record.tile_id)
    return BadCaseSet(
        criterion1=tuple(sorted(criterion1)),
        criterion2=tuple(sorted(criterion2)),
        combined=tuple(sorted(set(criterion1) | set(criterion2))),
        reasons=reasons,
        thresholds=thresholds,
    )


@dataclass(frozen=True)
class MetricDelta:
    metric: str
    before: float
    after: float
    absolute: float
    relative_pct: float | None  # None when before == 0
    claimed_pct: float | None = None
    claim_flagged: bool = False

    @property
    def rendered_pct(self) -> str:
        if self.relative_pct is None:
            return "undefined"
        return f"{self.relative_pct:+.1f}%"


@dataclass(frozen=True)
class ImprovementReport:
    """Absolute and relative metric deltas between two runs."""

    deltas: tuple[MetricDelta, ...]

    def to_markdown(self) -> str:
        lines = [
            "| Metric | Before | After | Abs. delta | Rel. delta | Claimed |",
            "|---|---|---|---|---|---|",
        ]
        for d in self.deltas:
            claimed = "" if d.claimed_pct is None else f"{d.claimed_pct:+.1f}%"
            if d.claim_flagged:
                claimed += " (differs from computed)"
            lines.append(
                f"| {d.metric} | {d.before:.3f} | {d.after:.3f} "
                f"| {d.absolute:+.3f} | {d.rendered_pct} | {claimed} |")
        flagged = [d.metric for d in self.deltas if d.claim_flagged]
        if flagged:
            lines.append("")
            lines.append(
                "Flagged: computed relative deltas for "
                + ", ".join(flagged)
                + " do not match the claimed values at one-decimal rounding.")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        rows = ["metric,before,after,absolute_delta,relative_delta_pct,claimed_pct,flagged"]
        for d in self.deltas:
            rel = "" if d.relative_pct is None else f"{d.relative_pct:.6f}"
            claimed = "" if d.claimed_pct is None else f"{d.claimed_pct}"
            rows.append(f"{d.metric},{d.before},{d.after},{d.absolute:.6f},"
                        f"{rel},{claimed},{str(d.claim_flagged).lower()}")
        return "\n".join(rows) + "\n"


def improvement_report(before: dict[str, float], after: dict[str, float],
                       claims: dict[str, float] | None = None) -> ImprovementReport:
    """Compare two metric tables; relative delta is (after - before) / before.

    ``claims`` maps metric name to an externally claimed relative delta in
    percent; a claim is flagged when it disagrees with the computed delta
    beyond one-decimal rounding (0.05 percentage points).
    """
    missing = sorted(set(before) ^ set(after))
    if missing:
        raise ContractViolation(f"metric keys do not match: {missing}")
    claims = claims or {}
    deltas = []
    for metric in before:
        b, a = float(before[metric]), float(after[metric])
        absolute = a - b
        relative = None if b == 0 else 100.0 * absolute / b
        claimed = claims.get(metric)
        flagged = (claimed is not None and relative is not None
                   and abs(relative - claimed) > 0.05)
        deltas.append(MetricDelta(metric=metric, before=b, after=a,
                                  absolute=absolute, relative_pct=relative,
                                  claimed_pct=claimed, claim_flagged=flagged))
    return ImprovementReport(deltas=tuple(deltas))


def _class_planes(mask: MaskRaster) -> dict[str, np.ndarray]:
    return {
        "building": (mask.channel("non_flooded_building") > 0)
        | (mask.channel("flooded_building") > 0),
        "road": (mask.channel("non_flooded_road") > 0)
        | (mask.channel("flooded_road") > 0),
    }


def suggest_error_tags(record: ScoreRecord, reference: MaskRaster,
                       prediction: MaskRaster,
                       small_object_px: int = TARGET_OMISSION_AREA_PX) -> list[ErrorTag]:
    """Heuristic error-type suggestions from mask disagreement patterns.

    Target omission: a small reference component with zero predicted overlap.
    Spatial confusion: a predicted component overlapping only the other class
    in the reference. Suggestions never replace human tags; each type is
    suggested at most once per tile.
    """
    if reference.product is not MaskProduct.FLOOD or prediction.product is not MaskProduct.FLOOD:
        raise ContractViolation("error tagging expects flood-product masks")
    if reference.data.shape != prediction.data.shape:
        raise ContractViolation("masks are not aligned")

    ref_planes = _class_planes(reference)
    pred_planes = _class_planes(prediction)
    types: list[ErrorType] = []

    for cls, ref_plane in ref_planes.items():
        labels, count = ndimage.label(ref_plane)
        pred_plane = pred_planes[cls]
        for component in range(1, count + 1):
            component_mask = labels == component
            if (component_mask.sum() < small_object_px
                    and not (component_mask & pred_plane).any()):
                types.append(ErrorType.TARGET_OMISSION)
                break

    other = {"building": "road", "road": "building"}
    for cls, pred_plane in pred_planes.items():
        labels, count = ndimage.label(pred_plane)
        ref_same = ref_planes[cls]
        ref_other = ref_planes[other[cls]]
        for component in range(1, count + 1):
            component_mask = labels == component
            if (not (component_mask & ref_same).any()
                    and (component_mask & ref_other).any()):
                types.append(ErrorType.SPATIAL_CONFUSION)
                break

    seen: set[ErrorType] = set()
    tags = []
    for t in types:
        if t not in seen:
            seen.add(t)
            tags.append(ErrorTag(tile_id=record.tile_id, type=t,
                                 source=TagSource.HEURISTIC))
    return tags
