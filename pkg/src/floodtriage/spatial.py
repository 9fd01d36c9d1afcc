"""In-memory spatial index: range, KNN, and join queries over 2-D geometries.

The index is a bounding-rectangle tree bulk-loaded with sort-tile-recursive
packing. It is immutable after build; concurrent readers need no locking.
Distances are planar Euclidean; geometry-to-geometry tests use exact segment
distance after bbox pre-filtering.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import shapely
import shapely.geometry as sgeom
from shapely.geometry.base import BaseGeometry

from .errors import ContractViolation
from .geometry import Geometry, to_shapely

DEFAULT_FANOUT = 16

BBox = tuple[float, float, float, float]


class JoinPredicate(str, Enum):
    INTERSECTS = "intersects"
    CONTAINS = "contains"
    WITHIN_DISTANCE = "within_distance"


@dataclass(frozen=True)
class QueryResult:
    """Ordered ids, with non-decreasing distances for KNN queries."""

    ids: tuple[str, ...]
    distances: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.distances is not None:
            if len(self.distances) != len(self.ids):
                raise ContractViolation("ids and distances length mismatch")
            if any(b < a for a, b in zip(self.distances, self.distances[1:])):
                raise ContractViolation("KNN distances must be non-decreasing")


@dataclass(frozen=True)
class _Entry:
    id: str
    bbox: BBox
    geom: BaseGeometry


class _Node:
    __slots__ = ("bbox", "children", "entries")

    def __init__(self, bbox: BBox, children=None, entries=None):
        self.bbox = bbox
        self.children: list[_Node] | None = children
        self.entries: list[_Entry] | None = entries


def _union_bbox(boxes: Iterable[BBox]) -> BBox:
    xs0, ys0, xs1, ys1 = zip(*boxes)
    return (min(xs0), min(ys0), max(xs1), max(ys1))


def _bbox_contains(outer: BBox, inner: BBox) -> bool:
    return (outer[0] <= inner[0] and outer[1] <= inner[1]
            and outer[2] >= inner[2] and outer[3] >= inner[3])


def _bbox_intersects(a: BBox, b: BBox) -> bool:
    return not (a[2] < b[0] or b[2] < a[0] or a[3] < b[1] or b[3] < a[1])


def _bbox_point_distance(bbox: BBox, x: float, y: float) -> float:
    dx = max(bbox[0] - x, 0.0, x - bbox[2])
    dy = max(bbox[1] - y, 0.0, y - bbox[3])
    return math.hypot(dx, dy)


def _str_pack(items: Sequence, bbox_of, fanout: int) -> list[list]:
    """One sort-tile-recursive packing level: group items into runs of fanout."""
    n = len(items)
    group_count = math.ceil(n / fanout)
    slice_count = math.ceil(math.sqrt(group_count))
    by_x = sorted(items, key=lambda it: (bbox_of(it)[0] + bbox_of(it)[2]))
    slab = slice_count * fanout
    groups: list[list] = []
    for i in range(0, n, slab):
        strip = sorted(by_x[i:i + slab],
                       key=lambda it: (bbox_of(it)[1] + bbox_of(it)[3]))
        for j in range(0, len(strip), fanout):
            groups.append(strip[j:j + fanout])
    return groups


class SpatialIndex:
    """Immutable bounding-rectangle tree over (id, geometry) entries."""

    def __init__(self, entries: list[_Entry], fanout: int):
        self.fanout = fanout
        self._entries = entries
        self._root = self._build_tree(entries, fanout)

    @staticmethod
    def _build_tree(entries: list[_Entry], fanout: int) -> _Node | None:
        if not entries:
            return None
        level: list[_Node] = [
            _Node(_union_bbox([e.bbox for e in group]), entries=group)
            for group in _str_pack(entries, lambda e: e.bbox, fanout)
        ]
        while len(level) > 1:
            level = [
                _Node(_union_bbox([n.bbox for n in group]), children=group)
                for group in _str_pack(level, lambda n: n.bbox, fanout)
            ]
        return level[0]

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def ids(self) -> list[str]:
        return [e.id for e in self._entries]

    def check_invariants(self) -> None:
        """Full tree walk: parent rectangles contain children, ids unique."""
        seen: set[str] = set()

        def walk(node: _Node):
            if node.entries is not None:
                for entry in node.entries:
                    if not _bbox_contains(node.bbox, entry.bbox):
                        raise AssertionError(
                            f"leaf bbox {node.bbox} does not contain {entry.id}")
                    if entry.id in seen:
                        raise AssertionError(f"id {entry.id} indexed twice")
                    seen.add(entry.id)
            else:
                for child in node.children:
                    if not _bbox_contains(node.bbox, child.bbox):
                        raise AssertionError("parent bbox does not contain child")
                    walk(child)

        if self._root is not None:
            walk(self._root)
        if len(seen) != len(self._entries):
            raise AssertionError("tree does not contain every entry exactly once")


def build_index(features: Iterable[tuple[str, Geometry | BaseGeometry]],
                fanout: int = DEFAULT_FANOUT) -> SpatialIndex:
    """Bulk-load an index from (id, geometry) pairs. Ids must be unique."""
    if fanout < 2:
        raise ContractViolation("fanout must be >= 2")
    entries: list[_Entry] = []
    seen: set[str] = set()
    for fid, geometry in features:
        fid = str(fid)
        if fid in seen:
            raise ContractViolation(f"duplicate id {fid!r} in index input")
        seen.add(fid)
        geom = geometry if isinstance(geometry, BaseGeometry) else to_shapely(geometry)
        entries.append(_Entry(id=fid, bbox=tuple(geom.bounds), geom=geom))
    return SpatialIndex(entries, fanout)


def _window_geom(window: BBox):
    min_x, min_y, max_x, max_y = window
    if min_x > max_x or min_y > max_y:
        raise ContractViolation(f"invalid window {window} (min > max)")
    if min_x == max_x and min_y == max_y:
        return sgeom.Point(min_x, min_y)
    if min_x == max_x or min_y == max_y:
        return sgeom.LineString([(min_x, min_y), (max_x, max_y)])
    return sgeom.box(min_x, min_y, max_x, max_y)


def range_query(index: SpatialIndex, window: BBox) -> QueryResult:
    """Ids of geometries intersecting the window, ascending by id.

    A zero-area window is legal and treated as a line or point query.
    """
    query = _window_geom(window)
    hits: list[str] = []

    def walk(node: _Node):
        if not _bbox_intersects(node.bbox, window):
            return
        if node.entries is not None:
            for entry in node.entries:
                if _bbox_intersects(entry.bbox, window) and entry.geom.intersects(query):
                    hits.append(entry.id)
        else:
            for child in node.children:
                walk(child)

    if index._root is not None:
        walk(index._root)
    return QueryResult(ids=tuple(sorted(hits)))


def knn_query(index: SpatialIndex, probe: tuple[float, float], k: int) -> QueryResult:
    """The k nearest entries to a probe point by exact geometry distance.

    Ties break by id ascending; fewer than k entries returns them all.
    """
    if k < 1:
        raise ContractViolation(f"k must be >= 1, got {k}")
    if index._root is None:
        return QueryResult(ids=(), distances=())
    px, py = float(probe[0]), float(probe[1])
    point = sgeom.Point(px, py)

    # Best-first search. Nodes carry their bbox lower bound and expand before
    # entries at equal distance; entries order ties by id.
    counter = 0
    heap: list[tuple[float, int, str, object]] = [
        (_bbox_point_distance(index._root.bbox, px, py), 0, "", index._root)]
    result: list[tuple[str, float]] = []
    while heap and len(result) < k:
        dist, tag, _id, obj = heapq.heappop(heap)
        if tag == 1:
            result.append((obj.id, dist))
            continue
        node: _Node = obj
        if node.entries is not None:
            for entry in node.entries:
                counter += 1
                heapq.heappush(heap, (point.distance(entry.geom), 1, entry.id, entry))
        else:
            for child in node.children:
                counter += 1
                heapq.heappush(
                    heap, (_bbox_point_distance(child.bbox, px, py), 0, str(counter), child))
    return QueryResult(ids=tuple(i for i, _ in result),
                       distances=tuple(d for _, d in result))


def spatial_join(left: SpatialIndex,
                 right: Iterable[tuple[str, Geometry | BaseGeometry]],
                 predicate: JoinPredicate | str = JoinPredicate.INTERSECTS,
                 distance: float | None = None) -> list[tuple[str, str]]:
    """All (left_id, right_id) pairs satisfying the predicate, sorted.

    ``contains`` means the left geometry contains the right one;
    ``within_distance`` requires ``distance`` >= 0 and matches pairs whose
    exact separation is <= distance (0 coincides with intersects).
    """
    predicate = JoinPredicate(predicate)
    if predicate is JoinPredicate.WITHIN_DISTANCE:
        if distance is None or distance < 0:
            raise ContractViolation("within_distance requires distance >= 0")
        pad = float(distance)
    else:
        pad = 0.0

    pairs: list[tuple[str, str]] = []
    for rid, geometry in right:
        rid = str(rid)
        geom = geometry if isinstance(geometry, BaseGeometry) else to_shapely(geometry)
        bounds = geom.bounds
        window = (bounds[0] - pad, bounds[1] - pad, bounds[2] + pad, bounds[3] + pad)
        for lid in _candidates(left, window):
            left_geom = _geom_by_id(left, lid)
            if predicate is JoinPredicate.INTERSECTS:
                ok = left_geom.intersects(geom)
            elif predicate is JoinPredicate.CONTAINS:
                ok = left_geom.contains(geom)
            else:
                ok = shapely.dwithin(left_geom, geom, float(distance))
            if ok:
                pairs.append((lid, rid))
    pairs.sort()
    return pairs


def _candidates(index: SpatialIndex, window: BBox) -> list[str]:
    hits: list[str] = []

    def walk(node: _Node):
        if not _bbox_intersects(node.bbox, window):
            return
        if node.entries is not None:
            hits.extend(e.id for e in node.entries if _bbox_intersects(e.bbox, window))
        else:
            for child in node.children:
                walk(child)

    if index._root is not None:
        walk(index._root)
    return hits


def _geom_by_id(index: SpatialIndex, fid: str) -> BaseGeometry:
    lookup = getattr(index, "_by_id", None)
    if lookup is None:
        lookup = {e.id: e.geom for e in index._entries}
        index._by_id = lookup
    return lookup[fid]


class PartitionedIndex:
    """Dataset split into P independently queried partitions, results merged.

    Query results are identical to a single index over the same entries;
    the equivalence is covered by tests.
    """

    def __init__(self, features: Sequence[tuple[str, Geometry | BaseGeometry]],
                 partitions: int, fanout: int = DEFAULT_FANOUT):
        if partitions < 1:
            raise ContractViolation("partitions must be >= 1")
        seen = set()
        for fid, _ in features:
            if fid in seen:
                raise ContractViolation(f"duplicate id {fid!r} in index input")
            seen.add(fid)
        self.partitions = [
            build_index(features[p::partitions], fanout=fanout)
            for p in range(partitions)
        ]

    def range_query(self, window: BBox) -> QueryResult:
        ids: list[str] = []
        for part in self.partitions:
            ids.extend(range_query(part, window).ids)
        return QueryResult(ids=tuple(sorted(ids)))

    def knn_query(self, probe: tuple[float, float], k: int) -> QueryResult:
        merged: list[tuple[float, str]] = []
        for part in self.partitions:
            res = knn_query(part, probe, k)
            merged.extend(zip(res.distances, res.ids))
        merged.sort()
        top = merged[:k]
        return QueryResult(ids=tuple(i for _, i in top),
                           distances=tuple(d for d, _ in top))

    def spatial_join(self, right: Sequence[tuple[str, Geometry | BaseGeometry]],
                     predicate: JoinPredicate | str = JoinPredicate.INTERSECTS,
                     distance: float | None = None) -> list[tuple[str, str]]:
        pairs: list[tuple[str, str]] = []
        for part in self.partitions:
            pairs.extend(spatial_join(part, right, predicate, distance))
        pairs.sort()
        return pairs
