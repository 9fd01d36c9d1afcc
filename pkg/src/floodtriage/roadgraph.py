"""Road networks as weighted graphs and the average path length similarity.

APLS follows the SpaceNet-style definition: node pairs of each graph are
compared against the nearest snapped nodes of the other graph, a missing
path contributes the maximum penalty of 1, and the final score averages the
two directions. Snap tolerance and control-point spacing are configurable;
callers should record them alongside emitted scores.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import networkx as nx

from .errors import ContractViolation
from .geometry import FeatureClass, GeometryKind, VectorFeature

log = logging.getLogger(__name__)

MPH_TO_MPS = 0.44704

DEFAULT_SNAP_TOLERANCE_M = 4.0
DEFAULT_CONTROL_SPACING_M = 50.0


class PathWeight(str, Enum):
    LENGTH = "length"
    TRAVEL_TIME = "travel_time"


@dataclass(frozen=True)
class GraphEdge:
    u: int
    v: int
    length_m: float
    speed_mph: float
    travel_time_s: float

    def __post_init__(self):
        if self.length_m <= 0:
            raise ContractViolation("edge length must be positive")
        if self.speed_mph <= 0:
            raise ContractViolation("edge speed must be positive")
        expected = self.length_m / (self.speed_mph * MPH_TO_MPS)
        if abs(self.travel_time_s - expected) > 1e-9 * max(1.0, expected):
            raise ContractViolation(
                f"travel_time_s {self.travel_time_s} != length/(speed) {expected}")


def make_edge(u: int, v: int, length_m: float, speed_mph: float) -> GraphEdge:
    return GraphEdge(u=u, v=v, length_m=length_m, speed_mph=speed_mph,
                     travel_time_s=length_m / (speed_mph * MPH_TO_MPS))


@dataclass(frozen=True)
class RoadGraph:
    """Undirected road network: node coordinates plus weighted edges."""

    nodes: dict[int, tuple[float, float]]
    edges: tuple[GraphEdge, ...]

    def __post_init__(self):
        for edge in self.edges:
            if edge.u not in self.nodes or edge.v not in self.nodes:
                raise ContractViolation(f"edge ({edge.u}, {edge.v}) references missing node")

    @property
    def is_empty(self) -> bool:
        return not self.edges

    def weight_of(self, edge: GraphEdge, weight: PathWeight) -> float:
        return edge.length_m if weight is PathWeight.LENGTH else edge.travel_time_s

    def to_networkx(self, weight: PathWeight) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.nodes)
        for edge in self.edges:
            w = self.weight_of(edge, weight)
            # Parallel edges collapse to the lighter one.
            if g.has_edge(edge.u, edge.v):
                w = min(w, g[edge.u][edge.v]["weight"])
            g.add_edge(edge.u, edge.v, weight=w)
        return g


class _NodeMerger:
    """Assigns node ids, merging vertices that fall within a snap tolerance."""

    def __init__(self, tolerance: float):
        self.tolerance = tolerance
        self.coords: list[tuple[float, float]] = []

    def node_for(self, x: float, y: float) -> int:
        if self.tolerance > 0:
            for i, (cx, cy) in enumerate(self.coords):
                if math.hypot(x - cx, y - cy) <= self.tolerance:
                    return i
        else:
            for i, (cx, cy) in enumerate(self.coords):
                if cx == x and cy == y:
                    return i
        self.coords.append((x, y))
        return len(self.coords) - 1


def graph_from_roads(features: list[VectorFeature], flooded_only: bool = False,
                     snap_tolerance_m: float = 0.05) -> RoadGraph:
    """Build a road graph from linestring road features with assigned speeds.

    Consecutive linestring vertices become edges with planar length; vertex
    coordinates within ``snap_tolerance_m`` merge into one node. Zero-length
    edges are dropped with a warning.
    """
    merger = _NodeMerger(snap_tolerance_m)
    edges: list[GraphEdge] = []
    for feature in features:
        if feature.feature_class is not FeatureClass.ROAD:
            raise ContractViolation(f"feature {feature.id} is not a road")
        if flooded_only and not feature.flooded:
            continue
        if feature.road_speed_mph is None or feature.road_speed_mph <= 0:
            raise ContractViolation(
                f"road {feature.id} lacks a positive speed; run assign_road_speed")
        if feature.geometry.kind is not GeometryKind.LINESTRING:
            raise ContractViolation(f"road {feature.id} must be a LineString")
        coords = feature.geometry.coordinates
        node_ids = [merger.node_for(x, y) for x, y in coords]
        for (ax, ay), (bx, by), u, v in zip(coords, coords[1:], node_ids, node_ids[1:]):
            length = math.hypot(bx - ax, by - ay)
            if u == v or length == 0.0:
                log.warning("road %s: zero-length edge dropped", feature.id)
                continue
            edges.append(make_edge(u, v, length, feature.road_speed_mph))
    nodes = {i: xy for i, xy in enumerate(merger.coords)}
    return RoadGraph(nodes=nodes, edges=tuple(edges))


def inject_control_points(graph: RoadGraph, spacing_m: float) -> RoadGraph:
    """Split edges longer than ``spacing_m`` with evenly spaced midpoint nodes.

    Path lengths are unchanged; the extra nodes densify APLS sampling.
    """
    if spacing_m <= 0:
        raise ContractViolation("control point spacing must be positive")
    nodes = dict(graph.nodes)
    next_id = max(nodes, default=-1) + 1
    edges: list[GraphEdge] = []
    for edge in graph.edges:
        pieces = math.ceil(edge.length_m / spacing_m)
        if pieces <= 1:
            edges.append(edge)
            continue
        ax, ay = nodes[edge.u]
        bx, by = nodes[edge.v]
        chain = [edge.u]
        for i in range(1, pieces):
            t = i / pieces
            nodes[next_id] = (ax + t * (bx - ax), ay + t * (by - ay))
            chain.append(next_id)
            next_id += 1
        chain.append(edge.v)
        piece_len = edge.length_m / pieces
        for u, v in zip(chain, chain[1:]):
            edges.append(make_edge(u, v, piece_len, edge.speed_mph))
    return RoadGraph(nodes=nodes, edges=tuple(edges))


def _snap_map(source: RoadGraph, target: RoadGraph,
              tolerance: float) -> dict[int, int | None]:
    """Nearest target node per source node within tolerance; ties by node id."""
    target_items = sorted(target.nodes.items())
    snapped: dict[int, int | None] = {}
    for sid, (sx, sy) in source.nodes.items():
        best: tuple[float, int] | None = None
        for tid, (tx, ty) in target_items:
            d = math.hypot(sx - tx, sy - ty)
            if d <= tolerance and (best is None or d < best[0]):
                best = (d, tid)
        snapped[sid] = None if best is None else best[1]
    return snapped


def _directional_score(source: RoadGraph, target: RoadGraph, weight: PathWeight,
                       snap_tolerance: float) -> float | None:
    """1 - mean path-difference contribution over source node pairs."""
    source_nx = source.to_networkx(weight)
    target_nx = target.to_networkx(weight)
    snapped = _snap_map(source, target, snap_tolerance)

    target_lengths: dict[int, dict[int, float]] = {}

    def target_length(a: int, b: int) -> float | None:
        if a not in target_lengths:
            target_lengths[a] = nx.single_source_dijkstra_path_length(
                target_nx, a, weight="weight")
        return target_lengths[a].get(b)

    contributions: list[float] = []
    node_ids = sorted(source.nodes)
    for i, a in enumerate(node_ids):
        source_paths = nx.single_source_dijkstra_path_length(
            source_nx, a, weight="weight")
        for b in node_ids[i + 1:]:
            length = source_paths.get(b)
            if length is None or length <= 0:
                continue
            a2, b2 = snapped[a], snapped[b]
            if a2 is None or b2 is None:
                contributions.append(1.0)
                continue
            other = target_length(a2, b2)
            if other is None:
                contributions.append(1.0)
            else:
                contributions.append(min(1.0, abs(length - other) / length))
    if not contributions:
        return None
    return 1.0 - sum(contributions) / len(contributions)


def apls(reference: RoadGraph, proposal: RoadGraph,
         weight: PathWeight | str = PathWeight.LENGTH,
         snap_tolerance_m: float = DEFAULT_SNAP_TOLERANCE_M,
         control_spacing_m: float | None = DEFAULT_CONTROL_SPACING_M) -> float | None:
    """Average path length similarity between reference and proposal graphs.

    Symmetric: the per-direction scores (reference vs snapped proposal and
    vice versa) are averaged. Returns None when both graphs are empty (no
    roads to compare); an empty proposal against a nonempty reference is 0.
    """
    weight = PathWeight(weight)
    if reference.is_empty and proposal.is_empty:
        return None
    if control_spacing_m is not None:
        reference = inject_control_points(reference, control_spacing_m)
        proposal = inject_control_points(proposal, control_spacing_m)
    scores = [
        _directional_score(reference, proposal, weight, snap_tolerance_m),
        _directional_score(proposal, reference, weight, snap_tolerance_m),
    ]
    valid = [s for s in scores if s is not None]
    if not valid:
        return None
    return sum(valid) / len(valid)
