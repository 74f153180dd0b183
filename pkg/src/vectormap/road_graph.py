"""Embedded road graphs and wall-follower sequentialization.

A road network is treated as a bidirected planar graph: every undirected
segment contributes two half-edges with opposite directions. Walking the
half-edges while always taking the sharpest right turn (and turning around
at dead ends) traces closed vertex sequences, one per face of the
embedding. Together these sequences cover every half-edge exactly once, so
the original graph can be rebuilt from them.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from functools import cached_property
from types import MappingProxyType
from typing import Literal

import numpy as np
import shapely
from scipy.spatial import cKDTree
from shapely import STRtree

from .errors import InvalidInputError, UndefinedEmbeddingError
from .geometry import EPS, Point2, signed_area

log = logging.getLogger(__name__)

HalfEdge = tuple[int, int]
Edge = tuple[int, int]


def edge_key(u: int, v: int) -> Edge:
    return (u, v) if u <= v else (v, u)


class RoadGraph:
    """Immutable straight-line embedded graph.

    ``positions`` maps integer vertex ids to points; ``edges`` is a set of
    unordered id pairs, stored normalized as ``(min, max)``.
    """

    def __init__(
        self,
        positions: Mapping[int, Sequence[float]],
        edges: Iterable[Sequence[int]] = (),
        *,
        tolerance: float = EPS,
    ) -> None:
        pos: dict[int, Point2] = {}
        for vid, p in positions.items():
            x, y = float(p[0]), float(p[1])
            if not (math.isfinite(x) and math.isfinite(y)):
                raise InvalidInputError(f"vertex {vid} has non-finite coordinates")
            pos[vid] = Point2(x, y)

        edge_set: set[Edge] = set()
        for e in edges:
            u, v = e
            if u == v:
                raise InvalidInputError(f"self-loop edge at vertex {u}")
            for w in (u, v):
                if w not in pos:
                    raise InvalidInputError(f"edge endpoint {w} undefined")
            key = edge_key(u, v)
            if key in edge_set:
                raise InvalidInputError(f"duplicate edge {key}")
            edge_set.add(key)

        if len(pos) > 1:
            ids = list(pos)
            tree = cKDTree(np.array([pos[i] for i in ids]))
            close = tree.query_pairs(tolerance)
            if close:
                i, j = min(close)
                raise InvalidInputError(f"vertices {ids[i]} and {ids[j]} coincide")

        self._positions = MappingProxyType(dict(sorted(pos.items())))
        self._edges = frozenset(edge_set)

    @property
    def positions(self) -> Mapping[int, Point2]:
        return self._positions

    @property
    def edges(self) -> frozenset[Edge]:
        return self._edges

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RoadGraph):
            return NotImplemented
        return dict(self._positions) == dict(other._positions) and self._edges == other._edges

    def __hash__(self) -> int:
        return hash((tuple(self._positions.items()), self._edges))

    def __repr__(self) -> str:
        return f"RoadGraph(V={len(self._positions)}, E={len(self._edges)})"

    @cached_property
    def rotation(self) -> Mapping[int, tuple[int, ...]]:
        """Neighbours of each vertex sorted anticlockwise by direction angle.

        Ties (collinear overlapping directions) fall back to vertex id.
        """
        nbrs: dict[int, list[int]] = {v: [] for v in self._positions}
        for u, v in self._edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        rot = {}
        for v, ws in nbrs.items():
            px, py = self._positions[v]

            def angle(w: int, px=px, py=py) -> tuple[float, int]:
                qx, qy = self._positions[w]
                return (math.atan2(qy - py, qx - px) % (2 * math.pi), w)

            rot[v] = tuple(sorted(ws, key=angle))
        return MappingProxyType(rot)

    @cached_property
    def _rotation_index(self) -> Mapping[HalfEdge, int]:
        return {(v, w): i for v, ws in self.rotation.items() for i, w in enumerate(ws)}

    def degree(self, v: int) -> int:
        return len(self.rotation[v])

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self.rotation[v]

    def half_edges(self) -> list[HalfEdge]:
        """All directed half-edges in lexicographic order."""
        return sorted([(u, v) for u, v in self._edges] + [(v, u) for u, v in self._edges])

    def has_half_edge(self, h: HalfEdge) -> bool:
        return edge_key(*h) in self._edges and h[0] != h[1]

    def components(self) -> dict[int, int]:
        """Map vertex id to the smallest vertex id of its connected component."""
        label: dict[int, int] = {}
        for root in self._positions:
            if root in label:
                continue
            label[root] = root
            stack = [root]
            while stack:
                v = stack.pop()
                for w in self.rotation[v]:
                    if w not in label:
                        label[w] = root
                        stack.append(w)
        return label

    def segment(self, e: Edge) -> tuple[Point2, Point2]:
        return self._positions[e[0]], self._positions[e[1]]


@dataclass(frozen=True)
class PolygonSeq:
    """Closed walk of vertex ids; the last id connects back to the first."""

    vertex_ids: tuple[int, ...]
    kind: Literal["outer", "inner"] = "inner"

    def __post_init__(self) -> None:
        if len(self.vertex_ids) < 2:
            raise InvalidInputError("a polygon sequence needs at least 2 vertices")
        if self.kind not in ("outer", "inner"):
            raise InvalidInputError(f"unknown polygon kind {self.kind!r}")

    def __len__(self) -> int:
        return len(self.vertex_ids)

    def half_edges(self) -> list[HalfEdge]:
        ids = self.vertex_ids
        return [(ids[i], ids[(i + 1) % len(ids)]) for i in range(len(ids))]

    def canonical(self) -> PolygonSeq:
        """Rotate so that the smallest (id, successor-id) pair comes first."""
        hes = self.half_edges()
        start = min(range(len(hes)), key=hes.__getitem__)
        ids = self.vertex_ids
        return PolygonSeq(ids[start:] + ids[:start], self.kind)

    def same_cycle(self, other: PolygonSeq) -> bool:
        return self.canonical().vertex_ids == other.canonical().vertex_ids


def next_half_edge(g: RoadGraph, h: HalfEdge) -> HalfEdge:
    """Successor of ``h`` under the right-hand wall-follower rule.

    Turns around at dead ends, otherwise leaves along the outgoing edge that
    is the first one met when sweeping anticlockwise from the way we came in
    (the sharpest right turn).
    """
    if not g.has_half_edge(h):
        raise InvalidInputError(f"half-edge {h} is not in the graph")
    u, v = h
    ring = g.rotation[v]
    if len(ring) == 1:
        return (v, u)
    i = g._rotation_index[(v, u)]
    return (v, ring[(i + 1) % len(ring)])


def find_crossings(g: RoadGraph, limit: int | None = 1) -> list[tuple[Edge, Edge]]:
    """Edge pairs that meet anywhere other than at a shared endpoint."""
    edges = sorted(g.edges)
    if len(edges) < 2:
        return []
    pos = g.positions
    coords = np.array([[pos[u], pos[v]] for u, v in edges])
    lines = shapely.linestrings(coords)
    left, right = STRtree(lines).query(lines, predicate="intersects")
    keep = left < right
    left, right = left[keep], right[keep]
    ids = np.array(edges)
    shared = (ids[left][:, :, None] == ids[right][:, None, :]).any(axis=(1, 2))
    bad = ~shared
    if shared.any():
        # segments with a common endpoint may only touch at that point
        inter = shapely.intersection(lines[left[shared]], lines[right[shared]])
        bad[shared] = shapely.get_type_id(inter) != 0
    found = sorted((edges[i], edges[j]) for i, j in zip(left[bad], right[bad]))
    return found if limit is None else found[:limit]


def check_embedding(g: RoadGraph) -> None:
    crossing = find_crossings(g, limit=1)
    if crossing:
        e, f = crossing[0]
        raise UndefinedEmbeddingError(f"edges {e} and {f} intersect away from a shared vertex")


def polygon_signed_area(g: RoadGraph, poly: PolygonSeq) -> float:
    if len(poly) < 3:
        return 0.0
    return signed_area([g.positions[v] for v in poly.vertex_ids])


def sequentialize(g: RoadGraph, *, check: bool = True) -> list[PolygonSeq]:
    """Trace every face boundary walk of ``g`` with the wall follower.

    Walks start from the lexicographically smallest unvisited half-edge, so
    the output is a pure function of the graph. Per connected component the
    walk with the largest signed area (the anticlockwise boundary) is
    flagged ``outer``; all other walks are clockwise ``inner`` faces.
    """
    if check:
        check_embedding(g)
    isolated = [v for v in g.positions if g.degree(v) == 0]
    if isolated:
        log.warning("dropping %d isolated vertices: %s", len(isolated), isolated[:10])

    visited: set[HalfEdge] = set()
    walks: list[tuple[int, ...]] = []
    for start in g.half_edges():
        if start in visited:
            continue
        seq = []
        h = start
        while True:
            visited.add(h)
            seq.append(h[0])
            h = next_half_edge(g, h)
            if h == start:
                break
            if h in visited:
                raise AssertionError(f"wall follower revisited half-edge {h}")
        walks.append(tuple(seq))

    comp = g.components()
    areas = [polygon_signed_area(g, PolygonSeq(w)) for w in walks]
    best: dict[int, int] = {}
    for k, w in enumerate(walks):
        c = comp[w[0]]
        if c not in best or areas[k] > areas[best[c]]:
            best[c] = k
    outer = set(best.values())
    return [PolygonSeq(w, "outer" if k in outer else "inner") for k, w in enumerate(walks)]


def polygons_to_graph(
    polys: Iterable[PolygonSeq | Sequence[int]], positions: Mapping[int, Sequence[float]]
) -> RoadGraph:
    """Union of the consecutive vertex pairs of all polygons, as a graph."""
    edges: set[Edge] = set()
    used: set[int] = set()
    for poly in polys:
        ids = poly.vertex_ids if isinstance(poly, PolygonSeq) else tuple(poly)
        for i, u in enumerate(ids):
            v = ids[(i + 1) % len(ids)]
            if u not in positions:
                raise InvalidInputError(f"polygon references unknown vertex {u}")
            used.add(u)
            if u != v:
                edges.add(edge_key(u, v))
    return RoadGraph({v: positions[v] for v in sorted(used)}, sorted(edges))


def pass_counts(polys: Iterable[PolygonSeq]) -> dict[Edge, int]:
    counts: dict[Edge, int] = {}
    for poly in polys:
        for u, v in poly.half_edges():
            if u == v:
                continue
            key = edge_key(u, v)
            counts[key] = counts.get(key, 0) + 1
    return counts


def segment_pass_count(polys: Iterable[PolygonSeq], e: Sequence[int]) -> int:
    """How many times the segment ``e`` is walked, in either direction."""
    counts = pass_counts(polys)
    key = edge_key(e[0], e[1])
    if key not in counts:
        raise InvalidInputError(f"segment {key} does not occur in the polygons")
    return counts[key]
