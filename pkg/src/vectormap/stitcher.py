"""Assemble per-tile road graphs into one graph.

Tiles are laid out with 50% overlap, so every road near a tile seam is
predicted twice. Merging translates each tile into global coordinates,
clusters vertices that land within ``merge_eps`` of each other, and
collapses the resulting duplicate edges. Small loops left over from
slightly misaligned duplicates are then contracted.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import InvalidInputError
from .geometry import EPS, Point2
from .road_graph import RoadGraph, edge_key, polygon_signed_area, sequentialize

log = logging.getLogger(__name__)

DEFAULT_MERGE_EPS = 4.0
DEFAULT_MIN_LOOP_AREA = 300.0


@dataclass(frozen=True)
class StitchConfig:
    merge_eps: float = DEFAULT_MERGE_EPS
    min_loop_area: float = DEFAULT_MIN_LOOP_AREA

    def __post_init__(self) -> None:
        if not self.merge_eps > 0:
            raise InvalidInputError(f"merge_eps must be positive, got {self.merge_eps}")
        if not self.min_loop_area >= 0:
            raise InvalidInputError(f"min_loop_area must be non-negative, got {self.min_loop_area}")


@dataclass(frozen=True)
class TilePlacement:
    """A tile graph in tile-local working coordinates.

    The tile covers ``x in [0, width]`` and ``y in [-height, 0]`` (image rows
    grow downward, working y grows upward). ``origin`` is the working-frame
    position of the tile's top-left corner in the global frame.
    """

    graph: RoadGraph
    origin: Point2 = Point2(0.0, 0.0)
    size: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "origin", Point2(float(self.origin[0]), float(self.origin[1])))
        if self.size is None:
            return
        w, h = self.size
        if not (w > 0 and h > 0):
            raise InvalidInputError(f"tile size must be positive, got {self.size}")
        tol = 1e-6
        for vid, (x, y) in self.graph.positions.items():
            if not (-tol <= x <= w + tol and -h - tol <= y <= tol):
                raise InvalidInputError(f"tile vertex {vid} at ({x}, {y}) lies outside the {w}x{h} tile")


def to_global(t: TilePlacement) -> RoadGraph:
    ox, oy = t.origin
    if ox == 0.0 and oy == 0.0:
        return t.graph
    pos = {v: (x + ox, y + oy) for v, (x, y) in t.graph.positions.items()}
    return RoadGraph(pos, sorted(t.graph.edges))


def tile_origins(width: float, height: float, tile: float, overlap: float = 0.5) -> list[tuple[float, float]]:
    """Image-frame top-left corners of tiles covering a ``width x height`` image.

    Consecutive tiles advance by ``tile * (1 - overlap)``; the last row and
    column are pulled back so they end flush with the image border.
    """
    if tile <= 0 or not 0 <= overlap < 1:
        raise InvalidInputError("tile size must be positive and overlap in [0, 1)")
    stride = tile * (1 - overlap)

    def starts(extent: float) -> list[float]:
        if extent <= tile:
            return [0.0]
        n = math.ceil((extent - tile) / stride) + 1
        out = [min(i * stride, extent - tile) for i in range(n)]
        return sorted(set(out))

    return [(x, y) for y in starts(height) for x in starts(width)]


def _union_find_labels(n: int, pairs: np.ndarray) -> np.ndarray:
    if len(pairs) == 0:
        return np.arange(n)
    m = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(m, directed=False)
    return labels


def _cluster(points: np.ndarray, eps: float) -> np.ndarray:
    """Single-linkage cluster labels, refined until all centroids are > eps apart."""
    n = len(points)
    labels = _union_find_labels(n, cKDTree(points).query_pairs(eps, output_type="ndarray"))
    while True:
        k = labels.max() + 1
        sums = np.zeros((k, 2))
        np.add.at(sums, labels, points)
        centroids = sums / np.bincount(labels, minlength=k)[:, None]
        close = cKDTree(centroids).query_pairs(eps, output_type="ndarray")
        if len(close) == 0:
            return labels
        relabel = _union_find_labels(k, close)
        labels = relabel[labels]


def merge_graphs(tiles: Sequence[TilePlacement], cfg: StitchConfig | None = None) -> RoadGraph:
    """Union of the tiles' global graphs with near-duplicate vertices fused.

    Vertices are clustered by single linkage at ``merge_eps``; each cluster
    becomes one vertex at its centroid. Output ids are ``0..n-1`` ordered by
    the first (tile index, vertex id) member of each cluster.
    """
    cfg = cfg or StitchConfig()
    if not tiles:
        raise InvalidInputError("merge_graphs needs at least one tile")
    keys: list[tuple[int, int]] = []
    pts: list[Point2] = []
    edges: list[tuple[int, int]] = []
    for ti, tile in enumerate(tiles):
        g = to_global(tile)
        local = {}
        for vid, p in g.positions.items():
            local[vid] = len(keys)
            keys.append((ti, vid))
            pts.append(p)
        edges.extend((local[u], local[v]) for u, v in sorted(g.edges))
    if not pts:
        return RoadGraph({}, [])

    points = np.array(pts, dtype=float)
    labels = _cluster(points, cfg.merge_eps)
    # label order by first member; members are already in (tile, id) order
    first_seen: dict[int, int] = {}
    for lab in labels:
        first_seen.setdefault(int(lab), len(first_seen))
    new_id = np.array([first_seen[int(lab)] for lab in labels])
    k = len(first_seen)
    sums = np.zeros((k, 2))
    np.add.at(sums, new_id, points)
    centroids = sums / np.bincount(new_id, minlength=k)[:, None]

    merged_edges = set()
    for a, b in edges:
        u, v = int(new_id[a]), int(new_id[b])
        if u != v:
            merged_edges.add(edge_key(u, v))
    positions = {i: (float(x), float(y)) for i, (x, y) in enumerate(centroids)}
    return RoadGraph(positions, sorted(merged_edges))


def _contract(g: RoadGraph, groups: list[set[int]]) -> RoadGraph:
    target: dict[int, int] = {}
    new_pos = dict(g.positions)
    for group in groups:
        keep = min(group)
        cx = math.fsum(g.positions[v].x for v in group) / len(group)
        cy = math.fsum(g.positions[v].y for v in group) / len(group)
        for v in group:
            target[v] = keep
            if v != keep:
                del new_pos[v]
        new_pos[keep] = Point2(cx, cy)
    edges = set()
    for u, v in g.edges:
        a, b = target.get(u, u), target.get(v, v)
        if a != b:
            edges.add(edge_key(a, b))
    return RoadGraph(new_pos, sorted(edges), tolerance=EPS)


def remove_small_loops(g: RoadGraph, min_loop_area: float = DEFAULT_MIN_LOOP_AREA) -> RoadGraph:
    """Contract every inner face whose area is below ``min_loop_area``.

    The vertices of a small face are fused into one vertex at their
    centroid; edges between them vanish and the remaining edges are
    redirected. Outer boundaries are never touched. Repeats until no small
    face remains.
    """
    if min_loop_area < 0:
        raise InvalidInputError("min_loop_area must be non-negative")
    while True:
        small = []
        for poly in sequentialize(g):
            if poly.kind != "inner":
                continue
            area = abs(polygon_signed_area(g, poly))
            if area < min_loop_area:
                small.append((area, poly.vertex_ids))
        if not small:
            return g
        small.sort()
        used: set[int] = set()
        groups = []
        for _, ids in small:
            group = set(ids)
            if group & used:
                continue
            used |= group
            groups.append(group)
        log.debug("contracting %d small loops", len(groups))
        g = _contract(g, groups)
