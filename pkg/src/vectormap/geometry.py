"""Planar geometry kernel: points, segments, polygon area and overlap.

All coordinates live in a y-up Cartesian frame, so anticlockwise rings have
positive signed area. Conversion from image (y-down) coordinates happens in
:mod:`vectormap.io`.
"""
from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np
from shapely.geometry import LinearRing, Polygon

from .errors import InvalidInputError

EPS = 1e-9


class Point2(NamedTuple):
    x: float
    y: float


class Segment(NamedTuple):
    a: Point2
    b: Point2

    @property
    def length(self) -> float:
        return math.hypot(self.b[0] - self.a[0], self.b[1] - self.a[1])


PointLike = Sequence[float]


def _as_array(points: Sequence[PointLike]) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidInputError(f"expected a list of 2D points, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("polygon has non-finite coordinates")
    return arr


def signed_area(vertices: Sequence[PointLike]) -> float:
    """Shoelace signed area of an implicitly closed vertex ring.

    Positive for anticlockwise order. Degenerate rings (for example a path
    that retraces itself) are accepted and give zero.
    """
    pts = _as_array(vertices)
    if len(pts) < 3:
        raise InvalidInputError(f"polygon needs at least 3 vertices, got {len(pts)}")
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return 0.5 * math.fsum(x * yn - xn * y)


def validate_simple(vertices: Sequence[PointLike]) -> np.ndarray:
    """Return the vertices as an array, raising if they do not form a simple polygon."""
    pts = _as_array(vertices)
    if len(pts) < 3:
        raise InvalidInputError(f"polygon needs at least 3 vertices, got {len(pts)}")
    step = np.linalg.norm(pts - np.roll(pts, -1, axis=0), axis=1)
    if np.any(step <= EPS):
        raise InvalidInputError("polygon has repeated consecutive vertices")
    if not LinearRing(pts).is_simple or not Polygon(pts).is_valid:
        raise InvalidInputError("polygon is not simple")
    return pts


def polygon_intersection_area(a: Sequence[PointLike], b: Sequence[PointLike]) -> float:
    """Area of the overlap of two simple (possibly concave) polygons."""
    va, vb = validate_simple(a), validate_simple(b)
    # fixed operand order so f(a, b) and f(b, a) are bit-identical
    if va.tolist() > vb.tolist():
        va, vb = vb, va
    pa, pb = Polygon(va), Polygon(vb)
    if not pa.intersects(pb):
        return 0.0
    area = pa.intersection(pb).area
    return min(area, pa.area, pb.area)


def polygon_iou(a: Sequence[PointLike], b: Sequence[PointLike]) -> float:
    inter = polygon_intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    area_a, area_b = abs(signed_area(a)), abs(signed_area(b))
    union = (area_a + area_b) - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, max(0.0, inter / union))
