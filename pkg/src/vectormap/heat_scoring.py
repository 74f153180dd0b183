"""Heatmap grids and segment scoring by line integral.

A grid cell ``(row, col)`` has its centre at image coordinates
``(col + 0.5, row + 0.5)``; in the y-up working frame that is
``(col + 0.5, -(row + 0.5))``. Sampling between centres is bilinear and
clamps to the border cells outside the grid.
"""
from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

QUADRATURE_POINTS = 64
DEFAULT_THRESHOLD = 0.7


@dataclass(frozen=True, eq=False)
class HeatGrid:
    """Row-major grid of values in [0, 1], top row first."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidInputError(f"heat grid must be a non-empty 2D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise InvalidInputError("heat grid values must lie in [0, 1]")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @classmethod
    def constant(cls, width: int, height: int, value: float) -> HeatGrid:
        return cls(np.full((height, width), value, dtype=np.float32))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HeatGrid):
            return NotImplemented
        return self.values.dtype == other.values.dtype and np.array_equal(self.values, other.values)


def _sample_many(b: HeatGrid, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    vals = b.values.astype(float)
    col = np.clip(xs - 0.5, 0.0, b.width - 1)
    row = np.clip(-ys - 0.5, 0.0, b.height - 1)
    c0 = np.minimum(np.floor(col).astype(int), b.width - 1)
    r0 = np.minimum(np.floor(row).astype(int), b.height - 1)
    c1 = np.minimum(c0 + 1, b.width - 1)
    r1 = np.minimum(r0 + 1, b.height - 1)
    fc = col - c0
    fr = row - r0
    top = vals[r0, c0] * (1 - fc) + vals[r0, c1] * fc
    bottom = vals[r1, c0] * (1 - fc) + vals[r1, c1] * fc
    return np.clip(top * (1 - fr) + bottom * fr, 0.0, 1.0)


def sample_bilinear(b: HeatGrid, p: Sequence[float]) -> float:
    """Value of the heatmap at a working-frame point."""
    return float(_sample_many(b, np.array([float(p[0])]), np.array([float(p[1])]))[0])


def edge_score(b: HeatGrid, e: Sequence[Sequence[float]], n: int = QUADRATURE_POINTS) -> float:
    """Mean heat along segment ``e`` (midpoint rule with ``n`` samples)."""
    (x1, y1), (x2, y2) = e
    if math.hypot(x2 - x1, y2 - y1) == 0.0:
        raise InvalidInputError("cannot score a zero-length segment")
    u = (np.arange(n) + 0.5) / n
    xs = u * x1 + (1 - u) * x2
    ys = u * y1 + (1 - u) * y2
    samples = _sample_many(b, xs, ys)
    return min(1.0, max(0.0, math.fsum(samples) / n))


def filter_segments(
    segs: Sequence[Sequence[Sequence[float]]], b: HeatGrid, threshold: float = DEFAULT_THRESHOLD
) -> list:
    if not 0.0 <= threshold <= 1.0:
        raise InvalidInputError(f"threshold must be in [0, 1], got {threshold}")
    return [s for s in segs if edge_score(b, s) >= threshold]
