"""Shortest-path based comparison of a predicted road graph with ground truth.

Random vertex pairs are drawn from the ground-truth graph. For each pair we
compare the ground-truth shortest-path length ``d*`` with the length ``d``
of the corresponding path in the prediction, found by snapping both
endpoints to the nearest predicted vertex. Two families of scores are
derived from the pairs:

* the SP connectivity fractions (correct / shorter / longer / no path), and
* length-weighted precision and recall of paths whose min/max length ratio
  reaches a threshold.
"""
from __future__ import annotations

from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .errors import InvalidInputError
from .road_graph import RoadGraph

AP_THRESHOLDS = (0.85, 0.90, 0.95)
SP_BUFFERS = (0.05, 0.10)


@dataclass(frozen=True)
class PathSampleConfig:
    n_starts: int = 100
    n_ends_per_start: int = 1000
    seed: int = 0
    snap_radius: float = 16.0

    def __post_init__(self) -> None:
        if self.n_starts < 1 or self.n_ends_per_start < 1:
            raise InvalidInputError("sample counts must be positive")
        if not self.snap_radius > 0:
            raise InvalidInputError("snap_radius must be positive")


class PathPair(NamedTuple):
    start: int
    end: int
    d_star: float
    d: float | None


@dataclass(frozen=True, eq=False)
class PathSample:
    """Sampled pairs as parallel arrays; ``d`` is NaN where no path was found."""

    start: np.ndarray
    end: np.ndarray
    d_star: np.ndarray
    d: np.ndarray

    def __len__(self) -> int:
        return len(self.d_star)

    def __iter__(self) -> Iterator[PathPair]:
        for s, e, ds, d in zip(self.start, self.end, self.d_star, self.d):
            yield PathPair(int(s), int(e), float(ds), None if np.isnan(d) else float(d))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PathSample):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f), equal_nan=True)
            for f in ("start", "end", "d_star", "d")
        )

    @classmethod
    def from_pairs(cls, pairs: Iterable[PathPair | tuple]) -> PathSample:
        rows = [PathPair(*p) if not isinstance(p, PathPair) else p for p in pairs]
        return cls(
            np.array([p.start for p in rows], dtype=np.int64),
            np.array([p.end for p in rows], dtype=np.int64),
            np.array([p.d_star for p in rows], dtype=float),
            np.array([np.nan if p.d is None else p.d for p in rows], dtype=float),
        )


@dataclass(frozen=True)
class SPResult:
    frac_correct: float
    frac_shorter: float
    frac_longer: float
    frac_no_path: float


@dataclass(frozen=True)
class APARResult:
    ap: float
    ar: float
    threshold: float


def path_iou(d_star: float, d: float) -> float:
    if not (d_star > 0 and d > 0):
        raise InvalidInputError(f"path lengths must be positive, got {d_star} and {d}")
    return min(d_star, d) / max(d_star, d)


def _csgraph(g: RoadGraph) -> tuple[list[int], csr_matrix]:
    ids = list(g.positions)
    index = {v: i for i, v in enumerate(ids)}
    n = len(ids)
    if not g.edges:
        return ids, csr_matrix((n, n))
    rows, cols, w = [], [], []
    for u, v in g.edges:
        (x1, y1), (x2, y2) = g.positions[u], g.positions[v]
        rows.append(index[u])
        cols.append(index[v])
        w.append(float(np.hypot(x2 - x1, y2 - y1)))
    m = csr_matrix((w, (rows, cols)), shape=(n, n))
    return ids, m


def _draw(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    # small graphs: every vertex once, in random order
    if n <= k:
        return rng.permutation(n)
    return rng.integers(0, n, size=k)


def sample_pairs(gt: RoadGraph, pred: RoadGraph, cfg: PathSampleConfig | None = None) -> PathSample:
    """Draw ground-truth vertex pairs and measure both path lengths.

    Starts and ends are drawn with ``numpy.random.default_rng(cfg.seed)``.
    Pairs that are disconnected in the ground truth, or whose endpoints
    coincide, are discarded. Output order is start draw order, then end
    draw order.
    """
    cfg = cfg or PathSampleConfig()
    if len(gt.positions) < 2:
        raise InvalidInputError("ground-truth graph needs at least 2 vertices")
    gt_ids, gt_m = _csgraph(gt)
    n = len(gt_ids)
    rng = np.random.default_rng(cfg.seed)
    starts = _draw(rng, n, cfg.n_starts)
    ends = [_draw(rng, n, cfg.n_ends_per_start) for _ in starts]

    uniq_starts, start_row = np.unique(starts, return_inverse=True)
    gt_dist = dijkstra(gt_m, directed=False, indices=uniq_starts)

    gt_pts = np.array([gt.positions[v] for v in gt_ids])
    pred_ids, pred_m = _csgraph(pred)
    if pred_ids:
        pred_pts = np.array([pred.positions[v] for v in pred_ids])
        dist, snap = cKDTree(pred_pts).query(gt_pts, distance_upper_bound=cfg.snap_radius)
        snap = np.where(np.isfinite(dist), snap, -1)
    else:
        snap = np.full(n, -1)

    snapped_starts = np.unique(snap[uniq_starts][snap[uniq_starts] >= 0])
    pred_dist = (
        dijkstra(pred_m, directed=False, indices=snapped_starts)
        if len(snapped_starts)
        else np.zeros((0, len(pred_ids)))
    )
    pred_row = {int(s): i for i, s in enumerate(snapped_starts)}

    out_s, out_e, out_ds, out_d = [], [], [], []
    for k, s in enumerate(starts):
        e = ends[k]
        e = e[e != s]
        ds = gt_dist[start_row[k], e]
        keep = np.isfinite(ds) & (ds > 0)
        e, ds = e[keep], ds[keep]
        d = np.full(len(e), np.nan)
        ps = int(snap[s])
        if ps >= 0:
            pe = snap[e]
            ok = pe >= 0
            row = pred_dist[pred_row[ps]]
            d[ok] = row[pe[ok]]
            d[~np.isfinite(d)] = np.nan
        out_s.append(np.full(len(e), s))
        out_e.append(e)
        out_ds.append(ds)
        out_d.append(d)

    ids = np.array(gt_ids, dtype=np.int64)
    return PathSample(
        ids[np.concatenate(out_s).astype(np.int64)],
        ids[np.concatenate(out_e).astype(np.int64)],
        np.concatenate(out_ds).astype(float),
        np.concatenate(out_d).astype(float),
    )


def _arrays(pairs: PathSample | Sequence[PathPair]) -> tuple[np.ndarray, np.ndarray]:
    sample = pairs if isinstance(pairs, PathSample) else PathSample.from_pairs(pairs)
    return sample.d_star, sample.d


def sp_metric(pairs: PathSample | Sequence[PathPair], buffer: float = 0.10) -> SPResult:
    """Fractions of pairs whose predicted length is within ``buffer`` of the truth,
    shorter, longer, or missing."""
    if not 0 < buffer < 1:
        raise InvalidInputError(f"buffer must be in (0, 1), got {buffer}")
    d_star, d = _arrays(pairs)
    n = len(d_star)
    if n == 0:
        raise InvalidInputError("no path pairs to evaluate")
    absent = np.isnan(d)
    dd = np.where(absent, 0.0, d)
    correct = ~absent & (np.abs(dd - d_star) <= buffer * d_star)
    shorter = ~absent & ~correct & (dd < d_star)
    longer = ~absent & ~correct & (dd > d_star)
    return SPResult(
        frac_correct=correct.sum() / n,
        frac_shorter=shorter.sum() / n,
        frac_longer=longer.sum() / n,
        frac_no_path=absent.sum() / n,
    )


def path_ap_ar(pairs: PathSample | Sequence[PathPair], t: float) -> APARResult:
    """Length-weighted precision and recall of paths with IoU >= ``t``.

    Precision sums over pairs with a predicted path, weighted by the
    predicted length; recall sums over all pairs, weighted by the
    ground-truth length, and a missing path counts as a miss.
    """
    if not 0 < t <= 1:
        raise InvalidInputError(f"threshold must be in (0, 1], got {t}")
    d_star, d = _arrays(pairs)
    gt_weight = float(d_star.sum())
    if gt_weight <= 0:
        raise InvalidInputError("ground-truth paths have zero total length")
    present = ~np.isnan(d) & (d > 0)
    iou = np.zeros(len(d_star))
    iou[present] = np.minimum(d_star[present], d[present]) / np.maximum(d_star[present], d[present])
    hit = present & (iou >= t)
    pred_weight = float(d[present].sum())
    ap = float(d[hit].sum()) / pred_weight if pred_weight > 0 else 0.0
    ar = float(d_star[hit].sum()) / gt_weight
    return APARResult(ap=ap, ar=ar, threshold=t)


def road_report(
    gt: RoadGraph, pred: RoadGraph, cfg: PathSampleConfig | None = None
) -> dict[str, float | int]:
    """SP at +-5% and +-10% plus path AP/AR at 0.85, 0.90 and 0.95."""
    pairs = sample_pairs(gt, pred, cfg)
    report: dict[str, float | int] = {"pairs": len(pairs)}
    for buf in SP_BUFFERS:
        sp = sp_metric(pairs, buf)
        tag = f"SP{round(buf * 100)}"
        report[f"{tag}_correct"] = float(sp.frac_correct)
        report[f"{tag}_shorter"] = float(sp.frac_shorter)
        report[f"{tag}_longer"] = float(sp.frac_longer)
        report[f"{tag}_no_path"] = float(sp.frac_no_path)
    for t in AP_THRESHOLDS:
        r = path_ap_ar(pairs, t)
        report[f"AP{round(t * 100)}"] = r.ap
        report[f"AR{round(t * 100)}"] = r.ar
    return report
