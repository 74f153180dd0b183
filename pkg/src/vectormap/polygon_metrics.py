"""COCO-style AP/AR for building footprints, with exact polygon IoU.

Follows the COCO evaluation protocol: greedy score-ordered matching at ten
IoU thresholds 0.50:0.05:0.95, 101-point interpolated precision, recall at
100 detections per image, and small/medium/large buckets by ground-truth
area. Instead of rasterized masks, overlap is measured on the polygons.
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidInputError
from .geometry import PointLike, polygon_iou, signed_area, validate_simple

IOU_THRESHOLDS = np.linspace(0.5, 0.95, 10)
RECALL_THRESHOLDS = np.linspace(0.0, 1.0, 101)
MAX_DETS = 100
SMALL_AREA = 32.0**2
LARGE_AREA = 96.0**2
AREA_RANGES = {
    "all": (0.0, float("inf")),
    "s": (0.0, SMALL_AREA),
    "m": (SMALL_AREA, LARGE_AREA),
    "l": (LARGE_AREA, float("inf")),
}

Polygon = Sequence[PointLike]


@dataclass(frozen=True)
class Detection:
    polygon: Polygon
    score: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise InvalidInputError(f"detection score must be in [0, 1], got {self.score}")
        validate_simple(self.polygon)


@dataclass(frozen=True)
class EvalReport:
    """Twelve summary numbers; ``None`` where a bucket has no ground truth."""

    ap: float | None
    ap50: float | None
    ap75: float | None
    ap_s: float | None
    ap_m: float | None
    ap_l: float | None
    ar: float | None
    ar50: float | None
    ar75: float | None
    ar_s: float | None
    ar_m: float | None
    ar_l: float | None

    def as_dict(self) -> dict[str, float | None]:
        return asdict(self)


def _score_order(dets: Sequence[Detection]) -> list[int]:
    # stable, so equal scores keep input order
    return sorted(range(len(dets)), key=lambda i: -dets[i].score)


def _greedy(ious: np.ndarray, t: float, gt_ignore: np.ndarray | None = None):
    """Match score-ordered detections (rows) to ground truths (columns).

    Each detection takes the unmatched ground truth with the highest IoU
    that reaches ``t``. Ignored ground truths are only used when no regular
    one qualifies.
    """
    n_det, n_gt = ious.shape
    if gt_ignore is None:
        gt_ignore = np.zeros(n_gt, dtype=bool)
    gt_order = np.argsort(gt_ignore, kind="stable")
    gt_taken = np.zeros(n_gt, dtype=bool)
    det_match = np.full(n_det, -1)
    for d in range(n_det):
        best = min(t, 1 - 1e-10)
        m = -1
        for g in gt_order:
            if gt_taken[g]:
                continue
            if m > -1 and not gt_ignore[m] and gt_ignore[g]:
                break
            if ious[d, g] < best:
                continue
            best = ious[d, g]
            m = g
        if m > -1:
            det_match[d] = m
            gt_taken[m] = True
    return det_match


def _iou_matrix(gts: Sequence[Polygon], dets: Sequence[Detection], order: list[int]) -> np.ndarray:
    ious = np.zeros((len(order), len(gts)))
    for row, d in enumerate(order):
        for g, gt in enumerate(gts):
            ious[row, g] = polygon_iou(dets[d].polygon, gt)
    return ious


def match_at_threshold(
    gts: Sequence[Polygon], dets: Sequence[Detection], t: float
) -> dict[int, int]:
    """One-to-one matching at IoU ``t``: detection index -> ground-truth index."""
    if not 0 < t <= 1:
        raise InvalidInputError(f"IoU threshold must be in (0, 1], got {t}")
    order = _score_order(dets)
    match = _greedy(_iou_matrix(gts, dets, order), t)
    return {order[row]: int(g) for row, g in enumerate(match) if g >= 0}


def _evaluate_image(gts, dets, max_dets):
    order = _score_order(dets)[:max_dets]
    ious = _iou_matrix(gts, dets, order)
    gt_area = np.array([abs(signed_area(g)) for g in gts])
    det_area = np.array([abs(signed_area(dets[i].polygon)) for i in order])
    scores = np.array([dets[i].score for i in order])
    result = {}
    for name, (lo, hi) in AREA_RANGES.items():
        gt_ignore = (gt_area < lo) | (gt_area >= hi)
        det_out = (det_area < lo) | (det_area >= hi)
        matched = np.zeros((len(IOU_THRESHOLDS), len(order)), dtype=bool)
        det_ignore = np.zeros_like(matched)
        for ti, t in enumerate(IOU_THRESHOLDS):
            m = _greedy(ious, t, gt_ignore)
            matched[ti] = m >= 0
            det_ignore[ti] = np.where(m >= 0, gt_ignore[np.maximum(m, 0)], det_out)
        result[name] = (scores, matched, det_ignore, int((~gt_ignore).sum()))
    return result


def _accumulate(per_image: list[dict], area: str):
    scores = np.concatenate([img[area][0] for img in per_image])
    matched = np.concatenate([img[area][1] for img in per_image], axis=1)
    ignore = np.concatenate([img[area][2] for img in per_image], axis=1)
    n_pos = sum(img[area][3] for img in per_image)
    n_t = len(IOU_THRESHOLDS)
    if n_pos == 0:
        return np.full(n_t, -1.0), np.full(n_t, -1.0)
    order = np.argsort(-scores, kind="mergesort")
    matched, ignore = matched[:, order], ignore[:, order]
    precision = np.zeros(n_t)
    recall = np.zeros(n_t)
    for ti in range(n_t):
        tp = np.cumsum(matched[ti] & ~ignore[ti]).astype(float)
        fp = np.cumsum(~matched[ti] & ~ignore[ti]).astype(float)
        if len(tp) == 0:
            continue
        rc = tp / n_pos
        pr = tp / np.maximum(tp + fp, np.spacing(1))
        recall[ti] = rc[-1]
        # precision envelope: best precision at any higher recall
        pr = np.maximum.accumulate(pr[::-1])[::-1]
        idx = np.searchsorted(rc, RECALL_THRESHOLDS, side="left")
        q = np.zeros(len(RECALL_THRESHOLDS))
        ok = idx < len(pr)
        q[ok] = pr[idx[ok]]
        precision[ti] = q.mean()
    return precision, recall


def coco_eval_images(
    images: Sequence[tuple[Sequence[Polygon], Sequence[Detection]]], max_dets: int = MAX_DETS
) -> EvalReport:
    """Evaluate several images, each a ``(ground_truths, detections)`` pair."""
    for gts, _ in images:
        for g in gts:
            validate_simple(g)
    per_image = [_evaluate_image(gts, dets, max_dets) for gts, dets in images]
    if not per_image:
        raise InvalidInputError("no images to evaluate")
    out = {}
    t50 = int(np.argmin(np.abs(IOU_THRESHOLDS - 0.5)))
    t75 = int(np.argmin(np.abs(IOU_THRESHOLDS - 0.75)))
    for area in AREA_RANGES:
        precision, recall = _accumulate(per_image, area)
        if precision[0] < 0:
            out[area] = (None, None, None, None, None, None)
            continue
        out[area] = (
            float(precision.mean()),
            float(precision[t50]),
            float(precision[t75]),
            float(recall.mean()),
            float(recall[t50]),
            float(recall[t75]),
        )
    ap, ap50, ap75, ar, ar50, ar75 = out["all"]
    return EvalReport(
        ap=ap, ap50=ap50, ap75=ap75, ap_s=out["s"][0], ap_m=out["m"][0], ap_l=out["l"][0],
        ar=ar, ar50=ar50, ar75=ar75, ar_s=out["s"][3], ar_m=out["m"][3], ar_l=out["l"][3],
    )


def coco_eval(gts: Sequence[Polygon], dets: Sequence[Detection], max_dets: int = MAX_DETS) -> EvalReport:
    return coco_eval_images([(gts, dets)], max_dets)
