"""Evaluation metrics: box mAP, segmentation mIoU, and their combination
normalized by fully-trained performance.

The mAP protocol is fixed for reproducibility: single IoU threshold
(default 0.5), greedy matching in descending confidence order with ties
broken by ascending prediction index, each ground-truth box matched at
most once, and area under the precision-recall curve with all-point
interpolation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import Box, ClassSpace, SampleRecord, argmax_label

__all__ = [
    "MetricReport",
    "box_iou",
    "average_precision",
    "mean_average_precision",
    "mean_iou",
    "mdsq",
    "build_report",
]


@dataclass(frozen=True)
class MetricReport:
    """Evaluation snapshot; ``mdsq`` is derived from the other four fields."""

    map: float
    miou: float
    mdsq: float
    map_fully: float
    miou_fully: float


def box_iou(a: Box, b: Box) -> float:
    """Intersection over union in continuous coordinates."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def _greedy_match(
    preds: Sequence[tuple[Box, float]], truths: Sequence[Box], iou_threshold: float
) -> list[bool]:
    """True/false-positive flags for predictions processed in descending
    confidence (ties by ascending index). Each truth matches at most once,
    to the highest-IoU unmatched candidate (ties toward the lowest index)."""
    order = sorted(range(len(preds)), key=lambda i: (-preds[i][1], i))
    taken = [False] * len(truths)
    flags = [False] * len(preds)
    for i in order:
        box = preds[i][0]
        best_iou = 0.0
        best_j = -1
        for j, truth in enumerate(truths):
            if taken[j]:
                continue
            iou = box_iou(box, truth)
            if iou > best_iou:
                best_iou = iou
                best_j = j
        if best_j >= 0 and best_iou >= iou_threshold:
            taken[best_j] = True
            flags[i] = True
    # flags in descending-confidence order
    return [flags[i] for i in order]


def _ap_from_flags(flags: Sequence[bool], n_truth: int) -> float:
    """Area under the precision-recall curve with all-point interpolation,
    from true-positive flags already in descending-confidence order."""
    if n_truth == 0:
        return 1.0 if not flags else 0.0
    if not flags:
        return 0.0
    arr = np.asarray(flags, dtype=bool)
    tp = np.cumsum(arr)
    ranks = np.arange(1, arr.size + 1)
    recall = tp / n_truth
    precision = tp / ranks
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.diff(np.concatenate(([0.0], recall)))
    return float(np.sum(steps * envelope))


def average_precision(
    preds: Sequence[tuple[Box, float]], truths: Sequence[Box], iou_threshold: float = 0.5
) -> float:
    """Single-class average precision over one pool of boxes.

    No predictions against existing truths gives 0; empty predictions and
    truths together count as a vacuously perfect 1.
    """
    for _, conf in preds:
        if not 0.0 <= conf <= 1.0:
            raise ValueError("confidences must lie in [0, 1]")
    flags = _greedy_match(preds, truths, iou_threshold)
    return _ap_from_flags(flags, len(truths))


def _require_truth(samples: Sequence[SampleRecord]) -> None:
    missing = [s.sample_id for s in samples if s.truth is None]
    if missing:
        raise ValueError(f"samples lack ground truth: {missing[:5]}")


def mean_average_precision(
    samples: Sequence[SampleRecord], space: ClassSpace, iou_threshold: float = 0.5
) -> float:
    """Mean over detector classes of pooled AP across the sample set.

    Matching is per sample; (confidence, flag) pairs are pooled per class.
    Classes without any ground-truth instance are excluded from the mean.
    Ties across samples order by (sample_id, prediction index).
    """
    _require_truth(samples)
    n_det = space.n_det
    pooled: dict[int, list[tuple[float, str, int, bool]]] = {k: [] for k in range(n_det)}
    truth_counts = [0] * n_det
    total_preds = 0
    for rec in samples:
        for k in range(n_det):
            preds = [
                (det.box, det.confidence)
                for det in rec.detections
                if det.class_index == k
            ]
            truths = [box for box, cls in rec.truth.boxes if cls == k]
            truth_counts[k] += len(truths)
            total_preds += len(preds)
            flags = _greedy_match(preds, truths, iou_threshold)
            confs = sorted((c for _, c in preds), reverse=True)
            for idx, (conf, flag) in enumerate(zip(confs, flags)):
                pooled[k].append((conf, rec.sample_id, idx, flag))
    aps = []
    for k in range(n_det):
        if truth_counts[k] == 0:
            continue
        entries = sorted(pooled[k], key=lambda e: (-e[0], e[1], e[2]))
        aps.append(_ap_from_flags([e[3] for e in entries], truth_counts[k]))
    if not aps:
        return 1.0 if total_preds == 0 else 0.0
    return float(np.mean(aps))


def mean_iou(samples: Sequence[SampleRecord], space: ClassSpace) -> float:
    """Mean IoU of predicted argmax label maps against ground truth,
    confusion counts pooled across the set, averaged over classes present
    in the ground truth."""
    _require_truth(samples)
    n = space.n_seg
    confusion = np.zeros((n, n), dtype=np.int64)
    for rec in samples:
        pred = argmax_label(rec.seg).ravel().astype(np.int64)
        gt = rec.truth.label_map.ravel().astype(np.int64)
        if pred.size != gt.size:
            raise ValueError(f"{rec.sample_id}: prediction and truth sizes differ")
        confusion += np.bincount(gt * n + pred, minlength=n * n).reshape(n, n)
    gt_totals = confusion.sum(axis=1)
    pred_totals = confusion.sum(axis=0)
    ious = []
    for c in range(n):
        if gt_totals[c] == 0:
            continue
        tp = confusion[c, c]
        union = gt_totals[c] + pred_totals[c] - tp
        ious.append(tp / union)
    if not ious:
        raise ValueError("no classes present in ground truth")
    return float(np.mean(ious))


def mdsq(map: float, miou: float, map_fully: float, miou_fully: float) -> float:
    """Detection and segmentation quality relative to the fully-trained
    reference: the mean of the two normalized metrics."""
    if map_fully <= 0.0 or miou_fully <= 0.0:
        raise ValueError("fully-trained normalizers must be positive")
    return (map / map_fully + miou / miou_fully) / 2.0


def build_report(map: float, miou: float, map_fully: float, miou_fully: float) -> MetricReport:
    return MetricReport(
        map=map,
        miou=miou,
        mdsq=mdsq(map, miou, map_fully, miou_fully),
        map_fully=map_fully,
        miou_fully=miou_fully,
    )
