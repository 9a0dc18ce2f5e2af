"""Shared fixtures and independent brute-force oracles.

The oracle functions here are deliberately plain Python loops so they stay
independent of the vectorized/compiled implementations they check.
"""
from __future__ import annotations

import math

import numpy as np
import pytest

from crosstask.domain import (
    Box,
    ClassDistribution,
    ClassSpace,
    DetectionBox,
    GroundTruth,
    ProbabilityMap,
    SampleRecord,
)


@pytest.fixture
def space3() -> ClassSpace:
    """Two detectable classes plus one background class."""
    return ClassSpace(("car", "truck", "road"), (0, 1))


@pytest.fixture
def space4() -> ClassSpace:
    """car/truck detectable, road/sky background."""
    return ClassSpace(("car", "truck", "road", "sky"), (0, 1))


def one_hot_map(labels: np.ndarray, n_classes: int) -> ProbabilityMap:
    labels = np.asarray(labels)
    h, w = labels.shape
    data = np.zeros((n_classes, h, w), dtype=np.float32)
    rows, cols = np.indices((h, w))
    data[labels, rows, cols] = 1.0
    return ProbabilityMap(height=h, width=w, channels=n_classes, data=data)


def peaked_map(labels: np.ndarray, n_classes: int, peak: float = 0.9) -> ProbabilityMap:
    labels = np.asarray(labels)
    h, w = labels.shape
    rest = (1.0 - peak) / (n_classes - 1)
    data = np.full((n_classes, h, w), rest, dtype=np.float32)
    rows, cols = np.indices((h, w))
    data[labels, rows, cols] = peak
    return ProbabilityMap(height=h, width=w, channels=n_classes, data=data)


def random_prob_map(rng: np.random.Generator, h: int, w: int, c: int) -> ProbabilityMap:
    raw = rng.random((c, h, w))
    raw /= raw.sum(axis=0, keepdims=True)
    return ProbabilityMap(height=h, width=w, channels=c, data=raw.astype(np.float32))


def simple_record(
    space: ClassSpace,
    labels: np.ndarray,
    detections: list[DetectionBox] | None = None,
    truth_boxes: list[tuple[Box, int]] | None = None,
    sample_id: str = "s0",
    peak: float = 0.9,
) -> SampleRecord:
    labels = np.asarray(labels, dtype=np.int32)
    h, w = labels.shape
    truth = None
    if truth_boxes is not None:
        truth = GroundTruth(boxes=truth_boxes, label_map=labels)
    return SampleRecord(
        sample_id=sample_id,
        height=h,
        width=w,
        detections=detections or [],
        seg=peaked_map(labels, space.n_seg, peak),
        truth=truth,
    )


def det(x0, y0, x1, y1, conf, dist) -> DetectionBox:
    return DetectionBox(
        box=Box(float(x0), float(y0), float(x1), float(y1)),
        confidence=float(conf),
        dist=ClassDistribution(np.asarray(dist, dtype=np.float64)),
    )


# ---------------------------------------------------------------------------
# brute-force oracles


def bf_loc(mask_bits: np.ndarray, labels: np.ndarray, cls: int) -> float:
    n = 0
    match = 0
    for i in range(mask_bits.shape[0]):
        for j in range(mask_bits.shape[1]):
            if mask_bits[i][j]:
                n += 1
                if labels[i][j] == cls:
                    match += 1
    return 1.0 if n == 0 else 1.0 - match / n


def bf_kl(p, q, eps: float) -> float:
    total = 0.0
    for pk, qk in zip(p, q):
        total += pk * (math.log(max(pk, eps)) - math.log(max(qk, eps)))
    return total


def bf_cls(mask_bits: np.ndarray, seg_data: np.ndarray, tilde: np.ndarray, eps: float) -> float:
    n = 0
    total = 0.0
    for i in range(mask_bits.shape[0]):
        for j in range(mask_bits.shape[1]):
            if mask_bits[i][j]:
                n += 1
                p = [float(seg_data[k][i][j]) for k in range(seg_data.shape[0])]
                q = [float(v) for v in tilde]
                total += bf_kl(p, q, eps) + bf_kl(q, p, eps)
    return 0.0 if n == 0 else total / (2.0 * n)


def bf_seg(mask_bits: np.ndarray, labels: np.ndarray, det_indices) -> float:
    n = 0
    hits = 0
    det_indices = set(det_indices)
    for i in range(mask_bits.shape[0]):
        for j in range(mask_bits.shape[1]):
            if mask_bits[i][j]:
                n += 1
                if int(labels[i][j]) in det_indices:
                    hits += 1
    return 0.0 if n == 0 else hits / n


def oracle_greedy_match(preds, truths, thr, iou_fn):
    """Independent greedy matcher: descending confidence, ascending index on
    ties; best-IoU unmatched truth wins."""
    order = sorted(range(len(preds)), key=lambda i: (-preds[i][1], i))
    taken = [False] * len(truths)
    flags = []
    for i in order:
        best_j, best_iou = -1, 0.0
        for j, t in enumerate(truths):
            if taken[j]:
                continue
            iou = iou_fn(preds[i][0], t)
            if iou > best_iou:
                best_j, best_iou = j, iou
        if best_j >= 0 and best_iou >= thr:
            taken[best_j] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags


def oracle_ap_by_cutoffs(preds, truths, thr, iou_fn):
    """Enumerate every distinct confidence cutoff, evaluate each PR point
    from scratch, integrate with all-point interpolation."""
    if not truths:
        return 1.0 if not preds else 0.0
    if not preds:
        return 0.0
    cutoffs = sorted({c for _, c in preds}, reverse=True)
    points = []
    for cut in cutoffs:
        keep = [(b, c) for b, c in preds if c >= cut]
        flags = oracle_greedy_match(keep, truths, thr, iou_fn)
        tp = sum(flags)
        points.append((tp / len(truths), tp / len(keep)))
    ap = 0.0
    prev_recall = 0.0
    for i, (recall, _) in enumerate(points):
        envelope = max(p for _, p in points[i:])
        ap += (recall - prev_recall) * envelope
        prev_recall = recall
    return ap


def random_ap_instance(rng, max_boxes=5):
    """Random single-class AP instance with distinct confidences."""
    n_truth = int(rng.integers(0, max_boxes + 1))
    n_pred = int(rng.integers(0, max_boxes + 1))
    truths = []
    for _ in range(n_truth):
        x0, y0 = rng.uniform(0, 20, 2)
        truths.append(Box(x0, y0, x0 + rng.uniform(2, 8), y0 + rng.uniform(2, 8)))
    confs = rng.permutation(np.linspace(0.05, 0.95, 12))[:n_pred]
    preds = []
    for c in confs:
        if truths and rng.random() < 0.6:
            base = truths[int(rng.integers(0, n_truth))]
            dx, dy = rng.uniform(-2, 2, 2)
            preds.append(
                (Box(base.x_min + dx + 2, base.y_min + dy + 2,
                     base.x_max + dx + 2, base.y_max + dy + 2), float(c))
            )
        else:
            x0, y0 = rng.uniform(0, 20, 2)
            preds.append(
                (Box(x0, y0, x0 + rng.uniform(2, 8), y0 + rng.uniform(2, 8)), float(c))
            )
    return preds, truths


def spearman(x, y) -> float:
    """Rank correlation with average ranks on ties; plain-Python oracle."""

    def ranks(values):
        order = sorted(range(len(values)), key=lambda i: values[i])
        out = [0.0] * len(values)
        i = 0
        while i < len(order):
            j = i
            while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
                j += 1
            avg = (i + j) / 2.0 + 1.0
            for k in range(i, j + 1):
                out[order[k]] = avg
            i = j + 1
        return out

    rx, ry = ranks(list(x)), ranks(list(y))
    n = len(rx)
    mean_x = sum(rx) / n
    mean_y = sum(ry) / n
    cov = sum((a - mean_x) * (b - mean_y) for a, b in zip(rx, ry))
    var_x = sum((a - mean_x) ** 2 for a in rx)
    var_y = sum((b - mean_y) ** 2 for b in ry)
    return cov / math.sqrt(var_x * var_y)
