"""Cross-task inconsistency scores between detection and segmentation.

Three per-sample signals, all oriented so that higher means more
inconsistent (more interesting to annotate):

- localization: fraction of BoxMask pixels whose segmentation argmax does
  NOT agree with the detected class (one minus the agreement rate);
- classification: symmetric KL divergence between the lifted detector
  class distribution and the segmentation distribution, averaged over
  BoxMask pixels;
- segmentation: fraction of pixels outside every BoxMask that are
  nevertheless labeled with a detectable class.

The per-box localization and classification scores are summed, the
maximum over boxes is added to the segmentation score, and that single
number ranks samples for annotation. All three signals are normalized by
the pixel count of their support, which makes them invariant under
integer upsampling of the inputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .boxmask import ScoringConfig, combine_boxmasks, generate_boxmask
from .domain import (
    ClassDistribution,
    ClassSpace,
    ProbabilityMap,
    SampleRecord,
    argmax_label,
    transform_class_distribution,
)
from .maskops import BinaryMask, count_ones

__all__ = [
    "BoxScore",
    "ScoreBreakdown",
    "loc_inconsistency",
    "cls_inconsistency",
    "seg_inconsistency",
    "combined_score",
    "score_sample",
]


@dataclass(frozen=True)
class BoxScore:
    """Scores of a single detection: ``s_box = s_loc + s_cls``."""

    det_index: int
    s_loc: float
    s_cls: float

    @property
    def s_box(self) -> float:
        return self.s_loc + self.s_cls


@dataclass(frozen=True)
class ScoreBreakdown:
    """Full per-sample scoring result."""

    per_box: tuple[BoxScore, ...]
    s_seg: float
    combined: float

    @property
    def max_s_box(self) -> float:
        return max((b.s_box for b in self.per_box), default=0.0)


def _check_label_dims(mask: BinaryMask, labels: np.ndarray) -> None:
    if labels.shape != (mask.height, mask.width):
        raise ValueError(
            f"label map shape {labels.shape} does not match mask "
            f"{mask.height}x{mask.width}"
        )


def loc_inconsistency(bm: BinaryMask, labels: np.ndarray, c: int) -> float:
    """Disagreement rate between the BoxMask and the segmentation argmax.

    Returns ``1 - (1/|BM|) * sum_{(i,j) in BM} [labels(i,j) == c]``. An
    empty BoxMask returns 1: the resegmenter found no pixels of the class
    where the detector fired, which is maximal disagreement.
    """
    _check_label_dims(bm, labels)
    n = count_ones(bm)
    if n == 0:
        return 1.0
    labels = np.ascontiguousarray(labels, dtype=np.int32)
    match = _kernels.count_equal_where(labels, bm.as_uint8(), int(c))
    return 1.0 - match / n


def cls_inconsistency(
    bm: BinaryMask, seg: ProbabilityMap, tilde_p: ClassDistribution, eps: float = 1e-6
) -> float:
    """Symmetric KL divergence between each BoxMask pixel's segmentation
    distribution and the lifted detector distribution, natural log,
    averaged with the ``1/(2|BM|)`` normalizer.

    Probabilities are floored at ``eps`` inside the logs so the value stays
    finite on exact zeros. Symmetric in the two distributions at every
    pixel by construction. An empty BoxMask returns 0.
    """
    if (seg.height, seg.width) != (bm.height, bm.width):
        raise ValueError(
            f"seg map {seg.height }x{seg.width} does not match mask "
            f"{bm.height}x{bm.width}"
        )
    if len(tilde_p) != seg.channels:
        raise ValueError(
            f"distribution has {len(tilde_p)} entries, seg map has {seg.channels} channels"
        )
    n = count_ones(bm)
    if n == 0:
        return 0.0
    total = _kernels.sym_kl_sum_where(seg.data, bm.as_uint8(), tilde_p.probs, float(eps))
    return total / (2.0 * n)


def seg_inconsistency(bm_prime: BinaryMask, labels: np.ndarray, space: ClassSpace) -> float:
    """Fraction of pixels outside all BoxMasks labeled with a detectable
    class. An empty complement (boxes covering the image) returns 0."""
    _check_label_dims(bm_prime, labels)
    n = count_ones(bm_prime)
    if n == 0:
        return 0.0
    labels = np.ascontiguousarray(labels, dtype=np.int32)
    hits = _kernels.count_member_where(labels, bm_prime.as_uint8(), space.det_membership())
    return hits / n


def combined_score(s_seg: float, box_scores: list[float]) -> float:
    """Selection score: ``s_seg`` plus the maximum per-box score (0 when
    there are no detections)."""
    return s_seg + max(box_scores, default=0.0)


def score_sample(
    sample: SampleRecord, space: ClassSpace, config: ScoringConfig
) -> ScoreBreakdown:
    """Score one sample: per-detection BoxMask scores, the complement
    segmentation score, and their combination.

    Pure and deterministic; the BoxMask fold runs in detection order so
    results are byte-stable regardless of host parallelism.
    """
    labels = argmax_label(sample.seg)
    per_box: list[BoxScore] = []
    masks = []
    for i, det in enumerate(sample.detections):
        bm = generate_boxmask(det, sample, space, config)
        seg_class = space.seg_index(det.class_index)
        s_loc = loc_inconsistency(bm, labels, seg_class)
        tilde_p = transform_class_distribution(det.dist, space)
        s_cls = cls_inconsistency(bm, sample.seg, tilde_p, eps=config.epsilon)
        per_box.append(BoxScore(det_index=i, s_loc=s_loc, s_cls=s_cls))
        masks.append(bm)
    _, bm_prime = combine_boxmasks(masks, (sample.height, sample.width))
    s_seg = seg_inconsistency(bm_prime, labels, space)
    combined = combined_score(s_seg, [b.s_box for b in per_box])
    return ScoreBreakdown(per_box=tuple(per_box), s_seg=s_seg, combined=combined)
