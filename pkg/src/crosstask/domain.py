"""Core data model: class spaces, detections, probability maps, samples.

Conventions used throughout the package:

- images are indexed ``(row, col)`` with origin top-left; shapes are ``(H, W)``
- boxes are continuous ``(x_min, y_min, x_max, y_max)`` with x horizontal
- probability maps are channel-major float32 arrays of shape ``(C, H, W)``
- label maps are int32 arrays of shape ``(H, W)`` holding segmentation
  class indices
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "PROB_SUM_TOL",
    "ClassSpace",
    "Box",
    "ClassDistribution",
    "DetectionBox",
    "ProbabilityMap",
    "GroundTruth",
    "SampleRecord",
    "validate_sample",
    "transform_class_distribution",
    "argmax_label",
]

# Tolerance on per-pixel / per-vector probability sums; loose enough to
# admit quantized upstream exports.
PROB_SUM_TOL = 1e-4


@dataclass(frozen=True)
class ClassSpace:
    """Segmentation class list plus the subset the detector is trained on.

    ``det_class_indices[k]`` is the position of detector class ``k`` inside
    ``seg_classes``. ``epsilon`` is the negligible probability assigned to
    non-detector classes when a detector class distribution is lifted into
    the segmentation class space (it also floors probabilities inside KL
    terms so logs stay finite).
    """

    seg_classes: tuple[str, ...]
    det_class_indices: tuple[int, ...]
    epsilon: float = 1e-6

    def __post_init__(self) -> None:
        object.__setattr__(self, "seg_classes", tuple(self.seg_classes))
        object.__setattr__(
            self, "det_class_indices", tuple(int(i) for i in self.det_class_indices)
        )
        if len(self.seg_classes) < 2:
            raise ValueError("class space needs at least two segmentation classes")
        if len(set(self.seg_classes)) != len(self.seg_classes):
            raise ValueError("segmentation class names must be unique")
        if not self.det_class_indices:
            raise ValueError("detector class subset must be non-empty")
        pairs = zip(self.det_class_indices, self.det_class_indices[1:])
        if any(b <= a for a, b in pairs):
            raise ValueError("det_class_indices must be strictly increasing")
        if self.det_class_indices[0] < 0 or self.det_class_indices[-1] >= len(self.seg_classes):
            raise ValueError("det_class_indices must index into seg_classes")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")

    @property
    def n_seg(self) -> int:
        return len(self.seg_classes)

    @property
    def n_det(self) -> int:
        return len(self.det_class_indices)

    @property
    def det_classes(self) -> tuple[str, ...]:
        return tuple(self.seg_classes[i] for i in self.det_class_indices)

    def seg_index(self, det_index: int) -> int:
        """Segmentation class index of detector class ``det_index``."""
        return self.det_class_indices[det_index]

    def det_membership(self) -> np.ndarray:
        """uint8 lookup table over seg classes: 1 where the class is detectable."""
        lut = np.zeros(self.n_seg, dtype=np.uint8)
        lut[list(self.det_class_indices)] = 1
        return lut


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in continuous pixel coordinates, origin top-left."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("box must have positive extent")
        if self.x_min < 0 or self.y_min < 0:
            raise ValueError("box coordinates must be non-negative")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(eq=False)
class ClassDistribution:
    """Probability vector over a stated class list."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(np.asarray(self.probs, dtype=np.float64))
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("distribution must be a non-empty 1-D vector")
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(float(arr.sum()) - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"probabilities must sum to 1 within {PROB_SUM_TOL}")
        self.probs = arr

    def __len__(self) -> int:
        return int(self.probs.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ClassDistribution):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    @property
    def argmax(self) -> int:
        # np.argmax resolves ties toward the lowest index, the package-wide rule
        return int(np.argmax(self.probs))


@dataclass(eq=False)
class DetectionBox:
    """One detector output: box, confidence, class distribution over C_det."""

    box: Box
    confidence: float
    dist: ClassDistribution

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")

    @property
    def class_index(self) -> int:
        """Detector class index (argmax of the distribution)."""
        return self.dist.argmax


@dataclass(eq=False)
class ProbabilityMap:
    """Per-pixel class probabilities, channel-major ``(C, H, W)`` float32."""

    height: int
    width: int
    channels: int
    data: np.ndarray

    def __post_init__(self) -> None:
        self.data = np.ascontiguousarray(np.asarray(self.data, dtype=np.float32))
        if min(self.height, self.width, self.channels) <= 0:
            raise ValueError("dimensions must be positive")
        if self.data.shape != (self.channels, self.height, self.width):
            raise ValueError(
                f"data shape {self.data.shape} does not match "
                f"(channels, height, width)=({self.channels}, {self.height}, {self.width})"
            )

    @classmethod
    def from_array(cls, data: np.ndarray) -> "ProbabilityMap":
        data = np.asarray(data, dtype=np.float32)
        if data.ndim != 3:
            raise ValueError("expected a (C, H, W) array")
        c, h, w = data.shape
        return cls(height=h, width=w, channels=c, data=data)

    def region(self, y0: int, y1: int, x0: int, x1: int) -> "ProbabilityMap":
        """Copy of the map over rows ``y0:y1`` and columns ``x0:x1``."""
        if not (0 <= y0 < y1 <= self.height and 0 <= x0 < x1 <= self.width):
            raise ValueError("region outside map bounds")
        return ProbabilityMap.from_array(self.data[:, y0:y1, x0:x1].copy())

    def validate(self) -> list[str]:
        """Numeric invariant check; returns a list of violation messages."""
        issues = []
        if np.any(self.data < 0.0) or np.any(self.data > 1.0):
            issues.append("probability values outside [0, 1]")
        sums = self.data.sum(axis=0, dtype=np.float64)
        worst = float(np.max(np.abs(sums - 1.0)))
        if worst > PROB_SUM_TOL:
            issues.append(
                f"per-pixel channel sums deviate from 1 by up to {worst:.3g} "
                f"(tolerance {PROB_SUM_TOL})"
            )
        return issues

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProbabilityMap):
            return NotImplemented
        return (
            (self.height, self.width, self.channels)
            == (other.height, other.width, other.channels)
            and np.array_equal(self.data, other.data)
        )


@dataclass(eq=False)
class GroundTruth:
    """Reference annotations: boxes with detector class indices, label map."""

    boxes: list[tuple[Box, int]]
    label_map: np.ndarray  # int32, (H, W)

    def __post_init__(self) -> None:
        self.boxes = [(box, int(cls)) for box, cls in self.boxes]
        self.label_map = np.ascontiguousarray(np.asarray(self.label_map, dtype=np.int32))
        if self.label_map.ndim != 2:
            raise ValueError("label_map must be 2-D")


@dataclass(eq=False)
class SampleRecord:
    """One image's predictions plus optional ground truth.

    Cross-field invariants (dimensions, bounds, class counts) are checked by
    :func:`validate_sample`, not at construction, so that malformed inputs
    can be represented and reported instead of crashing the loaders.
    """

    sample_id: str
    height: int
    width: int
    detections: list[DetectionBox]
    seg: ProbabilityMap
    truth: Optional[GroundTruth] = None
    image_ref: Optional[str] = None


def validate_sample(record: SampleRecord, space: ClassSpace) -> list[str]:
    """Check every cross-field invariant of ``record`` against ``space``.

    Returns one message per violation (empty list means valid). Pure: the
    record is never mutated, and repeated calls return the same report.
    """
    sid = record.sample_id
    issues: list[str] = []
    if record.height <= 0 or record.width <= 0:
        issues.append(f"{sid}: image dimensions must be positive")
        return issues

    seg = record.seg
    if (seg.height, seg.width) != (record.height, record.width):
        issues.append(
            f"{sid}: seg map is {seg.height}x{seg.width} but the sample "
            f"declares {record.height}x{record.width}"
        )
    if seg.channels != space.n_seg:
        issues.append(
            f"{sid}: seg map has {seg.channels} channels, class space has {space.n_seg}"
        )
    issues.extend(f"{sid}: seg: {msg}" for msg in seg.validate())

    for i, det in enumerate(record.detections):
        b = det.box
        if b.x_max > record.width or b.y_max > record.height:
            issues.append(
                f"{sid}: detection {i} box ({b.x_min}, {b.y_min}, {b.x_max}, {b.y_max}) "
                f"exceeds image bounds {record.width}x{record.height}"
            )
        if len(det.dist) != space.n_det:
            issues.append(
                f"{sid}: detection {i} distribution has {len(det.dist)} entries, "
                f"expected {space.n_det}"
            )

    truth = record.truth
    if truth is not None:
        if truth.label_map.shape != (record.height, record.width):
            issues.append(
                f"{sid}: truth label map shape {truth.label_map.shape} does not "
                f"match image dimensions ({record.height}, {record.width})"
            )
        if truth.label_map.size and (
            truth.label_map.min() < 0 or truth.label_map.max() >= space.n_seg
        ):
            issues.append(f"{sid}: truth label map holds indices outside the class space")
        for i, (box, cls) in enumerate(truth.boxes):
            if not 0 <= cls < space.n_det:
                issues.append(f"{sid}: truth box {i} class index {cls} outside C_det")
            if box.x_max > record.width or box.y_max > record.height:
                issues.append(f"{sid}: truth box {i} exceeds image bounds")
    return issues


def transform_class_distribution(dist: ClassDistribution, space: ClassSpace) -> ClassDistribution:
    """Lift a detector class distribution into the segmentation class space.

    Detector-class positions carry the original probabilities; every other
    position receives ``space.epsilon``; the result is renormalized. The
    argmax class is preserved for any valid input (the detector's maximal
    probability is at least ``1/n_det``, far above epsilon).
    """
    if len(dist) != space.n_det:
        raise ValueError(
            f"distribution has {len(dist)} entries, class space expects {space.n_det}"
        )
    out = np.full(space.n_seg, space.epsilon, dtype=np.float64)
    out[list(space.det_class_indices)] = dist.probs
    out /= out.sum()
    return ClassDistribution(out)


def argmax_label(seg: ProbabilityMap) -> np.ndarray:
    """Per-pixel index of the maximal channel, ties toward the lowest index."""
    return np.argmax(seg.data, axis=0).astype(np.int32)
