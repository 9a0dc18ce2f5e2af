"""BoxMask generation: crop around a detection, re-segment the crop,
threshold the detected class's probability, paste back into the image frame.

The re-segmentation step is pluggable. The default ``identity`` provider
slices the sample's full-image probability map (no new inference, no extra
parameters); the ``synthetic`` provider derives a map from ground truth
perturbed at a configurable noise level, for simulation and testing.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .domain import Box, ClassSpace, DetectionBox, ProbabilityMap, SampleRecord
from .maskops import BinaryMask, invert_mask, paste_into_frame, pixelwise_max

__all__ = [
    "CropRegion",
    "ResegmenterSpec",
    "ScoringConfig",
    "expand_crop_region",
    "resegment",
    "generate_boxmask",
    "combine_boxmasks",
]


@dataclass(frozen=True)
class CropRegion:
    """Integer-aligned crop window in the image frame. Contains the
    originating detection box and is clamped to the image bounds."""

    box: Box
    margin_fraction: float

    @property
    def x0(self) -> int:
        return int(self.box.x_min)

    @property
    def y0(self) -> int:
        return int(self.box.y_min)

    @property
    def x1(self) -> int:
        return int(self.box.x_max)

    @property
    def y1(self) -> int:
        return int(self.box.y_max)

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0


@dataclass(frozen=True)
class ResegmenterSpec:
    """Provider of crop probability maps.

    ``identity`` takes no parameters. ``synthetic`` requires a noise level
    in [0, 1] and a seed, and needs ground truth on the sample.
    """

    kind: str
    noise: Optional[float] = None
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind == "identity":
            if self.noise is not None or self.seed is not None:
                raise ValueError("identity resegmenter takes no parameters")
        elif self.kind == "synthetic":
            if self.noise is None or not 0.0 <= self.noise <= 1.0:
                raise ValueError("synthetic resegmenter needs a noise level in [0, 1]")
            if self.seed is None:
                raise ValueError("synthetic resegmenter needs a seed")
        else:
            raise ValueError(f"unknown resegmenter kind {self.kind!r}")

    @classmethod
    def identity(cls) -> "ResegmenterSpec":
        return cls(kind="identity")

    @classmethod
    def synthetic(cls, noise: float, seed: int) -> "ResegmenterSpec":
        return cls(kind="synthetic", noise=float(noise), seed=int(seed))


_IDENTITY = ResegmenterSpec(kind="identity")


@dataclass(frozen=True)
class ScoringConfig:
    """Knobs of the scoring pipeline.

    ``tau`` is the BoxMask probability threshold, ``epsilon`` the probability
    floor shared with the class-space transform, ``margin_fraction`` the crop
    expansion per side relative to the box size.
    """

    tau: float = 0.3
    epsilon: float = 1e-6
    margin_fraction: float = 0.1
    resegmenter: ResegmenterSpec = _IDENTITY

    def __post_init__(self) -> None:
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.margin_fraction < 0.0:
            raise ValueError("margin_fraction must be non-negative")


def expand_crop_region(
    det: Box, margin_fraction: float, image_dims: tuple[int, int]
) -> CropRegion:
    """Expand each side of ``det`` by ``margin_fraction`` times its length,
    round outward to integer pixels, clamp to ``image_dims=(H, W)``."""
    height, width = int(image_dims[0]), int(image_dims[1])
    mx = margin_fraction * det.width
    my = margin_fraction * det.height
    x0 = max(0, math.floor(det.x_min - mx))
    y0 = max(0, math.floor(det.y_min - my))
    x1 = min(width, math.ceil(det.x_max + mx))
    y1 = min(height, math.ceil(det.y_max + my))
    return CropRegion(Box(float(x0), float(y0), float(x1), float(y1)), margin_fraction)


def _stable_id_hash(sample_id: str) -> int:
    return zlib.crc32(sample_id.encode("utf-8"))


def resegment(
    region: CropRegion, sample: SampleRecord, spec: ResegmenterSpec
) -> ProbabilityMap:
    """Probability map over ``region`` from the configured provider.

    ``identity`` returns the slice of the sample's full-image map.
    ``synthetic`` builds a map from the ground-truth labels in the region,
    blended with seeded per-pixel noise; deterministic per
    (sample_id, region, seed) and exactly the one-hot truth at noise 0.
    """
    if not (
        0 <= region.y0 < region.y1 <= sample.height
        and 0 <= region.x0 < region.x1 <= sample.width
    ):
        raise ValueError(
            f"crop region ({region.x0}, {region.y0}, {region.x1}, {region.y1}) outside "
            f"sample bounds {sample.width}x{sample.height}"
        )
    if spec.kind == "identity":
        return sample.seg.region(region.y0, region.y1, region.x0, region.x1)

    # synthetic
    if sample.truth is None:
        raise ValueError("synthetic resegmenter requires ground truth on the sample")
    labels = sample.truth.label_map[region.y0 : region.y1, region.x0 : region.x1]
    n_classes = sample.seg.channels
    h, w = labels.shape
    one_hot = np.zeros((n_classes, h, w), dtype=np.float64)
    rows, cols = np.indices((h, w))
    one_hot[labels, rows, cols] = 1.0
    noise = float(spec.noise)
    if noise == 0.0:
        return ProbabilityMap.from_array(one_hot)
    rng = np.random.default_rng(
        np.random.SeedSequence(
            [int(spec.seed) & 0xFFFFFFFF, _stable_id_hash(sample.sample_id),
             region.x0, region.y0, region.x1, region.y1]
        )
    )
    raw = rng.random((n_classes, h, w))
    raw /= raw.sum(axis=0, keepdims=True)
    blended = (1.0 - noise) * one_hot + noise * raw
    return ProbabilityMap.from_array(blended)


def generate_boxmask(
    det: DetectionBox, sample: SampleRecord, space: ClassSpace, config: ScoringConfig
) -> BinaryMask:
    """Image-frame binary mask: set exactly where the resegmented crop's
    probability for the detected class exceeds ``config.tau``."""
    region = expand_crop_region(det.box, config.margin_fraction, (sample.height, sample.width))
    crop_map = resegment(region, sample, config.resegmenter)
    seg_class = space.seg_index(det.class_index)
    local = BinaryMask.from_array(crop_map.data[seg_class] > config.tau)
    return paste_into_frame(local, (region.y0, region.x0), (sample.height, sample.width))


def combine_boxmasks(
    masks: list[BinaryMask], image_dims: tuple[int, int]
) -> tuple[BinaryMask, BinaryMask]:
    """Fold masks with the pixel-wise maximum and return (combined, inverse).

    The empty fold is the all-zero mask, so with no detections the inverse
    covers the whole image. The two outputs always partition the frame.
    """
    height, width = int(image_dims[0]), int(image_dims[1])
    combined = BinaryMask.zeros(height, width)
    for m in masks:
        combined = pixelwise_max(combined, m)
    return combined, invert_mask(combined)
