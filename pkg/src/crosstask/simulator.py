"""Desk-scale stand-in for the training loop: synthetic scenes with exact
ground truth, a corruptible predictor, pool management, selection
strategies, and the cycle-based annotation protocol.

The predictor's error on a scene is ``difficulty * (1 - labeled_fraction)``
where ``labeled_fraction`` is the model quality in [0, 1]. The simulation
passes the difficulty-weighted coverage of the labeled pool as that
quality, so labeling hard samples improves the model faster than labeling
easy ones; this is the signal a selection strategy can exploit. Quality is
memoryless: it depends only on the current labeled set, never on the order
samples were added.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .boxmask import ScoringConfig
from .domain import Box, ClassSpace, ClassDistribution, DetectionBox, GroundTruth, ProbabilityMap, SampleRecord
from .inconsistency import score_sample
from .metrics import MetricReport, build_report, mean_average_precision, mean_iou

__all__ = [
    "DEFAULT_SPACE",
    "SceneObject",
    "SyntheticScene",
    "CorruptionParams",
    "PoolState",
    "StrategyKind",
    "SimProtocol",
    "CycleReport",
    "generate_world",
    "effective_noise",
    "predict_with_noise",
    "select_batch",
    "run_simulation",
]

# Street-scene flavored default class list; the last three are detectable.
DEFAULT_SPACE = ClassSpace(
    seg_classes=("road", "sidewalk", "vegetation", "sky", "car", "truck", "pedestrian"),
    det_class_indices=(4, 5, 6),
)

# Morphological corruption never moves a boundary by more than this many
# pixels at full noise.
MAX_MORPH_PX = 3

# Mixing floor/slope of the softened probability maps; at zero noise the
# argmax still equals the clean labels by a wide margin.
SOFT_BASE = 0.04
SOFT_SLOPE = 0.65

# Small constant difficulty-weight floor so easy samples still contribute
# some training signal.
WEIGHT_FLOOR = 0.1


def _uint(seed: int) -> int:
    return int(seed) & 0xFFFFFFFFFFFFFFFF


def _id_hash(sample_id: str) -> int:
    return zlib.crc32(sample_id.encode("utf-8"))


@dataclass(frozen=True)
class SceneObject:
    """One placed object: raster patch offset plus class indices."""

    shape: str  # "rect" | "ellipse"
    x0: int
    y0: int
    x1: int
    y1: int
    det_class: int
    seg_class: int


@dataclass(eq=False)
class SyntheticScene:
    """Generated scene with exact, geometry-derived ground truth.

    ``label_map`` is the full render, ``bg_label_map`` the same scene
    without objects (used to backfill eroded pixels during corruption).
    Ground-truth boxes are tight around each object's painted pixels.
    """

    sample_id: str
    height: int
    width: int
    objects: tuple[SceneObject, ...]
    difficulty: float
    space: ClassSpace
    label_map: np.ndarray
    bg_label_map: np.ndarray
    gt_boxes: tuple[tuple[Box, int], ...]


@dataclass(frozen=True)
class CorruptionParams:
    """Per-channel corruption magnitudes, each in [0, 1]; every channel is
    additionally scaled by the sample's effective noise level."""

    box_jitter: float = 0.3
    class_confusion: float = 0.3
    mask_erosion_dilation: float = 0.6
    drop_rate: float = 0.2
    spurious_rate: float = 0.2

    def __post_init__(self) -> None:
        for name in (
            "box_jitter",
            "class_confusion",
            "mask_erosion_dilation",
            "drop_rate",
            "spurious_rate",
        ):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class PoolState:
    """Labeled/unlabeled id partition plus selection history."""

    labeled_ids: tuple[str, ...]
    unlabeled_ids: tuple[str, ...]
    cycle: int = 0
    history: tuple[tuple[str, ...], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "labeled_ids", tuple(sorted(self.labeled_ids)))
        object.__setattr__(self, "unlabeled_ids", tuple(sorted(self.unlabeled_ids)))
        labeled, unlabeled = set(self.labeled_ids), set(self.unlabeled_ids)
        if len(labeled) != len(self.labeled_ids) or len(unlabeled) != len(self.unlabeled_ids):
            raise ValueError("duplicate ids in pool")
        if labeled & unlabeled:
            raise ValueError("labeled and unlabeled pools overlap")

    @property
    def corpus_size(self) -> int:
        return len(self.labeled_ids) + len(self.unlabeled_ids)

    def advance(self, selected: Sequence[str]) -> "PoolState":
        """Move ``selected`` from unlabeled to labeled and bump the cycle."""
        selected = list(selected)
        if len(set(selected)) != len(selected):
            raise ValueError("selection contains duplicates")
        unlabeled = set(self.unlabeled_ids)
        missing = [s for s in selected if s not in unlabeled]
        if missing:
            raise ValueError(f"selected ids not in the unlabeled pool: {missing[:5]}")
        return PoolState(
            labeled_ids=self.labeled_ids + tuple(selected),
            unlabeled_ids=tuple(unlabeled - set(selected)),
            cycle=self.cycle + 1,
            history=self.history + (tuple(selected),),
        )


@dataclass(frozen=True)
class StrategyKind:
    """Selection strategy: rank by the inconsistency score, or uniformly at
    random (seeded). New strategies plug in at :func:`select_batch` and
    :func:`run_simulation`."""

    kind: str
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("inconsistency", "random"):
            raise ValueError(f"unknown strategy {self.kind!r}")


@dataclass(frozen=True)
class SimProtocol:
    """Annotation protocol: initial labeled share, per-cycle budget share
    (both relative to the pool corpus, i.e. after the validation holdout),
    cycle count, and validation holdout share of the generated world."""

    init_fraction: float = 0.4
    budget_fraction: float = 0.10
    cycles: int = 6
    val_fraction: float = 0.2

    def __post_init__(self) -> None:
        if not 0.0 < self.init_fraction <= 1.0:
            raise ValueError("init_fraction must lie in (0, 1]")
        if not 0.0 <= self.budget_fraction <= 1.0:
            raise ValueError("budget_fraction must lie in [0, 1]")
        if self.cycles < 0:
            raise ValueError("cycles must be non-negative")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")
        total = self.init_fraction + self.cycles * self.budget_fraction
        if total > 1.0 + 1e-9:
            raise ValueError(
                f"protocol labels {total:.3f} of the pool; must not exceed 1"
            )


@dataclass(frozen=True)
class CycleReport:
    """One row of the simulation report."""

    cycle: int
    labeled_fraction: float
    strategy: str
    metrics: MetricReport


def _ellipse_patch(h: int, w: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    a, b = w / 2.0, h / 2.0
    return ((xx + 0.5 - w / 2.0) / a) ** 2 + ((yy + 0.5 - h / 2.0) / b) ** 2 <= 1.0


def generate_world(
    n_samples: int,
    space: ClassSpace = DEFAULT_SPACE,
    seed: int = 0,
    dims: tuple[int, int] = (64, 64),
    max_objects: int = 4,
) -> list[SyntheticScene]:
    """Deterministically generate ``n_samples`` scenes.

    Each scene gets banded background regions from the non-detectable
    classes, 1..max_objects non-overlapping rectangle/ellipse objects from
    the detectable classes, a difficulty drawn uniformly from [0, 1], and
    ground truth derived exactly from the painted pixels.
    """
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    height, width = int(dims[0]), int(dims[1])
    if min(height, width) < 16:
        raise ValueError("scene dimensions must be at least 16x16")
    bg_classes = [i for i in range(space.n_seg) if i not in space.det_class_indices]
    if not bg_classes:
        raise ValueError("world generation needs at least one non-detectable class")

    children = np.random.SeedSequence(_uint(seed)).spawn(n_samples)
    scenes: list[SyntheticScene] = []
    short = min(height, width)
    size_lo = max(4, round(0.12 * short))
    size_hi = max(size_lo + 2, round(0.30 * short))
    for index in range(n_samples):
        rng = np.random.default_rng(children[index])
        difficulty = float(rng.uniform(0.0, 1.0))

        # horizontal background bands
        n_bands = int(rng.integers(2, 4))
        cuts = np.sort(rng.choice(np.arange(height // 4, 3 * height // 4), size=n_bands - 1, replace=False))
        bounds = [0, *cuts.tolist(), height]
        bg = np.zeros((height, width), dtype=np.int32)
        prev = -1
        for b in range(n_bands):
            choices = [c for c in bg_classes if c != prev] or bg_classes
            cls = int(rng.choice(choices))
            bg[bounds[b] : bounds[b + 1], :] = cls
            prev = cls

        label_map = bg.copy()
        occupied = np.zeros((height, width), dtype=bool)
        objects: list[SceneObject] = []
        gt_boxes: list[tuple[Box, int]] = []
        n_objects = int(rng.integers(1, max_objects + 1))
        for _ in range(n_objects):
            for _attempt in range(20):
                w0 = int(rng.integers(size_lo, size_hi + 1))
                h0 = int(rng.integers(size_lo, size_hi + 1))
                x0 = int(rng.integers(0, width - w0 + 1))
                y0 = int(rng.integers(0, height - h0 + 1))
                shape = "rect" if rng.random() < 0.5 else "ellipse"
                patch = np.ones((h0, w0), dtype=bool) if shape == "rect" else _ellipse_patch(h0, w0)
                window = occupied[y0 : y0 + h0, x0 : x0 + w0]
                if np.any(window & patch):
                    continue
                det_class = int(rng.integers(0, space.n_det))
                seg_class = space.seg_index(det_class)
                label_map[y0 : y0 + h0, x0 : x0 + w0][patch] = seg_class
                occupied[y0 : y0 + h0, x0 : x0 + w0] |= patch
                rows = np.flatnonzero(patch.any(axis=1))
                cols = np.flatnonzero(patch.any(axis=0))
                box = Box(
                    float(x0 + cols[0]),
                    float(y0 + rows[0]),
                    float(x0 + cols[-1] + 1),
                    float(y0 + rows[-1] + 1),
                )
                objects.append(
                    SceneObject(shape, x0, y0, x0 + w0, y0 + h0, det_class, seg_class)
                )
                gt_boxes.append((box, det_class))
                break

        scenes.append(
            SyntheticScene(
                sample_id=f"scene_{index:05d}",
                height=height,
                width=width,
                objects=tuple(objects),
                difficulty=difficulty,
                space=space,
                label_map=label_map,
                bg_label_map=bg,
                gt_boxes=tuple(gt_boxes),
            )
        )
    return scenes


def effective_noise(scene: SyntheticScene, labeled_fraction: float) -> float:
    """Noise level actually applied to a scene's predictions."""
    return float(np.clip(scene.difficulty * (1.0 - labeled_fraction), 0.0, 1.0))


def _dilate_once(mask: np.ndarray) -> np.ndarray:
    out = mask.copy()
    out[1:, :] |= mask[:-1, :]
    out[:-1, :] |= mask[1:, :]
    out[:, 1:] |= mask[:, :-1]
    out[:, :-1] |= mask[:, 1:]
    return out


def _dilate(mask: np.ndarray, r: int) -> np.ndarray:
    for _ in range(r):
        mask = _dilate_once(mask)
    return mask


def _erode(mask: np.ndarray, r: int) -> np.ndarray:
    return ~_dilate(~mask, r) if r > 0 else mask


def _jitter_interval(
    lo: float, hi: float, span: float, amount: float, limit: float, rng: np.random.Generator
) -> tuple[float, float]:
    lo = lo + float(rng.uniform(-1.0, 1.0)) * amount * span
    hi = hi + float(rng.uniform(-1.0, 1.0)) * amount * span
    lo = min(max(0.0, lo), limit - 1.0)
    hi = max(min(limit, hi), lo + 1.0)
    return lo, hi


def _peaked_dist(n: int, peak: int, gamma: float) -> ClassDistribution:
    if n == 1:
        return ClassDistribution(np.array([1.0]))
    probs = np.full(n, gamma / (n - 1), dtype=np.float64)
    probs[peak] = 1.0 - gamma
    return ClassDistribution(probs)


def predict_with_noise(
    scene: SyntheticScene,
    labeled_fraction: float,
    params: CorruptionParams = CorruptionParams(),
    seed: int = 0,
) -> SampleRecord:
    """Simulated predictions for one scene at the given model quality.

    All corruption channels scale with
    ``effective_noise = difficulty * (1 - labeled_fraction)``; at zero
    effective noise the detections equal the ground-truth boxes and the
    probability map's argmax equals the label map. Deterministic per
    (sample_id, labeled_fraction, seed).
    """
    space = scene.space
    eff = effective_noise(scene, labeled_fraction)
    rng = np.random.default_rng(
        np.random.SeedSequence(
            [_uint(seed), _id_hash(scene.sample_id), int(round(labeled_fraction * 1e9))]
        )
    )
    n_det = space.n_det
    height, width = scene.height, scene.width

    detections: list[DetectionBox] = []
    for box, cls in scene.gt_boxes:
        if rng.random() < params.drop_rate * eff:
            continue
        amount = params.box_jitter * eff
        x0, x1 = _jitter_interval(box.x_min, box.x_max, box.width, amount, float(width), rng)
        y0, y1 = _jitter_interval(box.y_min, box.y_max, box.height, amount, float(height), rng)
        pred_cls = cls
        if n_det > 1 and rng.random() < params.class_confusion * eff:
            pred_cls = (cls + 1) % n_det
        # spread grows mostly deterministically with the noise level so the
        # classification signal tracks it tightly
        gamma = 0.05 + (0.35 + 0.1 * float(rng.random())) * eff
        confidence = 1.0 - eff * float(rng.uniform(0.0, 0.5))
        detections.append(
            DetectionBox(Box(x0, y0, x1, y1), confidence, _peaked_dist(n_det, pred_cls, gamma))
        )
    spurious_budget = 2
    while spurious_budget > 0 and rng.random() < params.spurious_rate * eff:
        spurious_budget -= 1
        w0 = int(rng.integers(4, max(6, width // 4)))
        h0 = int(rng.integers(4, max(6, height // 4)))
        x0 = int(rng.integers(0, width - w0 + 1))
        y0 = int(rng.integers(0, height - h0 + 1))
        cls = int(rng.integers(0, n_det))
        gamma = 0.05 + 0.45 * float(rng.random())
        confidence = float(rng.uniform(0.3, 0.9))
        detections.append(
            DetectionBox(
                Box(float(x0), float(y0), float(x0 + w0), float(y0 + h0)),
                confidence,
                _peaked_dist(n_det, cls, gamma),
            )
        )

    corrupted = scene.label_map.copy()
    for obj in scene.objects:
        current_class = obj.seg_class
        if n_det > 1 and rng.random() < params.class_confusion * eff * 0.8:
            current_class = space.seg_index((obj.det_class + 1) % n_det)
        radius = int(round(MAX_MORPH_PX * params.mask_erosion_dilation * eff * float(rng.random())))
        # work in a window padded by the radius so growth is not clipped
        wy0 = max(0, obj.y0 - radius)
        wy1 = min(height, obj.y1 + radius)
        wx0 = max(0, obj.x0 - radius)
        wx1 = min(width, obj.x1 + radius)
        window = (slice(wy0, wy1), slice(wx0, wx1))
        obj_mask = np.zeros((wy1 - wy0, wx1 - wx0), dtype=bool)
        local = scene.label_map[obj.y0 : obj.y1, obj.x0 : obj.x1] == obj.seg_class
        obj_mask[obj.y0 - wy0 : obj.y1 - wy0, obj.x0 - wx0 : obj.x1 - wx0] = local
        if radius > 0:
            if rng.random() < 0.5:
                grown = _dilate(obj_mask, radius)
                addable = grown & ~obj_mask & (scene.bg_label_map[window] == corrupted[window])
                corrupted[window][addable] = current_class
            else:
                kept = _erode(obj_mask, radius)
                removed = obj_mask & ~kept
                corrupted[window][removed] = scene.bg_label_map[window][removed]
                obj_mask = kept
        if current_class != obj.seg_class:
            corrupted[window][obj_mask] = current_class

    n_seg = space.n_seg
    one_hot = np.zeros((n_seg, height, width), dtype=np.float64)
    rows, cols = np.indices((height, width))
    one_hot[corrupted, rows, cols] = 1.0
    softness = min(0.9, SOFT_BASE + SOFT_SLOPE * eff)
    raw = rng.random((n_seg, height, width))
    raw /= raw.sum(axis=0, keepdims=True)
    probs = (1.0 - softness) * one_hot + softness * raw

    return SampleRecord(
        sample_id=scene.sample_id,
        height=height,
        width=width,
        detections=detections,
        seg=ProbabilityMap.from_array(probs),
        truth=GroundTruth(boxes=list(scene.gt_boxes), label_map=scene.label_map),
    )


def _uniform_for_id(seed: int, sample_id: str) -> float:
    rng = np.random.default_rng(np.random.SeedSequence([_uint(seed), _id_hash(sample_id)]))
    return float(rng.random())


def select_batch(
    scores: Sequence[tuple[str, float]], budget: int, strategy: StrategyKind
) -> list[str]:
    """Pick ``budget`` sample ids for annotation.

    The inconsistency strategy takes the highest-scored ids; the random
    strategy substitutes seeded per-id uniforms for the scores. Output is
    ordered by descending score with ties broken by ascending id.
    """
    if budget < 0:
        raise ValueError("budget must be non-negative")
    if budget > len(scores):
        raise ValueError(f"budget {budget} exceeds pool size {len(scores)}")
    if strategy.kind == "random":
        keyed = [(sid, _uniform_for_id(strategy.seed, sid)) for sid, _ in scores]
    else:
        keyed = [(sid, float(s)) for sid, s in scores]
    ranked = sorted(keyed, key=lambda item: (-item[1], item[0]))
    return [sid for sid, _ in ranked[:budget]]


def _difficulty_weight(scene: SyntheticScene) -> float:
    return WEIGHT_FLOOR + scene.difficulty


def run_simulation(
    world: Sequence[SyntheticScene],
    space: ClassSpace,
    config: ScoringConfig,
    strategy: StrategyKind,
    protocol: SimProtocol = SimProtocol(),
    params: CorruptionParams = CorruptionParams(),
    seed: int = 0,
) -> tuple[list[CycleReport], PoolState]:
    """Run the full annotation loop and report metrics per cycle.

    A validation share of the world is held out of both pools; the labeled
    and budget fractions apply to the remaining pool corpus. Metrics are
    computed on the validation split at the model quality implied by the
    current labeled pool; the fully-trained normalizers come from a
    quality-1 evaluation of the same split. Deterministic per seed.
    """
    if not world:
        raise ValueError("world is empty")
    by_id = {scene.sample_id: scene for scene in world}
    if len(by_id) != len(world):
        raise ValueError("duplicate sample ids in world")
    ids = sorted(by_id)

    # 0x517 tags the split/init stream so it cannot collide with the
    # per-sample prediction streams derived from the same seed
    rng = np.random.default_rng(np.random.SeedSequence([_uint(seed), 0x517]))
    perm = rng.permutation(len(ids))
    n_val = int(round(protocol.val_fraction * len(ids)))
    val_ids = sorted(ids[i] for i in perm[:n_val])
    pool_ids = sorted(ids[i] for i in perm[n_val:])
    n_pool = len(pool_ids)
    if n_pool == 0:
        raise ValueError("validation holdout leaves no pool samples")
    if not val_ids:
        raise ValueError("protocol needs a non-empty validation split")

    n_init = int(round(protocol.init_fraction * n_pool))
    n_budget = int(round(protocol.budget_fraction * n_pool))
    n_init = max(1, min(n_init, n_pool))
    init_pick = rng.choice(n_pool, size=n_init, replace=False)
    labeled = sorted(pool_ids[i] for i in init_pick)
    unlabeled = sorted(set(pool_ids) - set(labeled))
    state = PoolState(labeled_ids=tuple(labeled), unlabeled_ids=tuple(unlabeled))

    pool_weight = sum(_difficulty_weight(by_id[sid]) for sid in pool_ids)

    def quality(labeled_ids: Sequence[str]) -> float:
        got = sum(_difficulty_weight(by_id[sid]) for sid in labeled_ids)
        return got / pool_weight

    def evaluate(q: float) -> tuple[float, float]:
        records = [predict_with_noise(by_id[v], q, params, seed) for v in val_ids]
        return mean_average_precision(records, space), mean_iou(records, space)

    map_fully, miou_fully = evaluate(1.0)

    def report(cycle: int, state: PoolState) -> CycleReport:
        q = quality(state.labeled_ids)
        m, i = evaluate(q)
        return CycleReport(
            cycle=cycle,
            labeled_fraction=len(state.labeled_ids) / n_pool,
            strategy=strategy.kind,
            metrics=build_report(m, i, map_fully, miou_fully),
        )

    reports = [report(0, state)]
    for cycle in range(1, protocol.cycles + 1):
        budget = min(n_budget, len(state.unlabeled_ids))
        if budget > 0:
            q_cur = quality(state.labeled_ids)
            if strategy.kind == "inconsistency":
                scores = []
                for sid in state.unlabeled_ids:
                    record = predict_with_noise(by_id[sid], q_cur, params, seed)
                    scores.append((sid, score_sample(record, space, config).combined))
            else:
                scores = [(sid, 0.0) for sid in state.unlabeled_ids]
            selected = select_batch(scores, budget, strategy)
        else:
            selected = []
        state = state.advance(selected)
        reports.append(report(cycle, state))
    return reports, state
