"""Cross-task inconsistency scoring between 2D object detection and
semantic segmentation, plus a desk-scale pool-based annotation-loop
simulator for exercising selection strategies."""

from .boxmask import (
    CropRegion,
    ResegmenterSpec,
    ScoringConfig,
    combine_boxmasks,
    expand_crop_region,
    generate_boxmask,
    resegment,
)
from .domain import (
    Box,
    ClassDistribution,
    ClassSpace,
    DetectionBox,
    GroundTruth,
    ProbabilityMap,
    SampleRecord,
    argmax_label,
    transform_class_distribution,
    validate_sample,
)
from .inconsistency import (
    BoxScore,
    ScoreBreakdown,
    cls_inconsistency,
    combined_score,
    loc_inconsistency,
    score_sample,
    seg_inconsistency,
)
from .maskops import (
    BinaryMask,
    Rle,
    count_ones,
    invert_mask,
    paste_into_frame,
    pixelwise_max,
    rle_decode,
    rle_encode,
)
from .metrics import (
    MetricReport,
    average_precision,
    box_iou,
    build_report,
    mdsq,
    mean_average_precision,
    mean_iou,
)
from .simulator import (
    DEFAULT_SPACE,
    CorruptionParams,
    CycleReport,
    PoolState,
    SimProtocol,
    StrategyKind,
    SyntheticScene,
    effective_noise,
    generate_world,
    predict_with_noise,
    run_simulation,
    select_batch,
)

__version__ = "0.1.0"
