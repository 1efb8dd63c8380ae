"""Codec and evaluation toolkit for one-shot clothing detection heads.

Encodes annotated scenes into center/size/offset/landmark head tensors,
decodes head tensors back into box and 294-landmark detections over 13
categories, fuses flipped and rescaled views, and scores results with
COCO-style AP over box IoU and landmark OKS.
"""

from .bench import BenchReport, StageStats, StrategyReport, StrategyResult, bench_decode, compare_strategies
from .categories import (
    DEFAULT_SIGMA,
    NUM_CATEGORIES,
    TOTAL_KEYPOINTS,
    CategoryConfigError,
    CategorySpec,
    CategoryTable,
    default_table,
    dump_category_table,
    global_keypoint_index,
    load_category_table,
)
from .decode import (
    DecodeConfig,
    KeypointCandidates,
    Peak,
    decode_coarse_keypoints,
    decode_detections,
    decode_scene,
    extract_keypoint_candidates,
    extract_peaks,
    snap_keypoints,
)
from .encode import EncodeParams, encode_scene, gaussian_radius, render_gaussian
from .fileio import (
    FormatError,
    read_detections,
    read_scenes,
    read_tensors,
    write_detections,
    write_scenes,
    write_tensors,
)
from .heads import (
    TENSOR_NAMES,
    HeadTensorSet,
    TensorValidationError,
    ValidationResult,
    new_head_tensors,
    require_valid,
    validate_head_tensors,
)
from .metrics import (
    VISIBILITY_MODES,
    VISIBLE_AND_OCCLUDED,
    VISIBLE_ONLY,
    EvalConfig,
    EvaluationError,
    MetricBlock,
    MetricReport,
    PRCurve,
    average_precision,
    evaluate,
    match_detections,
    oks,
    report_to_csv_rows,
    report_to_dict,
)
from .postprocess import (
    FusionConfig,
    flip_tensors,
    fuse_multiscale,
    fuse_tensors,
    iou,
    nms,
    rescale_detections,
)
from .scene import (
    VIS_OCCLUDED,
    VIS_UNLABELED,
    VIS_VISIBLE,
    Detection,
    GroundTruthItem,
    Scene,
    SceneError,
    box_area,
    clamp_scene,
    mirror_scene,
    scale_scene,
    translate_scene,
    validate_scene,
)
from .synth import NoiseParams, SynthParams, noisy_view_tensors, synth_scenes

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
