"""Multi-object tracking-by-detection and evaluation for drone video.

The pipeline consumes per-frame detections and appearance embeddings,
produces identity-labeled tracklets via Kalman prediction and
confidence-fused appearance association, and evaluates detection and
tracking outputs with COCO-style AP/AR and tracklet-AP. A companion anchor
toolkit quantifies how anchor scale choices cover small objects.
"""

from .anchors import (
    AnchorConfig,
    baseline_config,
    coverage_report,
    dense_config,
    generate_anchors,
    assign_anchors,
    scale_range,
)
from .association import AppearanceGallery, AssociationParams
from .detection import Detection
from .evaluation import (
    EvalConfig,
    GroundTruthBox,
    eval_detection,
    eval_tracking,
    detection_ground_truth,
    tracking_ground_truth,
)
from .geometry import BoundingBox, BoxXYAH, from_xyah, iou, iou_matrix, to_xyah
from .io_formats import (
    AnnotationRecord,
    EmbeddingTable,
    FormatError,
    parse_annotations,
    parse_detections,
    parse_tracker_config,
    parse_tracks,
    read_embeddings,
    write_annotations,
    write_detections,
    write_embeddings,
    write_tracks,
)
from .motion import KalmanState, MotionParams
from .postprocess import decode_deltas, nms, nms_pipeline
from .synth import SynthConfig, generate
from .tracker import (
    MultiObjectTracker,
    Track,
    TrackStatus,
    TrackerParams,
    TrackletRow,
    run_sequence,
)

__version__ = "0.1.0"

__all__ = [
    "AnchorConfig",
    "AnnotationRecord",
    "AppearanceGallery",
    "AssociationParams",
    "BoundingBox",
    "BoxXYAH",
    "Detection",
    "EmbeddingTable",
    "EvalConfig",
    "FormatError",
    "GroundTruthBox",
    "KalmanState",
    "MotionParams",
    "MultiObjectTracker",
    "SynthConfig",
    "Track",
    "TrackStatus",
    "TrackerParams",
    "TrackletRow",
    "assign_anchors",
    "baseline_config",
    "coverage_report",
    "decode_deltas",
    "dense_config",
    "detection_ground_truth",
    "eval_detection",
    "eval_tracking",
    "from_xyah",
    "generate",
    "generate_anchors",
    "iou",
    "iou_matrix",
    "nms",
    "nms_pipeline",
    "parse_annotations",
    "parse_detections",
    "parse_tracker_config",
    "parse_tracks",
    "read_embeddings",
    "run_sequence",
    "scale_range",
    "to_xyah",
    "tracking_ground_truth",
    "write_annotations",
    "write_detections",
    "write_embeddings",
    "write_tracks",
    "__version__",
]
