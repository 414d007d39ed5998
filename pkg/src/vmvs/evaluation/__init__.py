"""Detection metrics, IoU, matching and false-positive suppression."""
from ..detections import Detection2D, Detection3D
from .iou import iou_2d, iou_3d, iou_bev
from .metrics import (
    aae,
    aos,
    average_precision,
    centroid_matching,
    centroid_recall,
    orientation_score,
    pr_curve,
)
from .report import EvalReport, evaluate
from .suppression import SuppressionConfig, suppress_false_positives

__all__ = [
    "Detection2D",
    "Detection3D",
    "EvalReport",
    "SuppressionConfig",
    "aae",
    "aos",
    "average_precision",
    "centroid_matching",
    "centroid_recall",
    "evaluate",
    "iou_2d",
    "iou_3d",
    "iou_bev",
    "orientation_score",
    "pr_curve",
    "suppress_false_positives",
]
