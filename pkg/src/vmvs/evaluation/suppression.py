"""Down-weight 3D detections whose image boxes no 2D detector confirms."""
from __future__ import annotations

from dataclasses import dataclass

from ..errors import ConfigError
from .iou import iou_2d


@dataclass
class SuppressionConfig:
    iou_threshold: float = 0.4
    penalty_factor: float = 0.1
    replace_boxes: bool = True

    def __post_init__(self):
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ConfigError("iou_threshold must lie in (0, 1]")
        if not 0.0 <= self.penalty_factor <= 1.0:
            raise ConfigError("penalty_factor must lie in [0, 1]")


def suppress_false_positives(dets3d, dets2d, cfg: SuppressionConfig | None = None) -> list:
    """Greedy matching in descending 3D score; each 2D box is used at most once.

    Matched detections keep their score and, with ``replace_boxes``, take the
    2D detector's box. Unmatched ones have their score multiplied by
    ``penalty_factor``. Output order and length equal the input's.
    """
    cfg = cfg or SuppressionConfig()
    out = list(dets3d)
    used = set()
    for i in sorted(range(len(out)), key=lambda i: -out[i].score):
        det = out[i]
        best, best_iou = None, -1.0
        if det.bbox2d is not None:
            for j, d2 in enumerate(dets2d):
                if j in used:
                    continue
                iou = iou_2d(det.bbox2d, d2.bbox)
                if iou > best_iou:
                    best, best_iou = j, iou
        if best is not None and best_iou >= cfg.iou_threshold:
            used.add(best)
            if cfg.replace_boxes:
                out[i] = det.with_(bbox2d=tuple(dets2d[best].bbox))
        else:
            out[i] = det.with_(score=det.score * cfg.penalty_factor)
    return out
