"""Frame-level matching, difficulty buckets and report serialisation."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..detections import Detection3D
from ..orientation.angles import wrap_angle
from .iou import iou_2d_matrix
from .metrics import aae, aos, average_precision, centroid_recall, pr_curve

DIFFICULTIES = ("easy", "moderate", "hard")
# KITTI object benchmark thresholds, indexed like DIFFICULTIES.
MIN_HEIGHT = (40.0, 25.0, 25.0)
MAX_OCCLUSION = (0, 1, 2)
MAX_TRUNCATION = (0.15, 0.30, 0.50)
MIN_OVERLAP_2D = 0.5  # pedestrian class


@dataclass
class BucketResult:
    ap_2d: float
    aos: float
    os: float
    aae_deg: float | None
    n_gt: int
    n_tp: int


@dataclass
class EvalReport:
    buckets: dict
    recall_at_k: float
    recall_k: int
    recall_threshold: float
    recall_points: int
    pr_curve: list = field(default_factory=list)  # moderate bucket: (recall, precision, similarity)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def to_table(self) -> str:
        head = f"{'Bucket':<10}{'AP_2D':>9}{'AOS':>9}{'OS':>9}{'AAE(deg)':>10}{'GT':>6}{'TP':>6}"
        lines = [head, "-" * len(head)]
        for name in DIFFICULTIES:
            b = self.buckets[name]
            aae_txt = "-" if b.aae_deg is None else f"{b.aae_deg:.2f}"
            lines.append(f"{name:<10}{100 * b.ap_2d:>9.2f}{100 * b.aos:>9.2f}{b.os:>9.4f}{aae_txt:>10}"
                         f"{b.n_gt:>6}{b.n_tp:>6}")
        lines.append(f"centroid recall (top {self.recall_k}, {self.recall_threshold} m): "
                     f"{100 * self.recall_at_k:.2f}")
        return "\n".join(lines) + "\n"

    def pr_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["recall", "precision", "orientation_similarity"])
        for row in self.pr_curve:
            writer.writerow([f"{v:.6f}" for v in row])
        return buf.getvalue()


def _gt_status(gt: Detection3D, difficulty: int) -> str:
    """'valid', 'ignore' (harder than the bucket or a sitting person) or 'other' class."""
    name = gt.class_name.lower()
    if name == "person_sitting":
        return "ignore"
    if name != "pedestrian":
        return "other"
    height = gt.bbox2d[3] - gt.bbox2d[1]
    if (gt.occluded > MAX_OCCLUSION[difficulty] or gt.truncated > MAX_TRUNCATION[difficulty]
            or height <= MIN_HEIGHT[difficulty]):
        return "ignore"
    return "valid"


def match_frame(gts, dets, difficulty: int, min_overlap: float = MIN_OVERLAP_2D):
    """Greedy 2D matching in descending score for one frame.

    Returns ``(entries, n_valid_gt)`` with entries ``(score, is_tp, delta_theta)``
    for every detection that counts (TP or FP); detections matched to ignored
    ground truth or too small for the bucket are dropped.
    """
    status = [_gt_status(g, difficulty) for g in gts]
    candidates = [i for i, s in enumerate(status) if s != "other"]
    n_valid = sum(s == "valid" for s in status)
    dets = [d for d in dets if d.class_name.lower() == "pedestrian"]
    entries = []
    if not dets:
        return entries, n_valid
    iou = (iou_2d_matrix([d.bbox2d for d in dets], [gts[i].bbox2d for i in candidates])
           if candidates else np.zeros((len(dets), 0)))
    taken = set()
    for j in sorted(range(len(dets)), key=lambda j: -dets[j].score):
        best, best_iou = None, min_overlap
        for c, gi in enumerate(candidates):
            if gi in taken:
                continue
            # Prefer valid ground truth; ignored ones only absorb otherwise-unmatched detections.
            better = iou[j, c] >= best_iou and (
                best is None or iou[j, c] > best_iou
                or (status[gi] == "valid" and status[best] != "valid"))
            if better:
                best, best_iou = gi, iou[j, c]
        det = dets[j]
        if best is not None:
            taken.add(best)
            if status[best] == "valid":
                entries.append((det.score, True, wrap_angle(det.yaw - gts[best].yaw)))
            continue
        height = det.bbox2d[3] - det.bbox2d[1]
        if height >= MIN_HEIGHT[difficulty]:
            entries.append((det.score, False, 0.0))
    return entries, n_valid


def evaluate(gt_frames: dict, det_frames: dict, recall_points: int = 40, recall_k: int = 16,
             recall_threshold: float = 0.3) -> EvalReport:
    """Evaluate detections against ground truth; both map frame id -> list of Detection3D.

    Detections are re-ranked by their final score.
    """
    buckets = {}
    curve = []
    for d_idx, name in enumerate(DIFFICULTIES):
        entries, n_gt = [], 0
        for fid in sorted(gt_frames):
            e, n = match_frame(gt_frames[fid], det_frames.get(fid, []), d_idx)
            entries.extend(e)
            n_gt += n
        if n_gt == 0:
            buckets[name] = BucketResult(0.0, 0.0, 0.0, None, 0, 0)
            continue
        ap = average_precision(entries, n_gt, recall_points)
        ao = aos(entries, n_gt, recall_points)
        errs = [e[2] for e in entries if e[1]]
        buckets[name] = BucketResult(
            ap_2d=ap, aos=ao, os=ao / ap if ap > 0 else 0.0,
            aae_deg=math.degrees(aae(errs)) if errs else None,
            n_gt=n_gt, n_tp=len(errs),
        )
        if name == "moderate":
            r, p, s = pr_curve(entries, n_gt)
            curve = [tuple(float(v) for v in row) for row in zip(r, p, s)]

    recalled, total = 0.0, 0
    for fid in sorted(gt_frames):
        valid = [g for g in gt_frames[fid] if _gt_status(g, 1) == "valid"]
        if not valid:
            continue
        dets = [d for d in det_frames.get(fid, []) if d.class_name.lower() == "pedestrian"]
        recalled += centroid_recall(valid, dets, recall_k, recall_threshold) * len(valid)
        total += len(valid)
    return EvalReport(buckets, recalled / total if total else 1.0, recall_k, recall_threshold,
                      recall_points, curve)
