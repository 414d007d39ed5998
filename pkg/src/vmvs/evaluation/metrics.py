"""KITTI-style ranking metrics and the centroid-distance recall."""
from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from ..errors import EmptyInput, NoGroundTruth, ZeroAP
from ..orientation.angles import wrap_angle

_RECALL_TOL = 1e-9


def recall_positions(recall_points: int) -> np.ndarray:
    """11-point grid includes 0; the 40-point grid starts at 1/40 as in KITTI R40."""
    if recall_points == 11:
        return np.linspace(0.0, 1.0, 11)
    return np.arange(1, recall_points + 1) / recall_points


def _ranked(detections: Iterable[Sequence]) -> list:
    # Stable sort keeps input order for equal scores.
    return sorted(detections, key=lambda d: -d[0])


def pr_curve(detections, n_gt: int):
    """Cumulative (recall, precision, orientation similarity) at every rank.

    ``detections`` holds ``(score, is_tp)`` or ``(score, is_tp, delta_theta)``.
    Orientation similarity uses (1 + cos delta) / 2 for true positives, 0 for
    false positives, averaged over the rank.
    """
    if n_gt < 1:
        raise NoGroundTruth("need at least one ground-truth object")
    ranked = _ranked(detections)
    tp = np.array([1.0 if d[1] else 0.0 for d in ranked])
    sim = np.array([(1.0 + math.cos(d[2])) / 2.0 if d[1] and len(d) > 2 else (1.0 if d[1] else 0.0)
                    for d in ranked])
    ranks = np.arange(1, len(ranked) + 1)
    recall = np.cumsum(tp) / n_gt
    precision = np.cumsum(tp) / ranks if len(ranks) else np.zeros(0)
    similarity = np.cumsum(sim) / ranks if len(ranks) else np.zeros(0)
    return recall, precision, similarity


def _interpolated(recall, values, recall_points: int) -> float:
    total = 0.0
    for r in recall_positions(recall_points):
        mask = recall >= r - _RECALL_TOL
        total += float(values[mask].max()) if mask.any() else 0.0
    return total / recall_points


def average_precision(detections, n_gt: int, recall_points: int = 40) -> float:
    recall, precision, _ = pr_curve(detections, n_gt)
    return _interpolated(recall, precision, recall_points)


def aos(detections, n_gt: int, recall_points: int = 40) -> float:
    """Average orientation similarity over ``(score, is_tp, delta_theta)`` triples."""
    recall, _, similarity = pr_curve(detections, n_gt)
    return _interpolated(recall, similarity, recall_points)


def orientation_score(aos_value: float, ap: float) -> float:
    if not ap > 0:
        raise ZeroAP("orientation score undefined when AP is zero")
    return aos_value / ap


def aae(angle_errors) -> float:
    """Mean absolute wrapped angular error, radians."""
    errs = list(angle_errors)
    if not errs:
        raise EmptyInput("no matched true positives")
    return float(np.mean([abs(wrap_angle(e)) for e in errs]))


def _centroid_close(gt, det, threshold, per_axis):
    dx = det.centroid[0] - gt.centroid[0]
    dz = det.centroid[2] - gt.centroid[2]
    if per_axis:
        return max(abs(dx), abs(dz)) <= threshold, max(abs(dx), abs(dz))
    dist = math.hypot(dx, dz)
    return dist <= threshold, dist


def centroid_matching(gts, dets, threshold: float, per_axis: bool = False) -> dict:
    """Maximum-cardinality GT->detection matching within the x-z distance threshold.

    Pairs are first taken greedily nearest-first; augmenting paths then add
    any GT the greedy pass stranded. Returns ``{gt_index: det_index}``.
    """
    pairs = []
    for i, g in enumerate(gts):
        for j, d in enumerate(dets):
            ok, dist = _centroid_close(g, d, threshold, per_axis)
            if ok:
                pairs.append((dist, i, j))
    pairs.sort()
    gt_to_det, det_to_gt = {}, {}
    for _, i, j in pairs:
        if i not in gt_to_det and j not in det_to_gt:
            gt_to_det[i], det_to_gt[j] = j, i

    adj = {i: [] for i in range(len(gts))}
    for _, i, j in pairs:
        adj[i].append(j)

    def augment(i, seen):
        for j in adj[i]:
            if j in seen:
                continue
            seen.add(j)
            if j not in det_to_gt or augment(det_to_gt[j], seen):
                gt_to_det[i], det_to_gt[j] = j, i
                return True
        return False

    for i in range(len(gts)):
        if i not in gt_to_det:
            augment(i, set())
    return gt_to_det


def top_k(dets, k: int):
    order = sorted(range(len(dets)), key=lambda j: -dets[j].score)
    return [dets[j] for j in order[:k]]


def centroid_recall(gts, dets, k: int = 16, dist_threshold: float = 0.3, per_axis: bool = False) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    if not gts:
        return 1.0
    kept = top_k(dets, k)
    return len(centroid_matching(gts, kept, dist_threshold, per_axis)) / len(gts)
