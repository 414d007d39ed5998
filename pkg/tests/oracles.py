"""Brute-force reference implementations used by several test modules."""
from __future__ import annotations

import itertools
import math

import numpy as np

from vmvs.detections import Detection3D


def monte_carlo_bev_iou(a: Detection3D, b: Detection3D, n: int, rng) -> float:
    """Sample uniformly inside footprint ``a``; the hit fraction in ``b`` gives the intersection."""
    l, _, w = a.dims
    s, t = rng.uniform(-0.5, 0.5, (2, n))
    heading = np.array([math.cos(a.yaw), -math.sin(a.yaw)])
    lateral = np.array([math.sin(a.yaw), math.cos(a.yaw)])
    pts = np.array([a.centroid[0], a.centroid[2]]) + np.outer(s * l, heading) + np.outer(t * w, lateral)
    bl, _, bw = b.dims
    b_heading = np.array([math.cos(b.yaw), -math.sin(b.yaw)])
    b_lateral = np.array([math.sin(b.yaw), math.cos(b.yaw)])
    rel = pts - np.array([b.centroid[0], b.centroid[2]])
    inside = (np.abs(rel @ b_heading) <= bl / 2) & (np.abs(rel @ b_lateral) <= bw / 2)
    area_a, area_b = l * w, bl * bw
    inter = area_a * inside.mean()
    return inter / (area_a + area_b - inter)


def exhaustive_matching_size(gts, dets, threshold: float) -> int:
    """Largest number of GT/detection pairs within ``threshold`` in x-z, by enumeration."""
    close = [[math.hypot(d.centroid[0] - g.centroid[0], d.centroid[2] - g.centroid[2]) <= threshold
              for d in dets] for g in gts]
    best = 0
    slots = list(range(len(dets))) + [None] * len(gts)
    for perm in itertools.permutations(slots, len(gts)):
        count = sum(1 for i, j in enumerate(perm) if j is not None and close[i][j])
        best = max(best, count)
    return best
