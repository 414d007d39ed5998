"""Axis-aligned 2D IoU and yaw-rotated bird's-eye-view / 3D IoU."""
from __future__ import annotations

import numpy as np

from ..detections import Detection3D


def iou_2d(a, b) -> float:
    """IoU of two (left, top, right, bottom) boxes."""
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return float(inter / union) if union > 0 else 0.0


def iou_2d_matrix(boxes_a, boxes_b) -> np.ndarray:
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(union > 0, inter / union, 0.0)


def polygon_area(poly) -> float:
    """Signed shoelace area; positive for counter-clockwise vertices."""
    if len(poly) < 3:
        return 0.0
    p = np.asarray(poly, dtype=np.float64)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _ccw(poly):
    return poly if polygon_area(poly) >= 0 else poly[::-1]


def clip_convex(subject, clip) -> list:
    """Sutherland-Hodgman: the part of polygon ``subject`` inside convex polygon ``clip``."""
    clip = _ccw(np.asarray(clip, dtype=np.float64))
    output = [tuple(p) for p in _ccw(np.asarray(subject, dtype=np.float64))]
    n = len(clip)
    for i in range(n):
        if not output:
            break
        a, b = clip[i], clip[(i + 1) % n]
        edge = b - a

        def side(p):
            return edge[0] * (p[1] - a[1]) - edge[1] * (p[0] - a[0])

        inputs, output = output, []
        for j in range(len(inputs)):
            cur, prev = inputs[j], inputs[j - 1]
            s_cur, s_prev = side(cur), side(prev)
            if s_cur >= 0:
                if s_prev < 0:
                    t = s_prev / (s_prev - s_cur)
                    output.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
                output.append(cur)
            elif s_prev >= 0:
                t = s_prev / (s_prev - s_cur)
                output.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
    return output


def bev_intersection(a: Detection3D, b: Detection3D) -> float:
    return abs(polygon_area(clip_convex(a.bev_corners(), b.bev_corners())))


def iou_bev(a: Detection3D, b: Detection3D) -> float:
    inter = bev_intersection(a, b)
    area_a = a.dims[0] * a.dims[2]
    area_b = b.dims[0] * b.dims[2]
    union = area_a + area_b - inter
    return float(min(max(inter / union, 0.0), 1.0)) if union > 0 else 0.0


def iou_3d(a: Detection3D, b: Detection3D) -> float:
    """BEV overlap times vertical overlap, over the union of volumes."""
    ya0, ya1 = a.centroid[1] - a.dims[1] / 2, a.centroid[1] + a.dims[1] / 2
    yb0, yb1 = b.centroid[1] - b.dims[1] / 2, b.centroid[1] + b.dims[1] / 2
    overlap_h = max(0.0, min(ya1, yb1) - max(ya0, yb0))
    inter = bev_intersection(a, b) * overlap_h
    vol_a = a.dims[0] * a.dims[1] * a.dims[2]
    vol_b = b.dims[0] * b.dims[1] * b.dims[2]
    union = vol_a + vol_b - inter
    return float(min(max(inter / union, 0.0), 1.0)) if union > 0 else 0.0
