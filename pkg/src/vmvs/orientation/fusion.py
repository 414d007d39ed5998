"""Turn per-view predictions into one global yaw."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .angles import AngleVector, decode_angle_vector, fuse_estimates, wrap_angle


@dataclass
class OrientationEstimate:
    per_view_local_yaw: list
    per_view_vectors: list  # global frame
    fused_global_yaw: float
    resultant_magnitude: float


def estimate_orientation(view_set, predict: Callable, frame: str = "local",
                         normalize: bool = True) -> OrientationEstimate:
    """Run ``predict(roi, camera) -> AngleVector`` on every view and fuse.

    With ``frame="local"`` predictions are relative to each view's azimuth and
    get rotated into the original camera frame before fusion; with
    ``frame="global"`` they are fused as returned.
    """
    local_yaws, vectors = [], []
    for cam, roi in zip(view_set.cameras, view_set.images):
        vec = predict(roi, cam)
        if frame == "local":
            local_yaws.append(decode_angle_vector(vec))
            vec = vec.rotated(cam.view_azimuth)
        else:
            local_yaws.append(wrap_angle(decode_angle_vector(vec) - cam.view_azimuth))
        vectors.append(vec)
    fused, magnitude = fuse_estimates(vectors, normalize=normalize)
    return OrientationEstimate(local_yaws, vectors, fused, magnitude)


def strongest_view_yaw(vectors: list[AngleVector]) -> float:
    """Fallback when fusion degenerates: angle of the longest raw vector."""
    best = max(vectors, key=lambda v: v.norm)
    return decode_angle_vector(best)
