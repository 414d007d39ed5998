"""Detection records shared by the renderer, the pipeline and the evaluator."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .kitti_io import LabelRecord
from .orientation.angles import wrap_angle


@dataclass(frozen=True)
class Detection3D:
    """A 3D box in the camera frame.

    ``centroid`` is the geometric centre (not KITTI's bottom centre).
    ``dims`` are extents along the object's own axes at yaw 0:
    (length along the heading, height, width). ``yaw`` follows KITTI
    ``rotation_y``: heading direction (cos yaw, 0, -sin yaw).
    """

    centroid: tuple
    dims: tuple
    yaw: float
    score: float = 1.0
    bbox2d: Optional[tuple] = None
    class_name: str = "Pedestrian"
    truncated: float = 0.0
    occluded: int = 0

    @property
    def viewing_angle(self) -> float:
        """Azimuth of the ray from the camera centre to the centroid."""
        return math.atan2(self.centroid[0], self.centroid[2])

    @property
    def alpha(self) -> float:
        return wrap_angle(self.yaw - self.viewing_angle)

    def with_(self, **changes) -> "Detection3D":
        return replace(self, **changes)

    @classmethod
    def from_label(cls, rec: LabelRecord) -> "Detection3D":
        h, w, l = rec.dimensions
        x, y, z = rec.location
        return cls(
            centroid=(x, y - h / 2.0, z),
            dims=(l, h, w),
            yaw=wrap_angle(rec.rotation_y) if abs(rec.rotation_y) > math.pi else rec.rotation_y,
            score=1.0 if rec.score is None else rec.score,
            bbox2d=tuple(rec.bbox2d),
            class_name=rec.class_name,
            truncated=rec.truncated,
            occluded=rec.occluded,
        )

    def to_label(self, with_score: bool = True) -> LabelRecord:
        l, h, w = self.dims
        x, y, z = self.centroid
        return LabelRecord(
            class_name=self.class_name,
            bbox2d=tuple(self.bbox2d) if self.bbox2d is not None else (0.0, 0.0, 0.0, 0.0),
            dimensions=(h, w, l),
            location=(x, y + h / 2.0, z),
            rotation_y=self.yaw,
            alpha=self.alpha,
            score=self.score if with_score else None,
            truncated=self.truncated,
            occluded=self.occluded,
        )

    def bev_corners(self) -> np.ndarray:
        """Footprint corners in the x-z plane, counter-clockwise as seen from above (-y)."""
        l, _, w = self.dims
        cx, _, cz = self.centroid
        heading = np.array([math.cos(self.yaw), -math.sin(self.yaw)])
        lateral = np.array([math.sin(self.yaw), math.cos(self.yaw)])
        corners = []
        for a, b in ((1, 1), (-1, 1), (-1, -1), (1, -1)):
            corners.append(np.array([cx, cz]) + a * l / 2 * heading + b * w / 2 * lateral)
        return np.array(corners)


@dataclass(frozen=True)
class Detection2D:
    bbox: tuple
    score: float = 1.0
    class_name: str = "Pedestrian"

    @classmethod
    def from_label(cls, rec: LabelRecord) -> "Detection2D":
        return cls(tuple(rec.bbox2d), 1.0 if rec.score is None else rec.score, rec.class_name)
