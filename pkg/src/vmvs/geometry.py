"""Pinhole projection, back-projection, colorization and rigid transforms.

Conventions: camera frame has x right, y down, z forward. Depth rasters are
(H, W) float64 arrays holding z in metres, with 0 marking an invalid pixel.
Projected coordinates are assigned to pixels with round-half-up, i.e. pixel
``floor(u + 0.5)``, so pixel (i, j) covers u in [i - 0.5, i + 0.5).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularCalibration
from .kitti_io import Calibration

INVALID = 0.0


@dataclass
class ColoredPointCloud:
    points: np.ndarray  # (N, 3) float64
    colors: np.ndarray  # (N, 3) uint8

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
        if len(self.points) != len(self.colors):
            raise ValueError(f"{len(self.points)} points but {len(self.colors)} colors")

    def __len__(self):
        return len(self.points)

    def subset(self, mask) -> "ColoredPointCloud":
        return ColoredPointCloud(self.points[mask], self.colors[mask])


@dataclass(frozen=True)
class RigidPose:
    """p' = rotation @ p + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9) or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation is not a proper orthonormal matrix")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidPose":
        return cls(np.eye(3), np.zeros(3))

    def inverse(self) -> "RigidPose":
        rt = self.rotation.T
        return RigidPose(rt, -rt @ self.translation)

    def compose(self, other: "RigidPose") -> "RigidPose":
        """Pose applying ``other`` first, then ``self``."""
        return RigidPose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)


def rotation_about_y(angle: float) -> np.ndarray:
    """Right-handed rotation about the camera y axis; +90 deg takes +z to +x."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def transform_points(points, pose: RigidPose) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return pts @ pose.rotation.T + pose.translation


def pixel_index(coord) -> np.ndarray:
    """Round-half-up pixel assignment."""
    return np.floor(np.asarray(coord) + 0.5).astype(np.int64)


def _project(points: np.ndarray, calib: Calibration):
    p = calib.p_cam
    uvw = points @ p[:, :3].T + p[:, 3]
    w = uvw[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = uvw[:, 0] / w
        v = uvw[:, 1] / w
    return u, v, w


def project_to_pixels(points, calib: Calibration, width: int, height: int):
    """Pixel columns/rows of points in front of the camera and inside the raster.

    Returns ``(keep_index, cols, rows)`` where ``keep_index`` indexes the input.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    u, v, w = _project(pts, calib)
    front = (pts[:, 2] > 0) & (w > 0)
    cols = np.zeros(len(pts), dtype=np.int64)
    rows = np.zeros(len(pts), dtype=np.int64)
    cols[front] = pixel_index(u[front])
    rows[front] = pixel_index(v[front])
    inside = front & (cols >= 0) & (cols < width) & (rows >= 0) & (rows < height)
    keep = np.flatnonzero(inside)
    return keep, cols[keep], rows[keep]


def project_points(points, calib: Calibration, width: int, height: int) -> tuple[np.ndarray, int]:
    """Sparse depth raster from a point set, nearest depth winning each pixel.

    Returns ``(depth_map, n_dropped)``; points behind the camera or outside
    the raster are dropped and counted. Equal depths resolve to the lowest
    point index, which only matters for determinism of bookkeeping since the
    stored value is the same.
    """
    if width <= 0 or height <= 0:
        raise ValueError("raster dimensions must be positive")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    keep, cols, rows = project_to_pixels(pts, calib, width, height)
    depth = np.zeros((height, width), dtype=np.float64)
    if len(keep):
        flat = rows * width + cols
        z = pts[keep, 2]
        order = np.lexsort((keep, z, flat))
        flat_sorted = flat[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = flat_sorted[1:] != flat_sorted[:-1]
        winners = order[first]
        depth.ravel()[flat[winners]] = z[winners]
    return depth, len(pts) - len(keep)


def backproject_depth(depth: np.ndarray, calib: Calibration) -> np.ndarray:
    """Points (row-major pixel order) whose z equals the stored depth and that project to their pixel."""
    block = calib.p_cam[:, :3]
    if abs(np.linalg.det(block)) < 1e-12:
        raise SingularCalibration("3x3 block of the projection matrix is singular")
    rows, cols = np.nonzero(depth > 0)
    d = depth[rows, cols]
    if len(d) == 0:
        return np.zeros((0, 3))
    p = calib.p_cam
    # Solve P[:, :3] @ (x, y, d) + P[:, 3] = s * (u, v, 1) for x, y, s.
    a = np.zeros((len(d), 3, 3))
    a[:, :, 0] = p[:, 0]
    a[:, :, 1] = p[:, 1]
    a[:, 0, 2] = -cols
    a[:, 1, 2] = -rows
    a[:, 2, 2] = -1.0
    rhs = -(p[:, 2][None, :] * d[:, None] + p[:, 3][None, :])
    try:
        sol = np.linalg.solve(a, rhs[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError:
        raise SingularCalibration("pixel ray is parallel to the image plane") from None
    return np.column_stack([sol[:, 0], sol[:, 1], d])


def colorize(points, image: np.ndarray, calib: Calibration) -> ColoredPointCloud:
    height, width = image.shape[:2]
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    keep, cols, rows = project_to_pixels(pts, calib, width, height)
    return ColoredPointCloud(pts[keep], image[rows, cols, :3])


def depth_map_to_cloud(depth: np.ndarray, image: np.ndarray, calib: Calibration) -> ColoredPointCloud:
    """Back-project a dense depth map and color every point from the image."""
    return colorize(backproject_depth(depth, calib), image, calib)
