"""Canonical virtual cameras around an object and a splatting z-buffer renderer."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .detections import Detection3D
from .errors import CentroidBehindCamera, ConfigError, EmptyIntersection
from .geometry import ColoredPointCloud, RigidPose, pixel_index, transform_points

log = logging.getLogger(__name__)

BACKGROUND = np.array([0, 0, 0], dtype=np.uint8)


@dataclass
class ViewConfig:
    n_views: int = 11
    rho_max: float = math.radians(25.0)
    radius_r: float = 4.0
    roi_width: int = 224
    roi_height: int = 224
    splat_radius: int = 2
    fill_fraction: float = 0.8
    nominal_height: float = 1.8
    depth_scaled_splats: bool = False
    crop_to_object: bool = True
    crop_scale: float = 3.0
    near_clip: float = 1e-3

    def __post_init__(self):
        if self.n_views < 1:
            raise ConfigError("n_views must be >= 1")
        if not 0.0 < self.rho_max < math.pi / 2:
            raise ConfigError("rho_max must lie in (0, pi/2)")
        if self.rho_max > math.radians(60.0):
            log.warning("rho_max=%.1f deg will expose surfaces the sensor never saw",
                        math.degrees(self.rho_max))
        if not self.radius_r > 0:
            raise ConfigError("radius_r must be positive")
        if self.roi_width < 1 or self.roi_height < 1:
            raise ConfigError("ROI dimensions must be positive")
        if self.splat_radius < 0:
            raise ConfigError("splat_radius must be >= 0")
        if not 0.0 < self.fill_fraction <= 1.0:
            raise ConfigError("fill_fraction must lie in (0, 1]")

    @property
    def focal(self) -> float:
        """Focal length that maps nominal_height / fill_fraction at radius_r onto the ROI height."""
        return self.roi_height * self.radius_r * self.fill_fraction / self.nominal_height

    @property
    def principal(self) -> tuple[float, float]:
        return self.roi_width / 2.0, self.roi_height / 2.0

    def offsets(self) -> np.ndarray:
        if self.n_views == 1:
            return np.zeros(1)
        return np.linspace(-self.rho_max, self.rho_max, self.n_views)


@dataclass(frozen=True)
class VirtualCamera:
    pose: RigidPose  # world -> camera
    focal: float
    principal: tuple
    azimuth_offset: float
    view_azimuth: float  # azimuth of the optical axis in the original camera frame
    width: int
    height: int

    @property
    def center(self) -> np.ndarray:
        return -self.pose.rotation.T @ self.pose.translation

    def project(self, points) -> np.ndarray:
        """Continuous (u, v) image coordinates of world points."""
        cam = transform_points(points, self.pose)
        return np.column_stack([
            self.focal * cam[:, 0] / cam[:, 2] + self.principal[0],
            self.focal * cam[:, 1] / cam[:, 2] + self.principal[1],
        ])


@dataclass
class RoiImage:
    pixels: np.ndarray  # (H, W, 3) uint8, background black
    depth_buffer: np.ndarray  # (H, W) float64, 0 where nothing was drawn
    source_view: int = 0

    @property
    def shape(self):
        return self.pixels.shape[:2]


@dataclass
class VirtualViewSet:
    cameras: list
    images: list
    object_viewing_angle_alpha: float


def look_at_pose(center, view_azimuth: float) -> RigidPose:
    """Level camera at ``center`` looking along azimuth ``view_azimuth``, zero roll."""
    s, c = math.sin(view_azimuth), math.cos(view_azimuth)
    rot = np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])
    return RigidPose(rot, -rot @ np.asarray(center, dtype=np.float64))


def place_cameras(centroid, cfg: ViewConfig | None = None) -> list[VirtualCamera]:
    cfg = cfg or ViewConfig()
    cx, cy, cz = (float(v) for v in centroid)
    if not cz > 0:
        raise CentroidBehindCamera(f"centroid z={cz} is not in front of the camera")
    alpha = math.atan2(cx, cz)
    cams = []
    for rho in cfg.offsets():
        phi = alpha + float(rho)
        center = (cx - cfg.radius_r * math.sin(phi), cy, cz - cfg.radius_r * math.cos(phi))
        cams.append(VirtualCamera(
            pose=look_at_pose(center, phi),
            focal=cfg.focal,
            principal=cfg.principal,
            azimuth_offset=float(rho),
            view_azimuth=phi,
            width=cfg.roi_width,
            height=cfg.roi_height,
        ))
    return cams


def _splat_fragments(cam_pts, start_index, cam: VirtualCamera, cfg: ViewConfig):
    """Candidate (flat pixel, point index) pairs for one chunk of points."""
    z = cam_pts[:, 2]
    front = np.flatnonzero(z > cfg.near_clip)
    if len(front) == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    pts = cam_pts[front]
    cols = pixel_index(cam.focal * pts[:, 0] / pts[:, 2] + cam.principal[0])
    rows = pixel_index(cam.focal * pts[:, 1] / pts[:, 2] + cam.principal[1])
    s = cfg.splat_radius
    if cfg.depth_scaled_splats:
        radii = np.clip(np.round(s * cfg.radius_r / pts[:, 2]), 0, 3 * s).astype(np.int64)
        s_max = int(radii.max()) if len(radii) else 0
    else:
        radii = None
        s_max = s
    d = np.arange(-s_max, s_max + 1)
    dy, dx = np.meshgrid(d, d, indexing="ij")
    dy, dx = dy.ravel(), dx.ravel()
    rr = rows[:, None] + dy[None, :]
    cc = cols[:, None] + dx[None, :]
    ok = (rr >= 0) & (rr < cam.height) & (cc >= 0) & (cc < cam.width)
    if radii is not None:
        ok &= (np.abs(dy)[None, :] <= radii[:, None]) & (np.abs(dx)[None, :] <= radii[:, None])
    point_idx = np.broadcast_to((front + start_index)[:, None], rr.shape)
    return (rr * cam.width + cc)[ok], point_idx[ok]


def _resolve(flat, index, rank, by_rank):
    """Keep, per pixel, the fragment whose point has the lowest rank.

    ``rank`` orders all points by (depth, index) and ``by_rank`` is its
    inverse, so one integer sort on ``flat * n + rank`` finds every pixel's winner.
    """
    if len(flat) == 0:
        return flat, index
    n = np.int64(len(rank))
    key = np.sort(flat * n + rank[index])
    f = key // n
    first = np.ones(len(key), dtype=bool)
    first[1:] = f[1:] != f[:-1]
    winners = key[first]
    return winners // n, by_rank[winners % n]


def render_view(cloud: ColoredPointCloud, cam: VirtualCamera, cfg: ViewConfig | None = None,
                view_index: int = 0, workers: int = 1) -> RoiImage:
    """Splat every point as a (2s+1)^2 square; nearest depth wins, ties to the lowest index.

    ``workers`` > 1 splits the points into chunks resolved concurrently and
    merged with the same (depth, index) rule, so the output does not depend on it.
    """
    cfg = cfg or ViewConfig()
    h, w = cam.height, cam.width
    pixels = np.zeros((h, w, 3), dtype=np.uint8)
    depth_buf = np.zeros((h, w), dtype=np.float64)
    if len(cloud) == 0:
        return RoiImage(pixels, depth_buf, view_index)
    cam_pts = transform_points(cloud.points, cam.pose)
    z = cam_pts[:, 2]
    by_rank = np.argsort(z, kind="stable")
    rank = np.empty(len(z), dtype=np.int64)
    rank[by_rank] = np.arange(len(z))

    bounds = np.linspace(0, len(cam_pts), max(1, workers) + 1).astype(np.int64)
    chunks = [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1) if bounds[i + 1] > bounds[i]]

    def work(chunk):
        lo, hi = chunk
        return _resolve(*_splat_fragments(cam_pts[lo:hi], lo, cam, cfg), rank, by_rank)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    flat, index = _resolve(*(np.concatenate(p) for p in zip(*parts)), rank, by_rank)
    pixels.reshape(-1, 3)[flat] = cloud.colors[index]
    depth_buf.ravel()[flat] = z[index]
    return RoiImage(pixels, depth_buf, view_index)


def render_view_painter(cloud: ColoredPointCloud, cam: VirtualCamera, cfg: ViewConfig | None = None,
                        view_index: int = 0) -> RoiImage:
    """Reference renderer: paint splats back to front, one point at a time."""
    cfg = cfg or ViewConfig()
    h, w = cam.height, cam.width
    pixels = np.zeros((h, w, 3), dtype=np.uint8)
    depth_buf = np.zeros((h, w), dtype=np.float64)
    cam_pts = transform_points(cloud.points, cam.pose)
    # Farthest first; among equal depths the highest index first so the lowest paints last.
    order = sorted(range(len(cam_pts)), key=lambda i: (-cam_pts[i, 2], -i))
    s = cfg.splat_radius
    for i in order:
        x, y, z = cam_pts[i]
        if not z > cfg.near_clip:
            continue
        col = math.floor(cam.focal * x / z + cam.principal[0] + 0.5)
        row = math.floor(cam.focal * y / z + cam.principal[1] + 0.5)
        r = s
        if cfg.depth_scaled_splats:
            r = int(min(max(round(s * cfg.radius_r / z), 0), 3 * s))
        for yy in range(row - r, row + r + 1):
            for xx in range(col - r, col + r + 1):
                if 0 <= yy < h and 0 <= xx < w:
                    pixels[yy, xx] = cloud.colors[i]
                    depth_buf[yy, xx] = z
    return RoiImage(pixels, depth_buf, view_index)


def crop_cloud(cloud: ColoredPointCloud, detection: Detection3D, scale: float = 3.0) -> ColoredPointCloud:
    """Points inside an axis-aligned box of ``scale`` times the object size around its centroid."""
    l, h, w = detection.dims
    horiz = 0.5 * scale * max(l, w)
    half = np.array([horiz, 0.5 * scale * h, horiz])
    mask = np.all(np.abs(cloud.points - np.asarray(detection.centroid)) <= half, axis=1)
    return cloud.subset(mask)


def synthesize_views(cloud: ColoredPointCloud, detection: Detection3D, cfg: ViewConfig | None = None,
                     workers: int = 1) -> VirtualViewSet:
    cfg = cfg or ViewConfig()
    cams = place_cameras(detection.centroid, cfg)
    if cfg.crop_to_object:
        cloud = crop_cloud(cloud, detection, cfg.crop_scale)

    def render(j):
        return render_view(cloud, cams[j], cfg, view_index=j)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            images = list(pool.map(render, range(len(cams))))
    else:
        images = [render(j) for j in range(len(cams))]
    return VirtualViewSet(cams, images, detection.viewing_angle)


def roi_crop(image: np.ndarray, bbox, cfg: ViewConfig | None = None) -> RoiImage:
    """Crop ``bbox`` (left, top, right, bottom) and resize to the ROI size bilinearly."""
    cfg = cfg or ViewConfig()
    img_h, img_w = image.shape[:2]
    left, top, right, bottom = (float(v) for v in bbox)
    left, top = max(left, 0.0), max(top, 0.0)
    right, bottom = min(right, float(img_w)), min(bottom, float(img_h))
    if right <= left or bottom <= top:
        raise EmptyIntersection(f"box {tuple(bbox)} does not overlap a {img_w}x{img_h} image")
    out_w, out_h = cfg.roi_width, cfg.roi_height
    xs = left + (np.arange(out_w) + 0.5) * (right - left) / out_w - 0.5
    ys = top + (np.arange(out_h) + 0.5) * (bottom - top) / out_h - 0.5
    xs = np.clip(xs, 0.0, img_w - 1.0)
    ys = np.clip(ys, 0.0, img_h - 1.0)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x1 = np.minimum(x0 + 1, img_w - 1)
    y1 = np.minimum(y0 + 1, img_h - 1)
    fx = (xs - x0)[None, :, None]
    fy = (ys - y0)[:, None, None]
    img = image.astype(np.float64)
    top_row = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot_row = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    out = top_row * (1 - fy) + bot_row * fy
    pixels = np.clip(np.round(out), 0, 255).astype(np.uint8)
    return RoiImage(pixels, np.zeros((out_h, out_w)), 0)
