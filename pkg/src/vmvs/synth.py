"""Synthetic KITTI-style frames with exact ground truth.

Pedestrians are upright cylinders carrying a colored stripe on the side they
face (the KITTI heading direction ``(cos yaw, 0, -sin yaw)``), standing on a
checkered ground plane. LiDAR returns come from ray casting a ring/azimuth
pattern; the RGB image is a one-ray-per-pixel surface sample pushed through
the splat renderer.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import EmptyScene, MarkerNotVisible
from .geometry import ColoredPointCloud, RigidPose
from .kitti_io import Calibration, Frame, LabelRecord, LidarScan
from .orientation.angles import wrap_angle
from .view_synthesis import RoiImage, ViewConfig, VirtualCamera, render_view

# velodyne (x forward, y left, z up) -> camera (x right, y down, z forward)
VELO_TO_CAM = np.array([[0.0, -1.0, 0.0, 0.0], [0.0, 0.0, -1.0, 0.0], [1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]])

MARKER_COLOR = (200, 20, 20)
BASE_COLOR = (170, 170, 170)
GROUND_COLORS = ((70, 90, 70), (95, 115, 95))


@dataclass
class SynthObjectSpec:
    centroid: tuple
    yaw: float
    radius: float = 0.3
    height: float = 1.8
    stripe_width: float = math.radians(40.0)
    marker_color: tuple = MARKER_COLOR
    base_color: tuple = BASE_COLOR
    # Vertical extent of the stripe as fractions of height measured from the top.
    stripe_band: tuple = (0.1, 0.5)

    def __post_init__(self):
        if not (self.radius > 0 and self.height > 0):
            raise ValueError("cylinder radius and height must be positive")
        if not 0 < self.stripe_width < math.pi:
            raise ValueError("stripe width must lie in (0, pi)")


@dataclass
class LidarPattern:
    n_rings: int = 64
    elevation_min: float = math.radians(-24.8)
    elevation_max: float = math.radians(2.0)
    azimuth_resolution: float = math.radians(0.08)
    max_range: float = 80.0


@dataclass
class SynthSceneSpec:
    objects: list
    width: int = 1242
    height: int = 375
    focal: float = 721.5
    lidar: LidarPattern = field(default_factory=LidarPattern)
    depth_sigma: float = 0.0
    dropout: float = 0.0
    ground_y: float = 1.65

    @property
    def calibration(self) -> Calibration:
        return Calibration.from_intrinsics(self.focal, self.width / 2.0, self.height / 2.0, VELO_TO_CAM)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SynthSceneSpec":
        raw = json.loads(text)
        objects = [SynthObjectSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in o.items()})
                   for o in raw.pop("objects")]
        lidar = LidarPattern(**raw.pop("lidar", {}))
        return cls(objects=objects, lidar=lidar, **raw)


def _cast(dirs: np.ndarray, spec: SynthSceneSpec):
    """Nearest hit along rays from the origin: (t, surface id, color). id -1 = miss, 0 = ground."""
    n = len(dirs)
    t_best = np.full(n, np.inf)
    ident = np.full(n, -1, dtype=np.int64)
    dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]

    with np.errstate(divide="ignore", invalid="ignore"):
        t_ground = np.where(dy > 1e-12, spec.ground_y / dy, np.inf)
    hit = t_ground < t_best
    t_best[hit], ident[hit] = t_ground[hit], 0

    for k, obj in enumerate(spec.objects):
        cx, cy, cz = obj.centroid
        top, bottom = cy - obj.height / 2, cy + obj.height / 2
        a = dx * dx + dz * dz
        b = -2.0 * (dx * cx + dz * cz)
        c = cx * cx + cz * cz - obj.radius ** 2
        disc = b * b - 4 * a * c
        with np.errstate(invalid="ignore", divide="ignore"):
            t_side = (-b - np.sqrt(disc)) / (2 * a)
            y_side = t_side * dy
            side_ok = (disc >= 0) & (t_side > 0) & (y_side >= top) & (y_side <= bottom)
            t_cap = np.where(np.abs(dy) > 1e-12, top / dy, np.inf)
            cap_ok = (t_cap > 0) & ((t_cap * dx - cx) ** 2 + (t_cap * dz - cz) ** 2 <= obj.radius ** 2)
        for t_obj, ok in ((t_side, side_ok), (t_cap, cap_ok)):
            better = ok & (t_obj < t_best)
            t_best[better], ident[better] = t_obj[better], k + 1

    colors = np.zeros((n, 3), dtype=np.uint8)
    pts = dirs * np.where(np.isfinite(t_best), t_best, 0.0)[:, None]
    ground = ident == 0
    checker = (np.floor(pts[:, 0]) + np.floor(pts[:, 2])).astype(np.int64) % 2
    colors[ground] = np.array(GROUND_COLORS, dtype=np.uint8)[checker[ground]]
    for k, obj in enumerate(spec.objects):
        mine = ident == k + 1
        if not mine.any():
            continue
        colors[mine] = obj.base_color
        p = pts[mine]
        normal_angle = np.arctan2(p[:, 0] - obj.centroid[0], p[:, 2] - obj.centroid[2])
        heading_angle = math.atan2(math.cos(obj.yaw), -math.sin(obj.yaw))
        off = np.abs(np.mod(normal_angle - heading_angle + np.pi, 2 * np.pi) - np.pi)
        top = obj.centroid[1] - obj.height / 2
        y0, y1 = top + obj.stripe_band[0] * obj.height, top + obj.stripe_band[1] * obj.height
        on_side = np.hypot(p[:, 0] - obj.centroid[0], p[:, 2] - obj.centroid[2]) > obj.radius * (1 - 1e-9)
        stripe = on_side & (off <= obj.stripe_width / 2) & (p[:, 1] >= y0) & (p[:, 1] <= y1)
        sub = colors[mine]
        sub[stripe] = obj.marker_color
        colors[mine] = sub
    return t_best, ident, colors


def _lidar_dirs(spec: SynthSceneSpec) -> np.ndarray:
    pat = spec.lidar
    half_fov = math.atan2(spec.width / 2.0, spec.focal) + math.radians(2.0)
    az = np.arange(-half_fov, half_fov, pat.azimuth_resolution)
    el = np.linspace(pat.elevation_min, pat.elevation_max, pat.n_rings)
    ee, aa = np.meshgrid(el, az, indexing="ij")
    ee, aa = ee.ravel(), aa.ravel()
    return np.column_stack([np.cos(ee) * np.sin(aa), -np.sin(ee), np.cos(ee) * np.cos(aa)])


def _pixel_dirs(spec: SynthSceneSpec) -> np.ndarray:
    cx, cy = spec.width / 2.0, spec.height / 2.0
    v, u = np.mgrid[0 : spec.height, 0 : spec.width]
    return np.column_stack([((u - cx) / spec.focal).ravel(), ((v - cy) / spec.focal).ravel(),
                            np.ones(u.size)])


def image_camera(spec: SynthSceneSpec) -> VirtualCamera:
    return VirtualCamera(RigidPose.identity(), spec.focal, (spec.width / 2.0, spec.height / 2.0),
                         0.0, 0.0, spec.width, spec.height)


def render_image(spec: SynthSceneSpec):
    """RGB image and per-pixel surface id (-1 sky, 0 ground, k+1 object k)."""
    dirs = _pixel_dirs(spec)
    t, ident, colors = _cast(dirs, spec)
    hit = ident >= 0
    cloud = ColoredPointCloud(dirs[hit] * t[hit, None], colors[hit])
    cfg = ViewConfig(roi_width=spec.width, roi_height=spec.height, splat_radius=0, crop_to_object=False)
    roi = render_view(cloud, image_camera(spec), cfg)
    return roi.pixels, ident.reshape(spec.height, spec.width)


def sample_lidar(spec: SynthSceneSpec, rng: np.random.Generator) -> np.ndarray:
    """(N, 3) camera-frame returns with range noise and dropout applied."""
    dirs = _lidar_dirs(spec)
    t, ident, _ = _cast(dirs, spec)
    keep = (ident >= 0) & (t <= spec.lidar.max_range)
    t = t.copy()
    if spec.depth_sigma > 0:
        t = t + rng.normal(0.0, spec.depth_sigma, len(t))
    if spec.dropout > 0:
        keep &= rng.random(len(t)) >= spec.dropout
    keep &= t > 0
    return dirs[keep] * t[keep, None]


def _label_for(obj: SynthObjectSpec, ident: np.ndarray, k: int, spec: SynthSceneSpec) -> LabelRecord:
    rows, cols = np.nonzero(ident == k + 1)
    if len(rows):
        bbox = (float(cols.min()), float(rows.min()), float(cols.max()), float(rows.max()))
    else:
        bbox = (0.0, 0.0, 1.0, 1.0)
    cx, cy, cz = obj.centroid
    truncated = 0.0
    if len(rows) and (cols.min() == 0 or cols.max() == spec.width - 1):
        truncated = 0.5
    return LabelRecord(
        class_name="Pedestrian",
        bbox2d=bbox,
        dimensions=(obj.height, 2 * obj.radius, 2 * obj.radius),
        location=(cx, cy + obj.height / 2, cz),
        rotation_y=wrap_angle(obj.yaw),
        alpha=wrap_angle(obj.yaw - math.atan2(cx, cz)),
        truncated=truncated,
        occluded=0,
    )


def generate_frame(spec: SynthSceneSpec, seed: int = 0, frame_id: str = "000000"):
    """Deterministic frame and exact labels for a scene spec."""
    if not spec.objects:
        raise EmptyScene("scene has no objects")
    for obj in spec.objects:
        if obj.centroid[2] <= obj.radius:
            raise EmptyScene("objects must lie in front of the camera")
    rng = np.random.default_rng(seed)
    image, ident = render_image(spec)
    pts_cam = sample_lidar(spec, rng)
    # Stored in the sensor frame; VELO_TO_CAM is orthonormal so its transpose inverts it.
    pts_velo = pts_cam @ VELO_TO_CAM[:3, :3]
    scan = np.column_stack([pts_velo, np.full(len(pts_velo), 0.5)]).astype(np.float32)
    frame = Frame(image=image, scan=LidarScan(scan), calib=spec.calibration, frame_id=frame_id)
    labels = [_label_for(obj, ident, k, spec) for k, obj in enumerate(spec.objects)]
    return frame, labels


def random_scene(rng: np.random.Generator, n_objects: int = 2, marker_facing: bool = True,
                 depth_range=(5.0, 12.0), facing_spread: float = math.radians(40.0), **kwargs) -> SynthSceneSpec:
    """Random pedestrians spaced at least 1.5 m apart inside the camera's field of view.

    With ``marker_facing`` the observation angle (yaw minus viewing angle) is
    drawn within ``facing_spread`` of pi/2, i.e. the stripe faces the camera
    well enough to stay visible from every default virtual view.
    """
    spec = SynthSceneSpec(objects=[], **kwargs)
    half_fov = math.atan2(spec.width / 2.0, spec.focal) * 0.75
    objects = []
    attempts = 0
    while len(objects) < n_objects:
        attempts += 1
        if attempts > 1000:
            raise EmptyScene("could not place non-overlapping objects")
        z = rng.uniform(*depth_range)
        az = rng.uniform(-half_fov, half_fov)
        x = z * math.tan(az)
        if any(math.hypot(x - o.centroid[0], z - o.centroid[2]) < 1.5 for o in objects):
            continue
        height = 1.8
        if marker_facing:
            yaw = wrap_angle(math.atan2(x, z) + math.pi / 2 + rng.uniform(-facing_spread, facing_spread))
        else:
            yaw = rng.uniform(-math.pi, math.pi)
        objects.append(SynthObjectSpec(centroid=(x, spec.ground_y - height / 2, z), yaw=yaw, height=height))
    spec.objects = objects
    return spec


def _color_mask(pixels: np.ndarray, color, tol: int = 8) -> np.ndarray:
    return np.all(np.abs(pixels.astype(np.int16) - np.array(color, dtype=np.int16)) <= tol, axis=-1)


def analytic_marker_estimator(roi: RoiImage, cfg: ViewConfig | None = None,
                              object_radius: float | None = None, marker_color=MARKER_COLOR,
                              min_pixels: int = 12, edge_quantile: float = 0.03) -> float:
    """Local yaw (relative to the view's optical axis) read off the stripe position.

    Stripe pixels are lifted to 3D with the depth buffer and expressed as
    bearings around the object axis, which sits on the optical axis at
    ``radius_r``. The stripe centre is the midpoint of the bearing range
    (trimmed by ``edge_quantile`` at both ends); a mean would be pulled
    towards the camera because foreshortening packs more pixels onto the
    part of the stripe facing it. Bearing 0 faces the camera, i.e. local
    yaw pi/2.

    Depth completion takes the nearest depth in a neighbourhood, which
    moves oblique surface points towards the sensor. When ``object_radius``
    is given, the along-axis coordinate is shifted so the stripe's median
    distance from the axis equals that radius, removing most of this bias.
    """
    cfg = cfg or ViewConfig()
    marker = _color_mask(roi.pixels, marker_color) & (roi.depth_buffer > 0)
    if np.count_nonzero(marker) < min_pixels:
        raise MarkerNotVisible("stripe not found in the view")
    rows, cols = np.nonzero(marker)
    z = roi.depth_buffer[rows, cols]
    x = (cols - cfg.principal[0]) * z / cfg.focal
    toward = cfg.radius_r - z  # distance from the axis towards the camera
    if float(np.median(toward)) <= 0:
        # Stripe on the far side of the axis: it cannot face this camera.
        raise MarkerNotVisible("stripe is behind the object axis")
    if object_radius is not None:
        toward = toward - (float(np.median(np.hypot(x, toward))) - object_radius)
    bearing = np.arctan2(x, toward)
    lo, hi = np.quantile(bearing, [edge_quantile, 1.0 - edge_quantile])
    return wrap_angle(math.pi / 2 - 0.5 * float(lo + hi))
