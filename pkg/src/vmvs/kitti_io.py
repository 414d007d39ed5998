"""Readers and writers for the KITTI object-detection file layout.

Calibration text, label text, velodyne binaries and 8-bit RGB / 16-bit depth
PNG rasters. Everything here is a pure function of its input.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .errors import FieldCount, InputError, MalformedNumber, MissingKey, TruncatedRecord
from .orientation.angles import wrap_angle

# Slack for angles written with 6 decimals: 3.141593 > pi but is pi, not -pi.
_ANGLE_SLACK = 1e-6


@dataclass(frozen=True)
class Calibration:
    """Camera projection P2 plus an optional velodyne->rectified-camera transform."""

    p_cam: np.ndarray
    velo_to_cam: Optional[np.ndarray] = None

    def __post_init__(self):
        p = np.asarray(self.p_cam, dtype=np.float64).reshape(3, 4)
        object.__setattr__(self, "p_cam", p)
        if self.velo_to_cam is not None:
            object.__setattr__(
                self, "velo_to_cam", np.asarray(self.velo_to_cam, dtype=np.float64).reshape(4, 4)
            )

    @property
    def focal(self) -> float:
        return float(self.p_cam[0, 0])

    @property
    def principal(self) -> tuple[float, float]:
        return float(self.p_cam[0, 2]), float(self.p_cam[1, 2])

    @classmethod
    def from_intrinsics(cls, focal, cx, cy, velo_to_cam=None) -> "Calibration":
        p = np.array([[focal, 0.0, cx, 0.0], [0.0, focal, cy, 0.0], [0.0, 0.0, 1.0, 0.0]])
        return cls(p, velo_to_cam)


@dataclass
class LidarScan:
    """(N, 4) float32 array of x, y, z, intensity in the sensor frame."""

    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 4), np.float32))

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float32).reshape(-1, 4)

    def __len__(self):
        return len(self.points)


@dataclass
class LabelRecord:
    class_name: str
    bbox2d: tuple
    dimensions: tuple  # (height, width, length)
    location: tuple  # bottom centre, camera frame
    rotation_y: float
    alpha: float
    score: Optional[float] = None
    truncated: float = 0.0
    occluded: int = 0


@dataclass
class Frame:
    image: np.ndarray  # (H, W, 3) uint8
    scan: LidarScan
    calib: Calibration
    frame_id: str = "000000"

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[0] == 0 or self.image.shape[1] == 0:
            raise InputError(f"bad image shape {self.image.shape}")

    @property
    def width(self) -> int:
        return self.image.shape[1]

    @property
    def height(self) -> int:
        return self.image.shape[0]


def _floats(tokens, key):
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise MalformedNumber(f"{key}: {exc}") from None


def parse_calibration(raw_text: str) -> Calibration:
    entries = {}
    for line in raw_text.splitlines():
        if ":" not in line:
            continue
        key, _, rest = line.partition(":")
        entries[key.strip()] = rest.split()

    if "P2" not in entries:
        raise MissingKey("calibration has no P2 line")
    p2 = _floats(entries["P2"], "P2")
    if len(p2) != 12:
        raise MalformedNumber(f"P2 needs 12 values, got {len(p2)}")
    p_cam = np.array(p2).reshape(3, 4)

    velo_to_cam = None
    if "Tr_velo_to_cam" in entries:
        vals = _floats(entries["Tr_velo_to_cam"], "Tr_velo_to_cam")
        if len(vals) == 12:
            velo_to_cam = np.vstack([np.array(vals).reshape(3, 4), [0, 0, 0, 1]])
        elif len(vals) == 16:
            velo_to_cam = np.array(vals).reshape(4, 4)
        else:
            raise MalformedNumber(f"Tr_velo_to_cam needs 12 or 16 values, got {len(vals)}")
        # Rectification is folded in so that scans land in the rectified frame P2 expects.
        if "R0_rect" in entries:
            r0 = _floats(entries["R0_rect"], "R0_rect")
            if len(r0) != 9:
                raise MalformedNumber(f"R0_rect needs 9 values, got {len(r0)}")
            rect = np.eye(4)
            rect[:3, :3] = np.array(r0).reshape(3, 3)
            velo_to_cam = rect @ velo_to_cam
    return Calibration(p_cam, velo_to_cam)


def write_calibration(calib: Calibration) -> str:
    def fmt(values):
        return " ".join(f"{v:.12e}" for v in np.ravel(values))

    lines = [f"P2: {fmt(calib.p_cam)}"]
    if calib.velo_to_cam is not None:
        lines.append(f"Tr_velo_to_cam: {fmt(calib.velo_to_cam[:3])}")
    return "\n".join(lines) + "\n"


def _tolerant_angle(value: float) -> float:
    if abs(value) <= math.pi:
        return value
    if abs(value) <= math.pi + _ANGLE_SLACK:
        return math.copysign(math.pi, value)
    return wrap_angle(value)


def parse_labels(raw_text: str) -> list[LabelRecord]:
    records = []
    for lineno, line in enumerate(raw_text.splitlines(), 1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) not in (15, 16):
            raise FieldCount(f"line {lineno}: expected 15 or 16 fields, got {len(fields)}")
        nums = _floats(fields[1:], f"line {lineno}")
        records.append(
            LabelRecord(
                class_name=fields[0],
                truncated=nums[0],
                occluded=int(round(nums[1])),
                alpha=_tolerant_angle(nums[2]),
                bbox2d=tuple(nums[3:7]),
                dimensions=tuple(nums[7:10]),
                location=tuple(nums[10:13]),
                rotation_y=_tolerant_angle(nums[13]),
                score=nums[14] if len(nums) == 15 else None,
            )
        )
    return records


def write_labels(records) -> str:
    lines = []
    for r in records:
        reals = [r.alpha, *r.bbox2d, *r.dimensions, *r.location, r.rotation_y]
        parts = [r.class_name, f"{r.truncated:.6f}", str(int(r.occluded))]
        parts += [f"{v:.6f}" for v in reals]
        if r.score is not None:
            parts.append(f"{r.score:.6f}")
        lines.append(" ".join(parts))
    return "".join(line + "\n" for line in lines)


def read_lidar_bin(raw_bytes: bytes) -> LidarScan:
    if len(raw_bytes) % 16:
        raise TruncatedRecord(f"{len(raw_bytes)} bytes is not a whole number of 16-byte points")
    return LidarScan(np.frombuffer(raw_bytes, dtype="<f4").reshape(-1, 4).copy())


def write_lidar_bin(scan: LidarScan) -> bytes:
    return np.ascontiguousarray(scan.points, dtype="<f4").tobytes()


def scan_to_camera(scan: LidarScan, calib: Calibration) -> np.ndarray:
    """Sensor-frame points as (N, 3) float64 in the rectified camera frame."""
    xyz = scan.points[:, :3].astype(np.float64)
    if calib.velo_to_cam is None:
        return xyz
    t = calib.velo_to_cam
    return xyz @ t[:3, :3].T + t[:3, 3]


def read_image(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.array(img.convert("RGB"), dtype=np.uint8)


def write_image(path, image: np.ndarray) -> None:
    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB").save(path)


def write_depth_png(path, depth: np.ndarray) -> None:
    """16-bit PNG with depth * 256; zero marks invalid pixels."""
    scaled = np.clip(np.round(np.asarray(depth) * 256.0), 0, 65535).astype(np.uint16)
    Image.fromarray(scaled).save(path)


def read_depth_png(path) -> np.ndarray:
    with Image.open(path) as img:
        raw = np.array(img, dtype=np.float64)
    return raw / 256.0


def read_frame(root, frame_id: str) -> Frame:
    """Load one frame from a KITTI-style directory (image_2/, velodyne/, calib/)."""
    root = Path(root)
    calib = parse_calibration((root / "calib" / f"{frame_id}.txt").read_text())
    scan = read_lidar_bin((root / "velodyne" / f"{frame_id}.bin").read_bytes())
    image = read_image(root / "image_2" / f"{frame_id}.png")
    return Frame(image=image, scan=scan, calib=calib, frame_id=frame_id)


def write_frame(root, frame: Frame, labels=None) -> None:
    root = Path(root)
    for sub in ("calib", "velodyne", "image_2", "label_2"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    (root / "calib" / f"{frame.frame_id}.txt").write_text(write_calibration(frame.calib))
    (root / "velodyne" / f"{frame.frame_id}.bin").write_bytes(write_lidar_bin(frame.scan))
    write_image(root / "image_2" / f"{frame.frame_id}.png", frame.image)
    if labels is not None:
        (root / "label_2" / f"{frame.frame_id}.txt").write_text(write_labels(labels))


def list_frames(root) -> list[str]:
    return sorted(p.stem for p in (Path(root) / "image_2").glob("*.png"))
