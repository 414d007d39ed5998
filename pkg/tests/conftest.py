"""Shared fixtures: small synthetic scenes and the acceptance-criterion reporter."""
from __future__ import annotations

import math

import numpy as np
import pytest

from vmvs.detections import Detection3D
from vmvs.kitti_io import Calibration, Frame, LidarScan
from vmvs.synth import SynthObjectSpec, SynthSceneSpec, generate_frame

_ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for the acceptance summary and assert on it."""

    def report(name: str, passed: bool, detail: str = "") -> None:
        line = f"{'PASS' if passed else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert passed, line

    return report


def frontal_spec(yaw: float = math.pi / 2, centroid=(0.0, 0.75, 10.0), **kwargs) -> SynthSceneSpec:
    """One pedestrian; yaw pi/2 turns the stripe towards a camera straight ahead."""
    return SynthSceneSpec(objects=[SynthObjectSpec(centroid=centroid, yaw=yaw)], **kwargs)


@pytest.fixture(scope="session")
def frontal_frame():
    frame, labels = generate_frame(frontal_spec(), seed=0, frame_id="000007")
    return frame, labels


def cylinder_frame(frame_id: str = "000000", yaws=(0.3,), xs=(0.0,), z: float = 8.0,
                   size: int = 48) -> tuple:
    """Tiny frame: rings of LiDAR points on upright cylinders, colored by bearing.

    Cheap enough to push through the full pipeline hundreds of times.
    """
    focal = size * 1.5
    calib = Calibration.from_intrinsics(focal, size / 2.0, size / 2.0)
    pts, dets = [], []
    bearings = np.linspace(-math.pi / 2, math.pi / 2, 25)
    heights = np.linspace(-0.8, 0.8, 17)
    for x, yaw in zip(xs, yaws):
        bb, hh = np.meshgrid(bearings, heights)
        # Camera-facing half of a 0.3 m cylinder centred at (x, 0, z).
        px = x + 0.3 * np.sin(bb.ravel())
        pz = z - 0.3 * np.cos(bb.ravel())
        pts.append(np.column_stack([px, hh.ravel(), pz]))
        u = focal * x / z + size / 2.0
        dets.append(Detection3D(centroid=(x, 0.0, z), dims=(0.6, 1.8, 0.6), yaw=yaw, score=0.9,
                                bbox2d=(u - 4.0, size / 2 - 10.0, u + 4.0, size / 2 + 10.0)))
    xyz = np.concatenate(pts)
    v, u = np.mgrid[0:size, 0:size]
    image = np.stack([(u * 5) % 256, (v * 5) % 256, np.full_like(u, 128)], axis=-1).astype(np.uint8)
    scan = LidarScan(np.column_stack([xyz, np.full(len(xyz), 0.5)]))
    return Frame(image=image, scan=scan, calib=calib, frame_id=frame_id), dets
