import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vmvs.detections import Detection3D
from vmvs.errors import CentroidBehindCamera, ConfigError, EmptyIntersection
from vmvs.geometry import ColoredPointCloud, rotation_about_y
from vmvs.view_synthesis import (ViewConfig, place_cameras, render_view, render_view_painter, roi_crop,
                                 synthesize_views)

CENTROID = np.array([1.5, 0.4, 9.0])


def random_cloud(rng, n, center=CENTROID, spread=0.6, snap=True):
    pts = center + rng.normal(scale=spread, size=(n, 3))
    if snap:
        # Snap some depths together so (depth, index) ties get exercised.
        pts[: n // 4, 2] = np.round(pts[: n // 4, 2], 1)
    return ColoredPointCloud(pts, rng.integers(1, 256, (n, 3), dtype=np.uint8))


# --- place_cameras ---------------------------------------------------------

def test_default_cameras_spacing_distance_level():
    cams = place_cameras(CENTROID)
    assert len(cams) == 11
    offsets = np.array([c.azimuth_offset for c in cams])
    np.testing.assert_allclose(np.diff(offsets), math.radians(5.0), atol=1e-9)
    np.testing.assert_allclose([offsets[0], offsets[-1]], [-math.radians(25), math.radians(25)], atol=1e-12)
    alpha = math.atan2(CENTROID[0], CENTROID[2])
    for cam in cams:
        c = cam.center
        assert math.hypot(c[0] - CENTROID[0], c[2] - CENTROID[2]) == pytest.approx(4.0, abs=1e-9)
        assert c[1] == pytest.approx(CENTROID[1], abs=1e-9)
        assert cam.view_azimuth == pytest.approx(alpha + cam.azimuth_offset, abs=1e-12)
        uv = cam.project([CENTROID])[0]
        assert np.all(np.abs(uv - np.array(cam.principal)) <= 0.5)


def test_single_camera_on_viewing_ray():
    (cam,) = place_cameras(CENTROID, ViewConfig(n_views=1))
    ray = CENTROID / np.linalg.norm(CENTROID[[0, 2]])
    expected = CENTROID - 4.0 * np.array([ray[0], 0.0, ray[2]])
    np.testing.assert_allclose(cam.center, expected, atol=1e-9)
    assert cam.azimuth_offset == 0.0


def test_three_views_at_endpoints():
    cams = place_cameras(CENTROID, ViewConfig(n_views=3))
    np.testing.assert_allclose([c.azimuth_offset for c in cams], np.radians([-25, 0, 25]), atol=1e-12)


def test_focal_from_nominal_height():
    cfg = ViewConfig()
    assert cfg.focal == pytest.approx(224 * 4.0 * 0.8 / 1.8)
    assert place_cameras(CENTROID)[0].principal == (112.0, 112.0)


def test_centroid_behind_camera():
    with pytest.raises(CentroidBehindCamera):
        place_cameras((0.0, 0.0, -2.0))


@pytest.mark.parametrize("bad", [dict(n_views=0), dict(rho_max=0.0), dict(radius_r=-1.0), dict(roi_width=0)])
def test_view_config_validation(bad):
    with pytest.raises(ConfigError):
        ViewConfig(**bad)


@settings(max_examples=100, deadline=None)
@given(st.floats(-20, 20), st.floats(-2, 2), st.floats(0.5, 60), st.integers(1, 15), st.floats(1, 50))
def test_placement_property(x, y, z, n_views, rho_deg):
    centroid = np.array([x, y, z])
    cfg = ViewConfig(n_views=n_views, rho_max=math.radians(rho_deg), radius_r=3.0)
    for cam in place_cameras(centroid, cfg):
        c = cam.center
        assert math.hypot(c[0] - x, c[2] - z) == pytest.approx(3.0, abs=1e-9)
        assert abs(c[1] - y) <= 1e-9
        assert np.all(np.abs(cam.project([centroid])[0] - cam.principal) <= 0.5)


# --- render_view -----------------------------------------------------------

def test_single_point_splat():
    (cam,) = place_cameras(CENTROID, ViewConfig(n_views=1))
    roi = render_view(ColoredPointCloud([CENTROID], [(255, 0, 0)]), cam)
    red = np.all(roi.pixels == (255, 0, 0), axis=-1)
    assert red.sum() == 25
    rows, cols = np.nonzero(red)
    assert (rows.min(), rows.max(), cols.min(), cols.max()) == (110, 114, 110, 114)
    assert roi.depth_buffer[112, 112] == pytest.approx(4.0)
    assert not roi.pixels[~red].any()


def test_nearer_point_wins():
    (cam,) = place_cameras(CENTROID, ViewConfig(n_views=1))
    ray = (CENTROID - cam.center) / 4.0
    cloud = ColoredPointCloud([CENTROID + 0.5 * ray, CENTROID], [(255, 0, 0), (0, 0, 255)])
    roi = render_view(cloud, cam)
    assert tuple(roi.pixels[112, 112]) == (0, 0, 255)
    assert roi.depth_buffer[112, 112] == pytest.approx(4.0)


def test_equal_depth_tie_goes_to_lowest_index():
    (cam,) = place_cameras(CENTROID, ViewConfig(n_views=1))
    cloud = ColoredPointCloud([CENTROID, CENTROID], [(9, 9, 9), (200, 0, 0)])
    assert tuple(render_view(cloud, cam).pixels[112, 112]) == (9, 9, 9)


def test_empty_cloud_renders_background():
    (cam,) = place_cameras(CENTROID, ViewConfig(n_views=1))
    roi = render_view(ColoredPointCloud(np.zeros((0, 3)), np.zeros((0, 3))), cam)
    assert not roi.pixels.any() and not roi.depth_buffer.any()


@pytest.mark.parametrize("depth_scaled", [False, True])
def test_matches_painter_oracle(depth_scaled):
    rng = np.random.default_rng(4)
    cfg = ViewConfig(depth_scaled_splats=depth_scaled, roi_width=96, roi_height=80)
    for trial in range(15):
        cloud = random_cloud(rng, int(rng.integers(1, 200)))
        for cam in place_cameras(CENTROID, cfg)[:: 5]:
            fast = render_view(cloud, cam, cfg)
            slow = render_view_painter(cloud, cam, cfg)
            assert fast.pixels.tobytes() == slow.pixels.tobytes()
            assert fast.depth_buffer.tobytes() == slow.depth_buffer.tobytes()


def test_thread_count_invariance():
    rng = np.random.default_rng(5)
    cloud = random_cloud(rng, 1000)
    cam = place_cameras(CENTROID)[3]
    ref = render_view(cloud, cam)
    for workers in (2, 3, 8):
        out = render_view(cloud, cam, workers=workers)
        assert out.pixels.tobytes() == ref.pixels.tobytes()
        assert out.depth_buffer.tobytes() == ref.depth_buffer.tobytes()


# --- synthesize_views ------------------------------------------------------

def _det(centroid):
    return Detection3D(centroid=tuple(centroid), dims=(0.6, 1.8, 0.6), yaw=0.0)


def test_synthesize_defaults():
    rng = np.random.default_rng(6)
    views = synthesize_views(random_cloud(rng, 500, spread=0.3), _det(CENTROID))
    assert len(views.images) == len(views.cameras) == 11
    assert all(img.pixels.shape == (224, 224, 3) for img in views.images)
    assert views.object_viewing_angle_alpha == pytest.approx(math.atan2(1.5, 9.0))


def test_synthesize_axis_centroid_alpha_zero():
    cloud = ColoredPointCloud([(0.0, 0.0, 10.0)], [(1, 2, 3)])
    views = synthesize_views(cloud, _det((0.0, 0.0, 10.0)), ViewConfig(n_views=3))
    assert views.object_viewing_angle_alpha == 0.0
    assert len(views.images) == 3


def test_view_parallelism_invariance():
    rng = np.random.default_rng(7)
    cloud = random_cloud(rng, 800, spread=0.3)
    a = synthesize_views(cloud, _det(CENTROID), workers=1)
    b = synthesize_views(cloud, _det(CENTROID), workers=4)
    for x, y in zip(a.images, b.images):
        assert x.pixels.tobytes() == y.pixels.tobytes()


def test_canonical_views_independent_of_object_azimuth():
    """A cloud swung about the camera's vertical axis renders the same views."""
    rng = np.random.default_rng(8)
    base = np.array([0.0, 0.3, 8.0])
    cloud = random_cloud(rng, 2000, center=base, spread=0.15, snap=False)
    for degrees in (5.0, 17.0, -30.0):
        rot = rotation_about_y(math.radians(degrees))
        turned = ColoredPointCloud(cloud.points @ rot.T, cloud.colors)
        a = synthesize_views(cloud, _det(base))
        b = synthesize_views(turned, _det(rot @ base))
        for x, y in zip(a.images, b.images):
            assert np.array_equal(x.pixels, y.pixels)


# --- roi_crop ------------------------------------------------------------

def test_roi_crop_identity():
    rng = np.random.default_rng(9)
    image = rng.integers(0, 256, (30, 40, 3), dtype=np.uint8)
    roi = roi_crop(image, (0, 0, 40, 30), ViewConfig(roi_width=40, roi_height=30))
    np.testing.assert_array_equal(roi.pixels, image)


def test_roi_crop_outside_image():
    with pytest.raises(EmptyIntersection):
        roi_crop(np.zeros((30, 40, 3), np.uint8), (50, 0, 60, 10))


def test_roi_crop_downscale_constant():
    image = np.full((40, 60, 3), 77, dtype=np.uint8)
    roi = roi_crop(image, (0, 0, 60, 40), ViewConfig(roi_width=30, roi_height=20))
    assert roi.pixels.shape == (20, 30, 3) and np.all(roi.pixels == 77)
