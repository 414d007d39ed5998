import dataclasses
import math
import time

import numpy as np
import pytest

from conftest import cylinder_frame
from vmvs import pipeline
from vmvs.ablation import (REPRESENTATION_GRID, VIEWPOINT_GRID, AblationConfig, AblationDataset, format_rows,
                           prepare_split, rows_csv, run_ablation, view_samples)
from vmvs.config import PipelineConfig
from vmvs.detections import Detection2D, Detection3D
from vmvs.errors import EmptyDataset, InputError, MarkerNotVisible
from vmvs.estimators import ExternalFileEstimator, OracleViewEstimator, ViewContext
from vmvs.orientation.angles import angle_diff, encode_angle_vector
from vmvs.orientation.toy_model import TrainConfig
from vmvs.pipeline import STAGES, bench, build_estimator, run_frame, run_frames
from vmvs.view_synthesis import ViewConfig, synthesize_views

SMALL_VIEW = ViewConfig(roi_width=32, roi_height=32, splat_radius=1)


def small_cfg(**kwargs) -> PipelineConfig:
    return PipelineConfig(view=kwargs.pop("view", SMALL_VIEW), **kwargs)


def three_objects(frame_id="000000"):
    frame, dets = cylinder_frame(frame_id, yaws=(0.3, -1.2, 2.5), xs=(-1.5, 0.0, 1.5))
    scored = [d.with_(score=s) for d, s in zip(dets, (0.5, 0.9, 0.7))]
    return frame, scored


class GlobalYawEstimator:
    """Returns the detection's ground-truth yaw in each view's local frame."""

    def __init__(self, truth):
        self.truth = truth

    def __call__(self, roi, cam, ctx):
        return encode_angle_vector(self.truth[ctx.detection.centroid] - cam.view_azimuth)


# --- run_frame -------------------------------------------------------------

def test_oracle_zero_noise_recovers_ground_truth(frontal_frame):
    frame, labels = frontal_frame
    gts = [Detection3D.from_label(rec) for rec in labels]
    cfg = PipelineConfig(estimator="oracle")
    est = build_estimator(cfg, ground_truth={frame.frame_id: gts})
    dets = [g.with_(yaw=g.yaw - 0.7) for g in gts]
    result = run_frame(frame, dets, None, cfg, est)
    for out, gt, inp in zip(result.detections, gts, dets):
        assert abs(angle_diff(out.yaw, gt.yaw)) <= 1e-6
        assert out.centroid == inp.centroid and out.dims == inp.dims
    assert result.n_processed == 1 and result.n_fallback == 0
    assert set(result.timings) == set(STAGES)


def test_zero_detections_skip_densification(monkeypatch):
    frame, _ = cylinder_frame()

    def boom(*args, **kwargs):
        raise AssertionError("densification should not run")

    monkeypatch.setattr(pipeline, "frame_cloud", boom)
    result = run_frame(frame, [], [], small_cfg(), lambda *a: None)
    assert result.detections == []
    assert result.timings["densify"] == 0.0 and result.n_processed == 0


def test_yaw_only_modification_with_suppression():
    frame, dets = three_objects()
    truth = {d.centroid: d.yaw + 0.4 for d in dets}
    dets2d = [Detection2D(dets[1].bbox2d, 0.8), Detection2D((0.0, 0.0, 1.0, 1.0), 0.3)]
    result = run_frame(frame, dets, dets2d, small_cfg(), GlobalYawEstimator(truth))
    assert len(result.detections) == len(dets)
    for before, after in zip(dets, result.detections):
        assert after == dataclasses.replace(before, yaw=after.yaw, score=after.score, bbox2d=after.bbox2d)
        assert abs(angle_diff(after.yaw, truth[before.centroid])) < 1e-9
    assert [d.score for d in result.detections] == pytest.approx([0.05, 0.9, 0.07])


def test_top_k_limits_processing():
    frame, dets = three_objects()
    truth = {d.centroid: d.yaw + 0.4 for d in dets}
    result = run_frame(frame, dets, None, small_cfg(top_k_per_frame=1), GlobalYawEstimator(truth))
    assert result.n_processed == 1 and list(result.estimates) == [1]
    assert result.detections[0] is dets[0] and result.detections[2] is dets[2]
    assert result.detections[1].yaw != dets[1].yaw


def test_unusable_views_fall_back_to_input_yaw():
    frame, dets = three_objects()

    def never(roi, cam, ctx):
        raise MarkerNotVisible("nothing here")

    result = run_frame(frame, dets, None, small_cfg(), never)
    assert result.detections == dets
    assert result.n_fallback == 3 and result.n_processed == 3


def test_cancelling_views_use_strongest():
    frame, dets = cylinder_frame(yaws=(0.5,))
    cfg = small_cfg(view=dataclasses.replace(SMALL_VIEW, n_views=2))

    def opposed(roi, cam, ctx):
        if ctx.view_index == 0:
            return encode_angle_vector(0.5 - cam.view_azimuth)
        vec = encode_angle_vector(0.5 + math.pi - cam.view_azimuth)
        return type(vec)(2 * vec.x_theta, 2 * vec.y_theta)

    result = run_frame(frame, dets, None, cfg, opposed)
    assert result.n_strongest_view == 1
    assert abs(angle_diff(result.detections[0].yaw, 0.5 + math.pi)) < 1e-9


def test_global_frame_estimates():
    frame, dets = three_objects()
    truth = {d.centroid: d.yaw - 0.2 for d in dets}
    cfg = small_cfg(estimator_frame="global")
    result = run_frame(frame, dets, None, cfg, lambda roi, cam, ctx: encode_angle_vector(truth[ctx.detection.centroid]))
    for before, after in zip(dets, result.detections):
        assert abs(angle_diff(after.yaw, truth[before.centroid])) < 1e-9


def test_parallel_frames_match_serial():
    items = []
    gt = {}
    for k in range(4):
        frame, dets = three_objects(f"{k:06d}")
        items.append((frame, dets, None))
        gt[frame.frame_id] = dets
    est = OracleViewEstimator(gt, math.radians(10), seed=3)
    serial = run_frames(items, small_cfg(), est, workers=1)
    parallel = run_frames(items, small_cfg(), est, workers=3)
    assert [r.detections for r in serial] == [r.detections for r in parallel]


def _aae_over_frames(n_views: int, n_frames: int = 100) -> float:
    view = dataclasses.replace(SMALL_VIEW, n_views=n_views)
    cfg = small_cfg(view=view, estimator="oracle", oracle_sigma_deg=20.0, seed=7)
    errors = []
    for k in range(n_frames):
        frame, gts = cylinder_frame(f"{k:06d}", yaws=(0.1 * k,))
        est = build_estimator(cfg, ground_truth={frame.frame_id: gts})
        out = run_frame(frame, gts, None, cfg, est).detections
        errors.append(abs(angle_diff(out[0].yaw, gts[0].yaw)))
    return float(np.mean(errors))


def test_eleven_noisy_views_beat_one():
    single, multi = _aae_over_frames(1), _aae_over_frames(11)
    assert multi < single


# --- estimators ------------------------------------------------------------

def test_oracle_noise_is_reproducible():
    det = Detection3D((0.0, 0.0, 10.0), (0.6, 1.8, 0.6), 0.3)
    est = OracleViewEstimator({"a": [det]}, sigma=0.2, seed=5)
    cam = synthesize_views(_tiny_cloud(), det, SMALL_VIEW).cameras[4]
    ctx = ViewContext("a", 0, 4, det)
    assert est(None, cam, ctx) == est(None, cam, ctx)
    assert est(None, cam, ctx) != est(None, cam, ViewContext("a", 0, 5, det))
    with pytest.raises(MarkerNotVisible):
        est(None, cam, ViewContext("other", 0, 4, det))


def _tiny_cloud():
    frame, _ = cylinder_frame()
    return pipeline.frame_cloud(frame, small_cfg())


def test_external_file_estimator(tmp_path):
    path = tmp_path / "pred.csv"
    path.write_text("frame_id,object_index,view_index,x_theta,y_theta\n000000,0,1,0.0,1.0\n000000,0,2,nan,1\n")
    est = ExternalFileEstimator.from_csv(path)
    det = Detection3D((0.0, 0.0, 10.0), (0.6, 1.8, 0.6), 0.3)
    assert tuple(est(None, None, ViewContext("000000", 0, 1, det))) == (0.0, 1.0)
    for view in (0, 2):
        with pytest.raises(MarkerNotVisible):
            est(None, None, ViewContext("000000", 0, view, det))


def test_build_estimator_requirements():
    with pytest.raises(InputError):
        build_estimator(PipelineConfig(estimator="oracle"))
    with pytest.raises(InputError):
        build_estimator(PipelineConfig(estimator="toy"))
    with pytest.raises(InputError):
        build_estimator(PipelineConfig(estimator="external-file"))


# --- bench -------------------------------------------------------------------

def test_bench_structure_single_frame(frontal_frame):
    frame, labels = frontal_frame
    dets = [Detection3D.from_label(rec) for rec in labels]
    report = bench([(frame, dets, [Detection2D(d.bbox2d) for d in dets])], PipelineConfig(),
                   build_estimator(PipelineConfig()))
    assert list(report["stages"]) == list(STAGES)
    assert report["n_frames"] == 1 and report["n_objects"] == 1 and report["n_views"] == 11
    assert all(report["stages"][s]["count"] == 1 for s in STAGES)


def test_bench_ten_frames_and_empty():
    items = [(three_objects(f"{k:06d}")[0], three_objects()[1], []) for k in range(10)]
    report = bench(items, small_cfg(), GlobalYawEstimator({d.centroid: 0.0 for d in items[0][1]}))
    for stats in report["stages"].values():
        assert stats["count"] == 10
        assert stats["median"] <= stats["p95"] + 1e-12
    with pytest.raises(InputError):
        bench([], small_cfg(), None)


def test_render_time_scales_linearly_with_views(frontal_frame):
    frame, labels = frontal_frame
    det = Detection3D.from_label(labels[0])
    cloud = pipeline.frame_cloud(frame, PipelineConfig())
    counts = np.array([1, 3, 6, 11])
    times = []
    for n in counts:
        cfg = ViewConfig(n_views=int(n))
        best = math.inf
        for _ in range(3):
            t0 = time.perf_counter()
            synthesize_views(cloud, det, cfg)
            best = min(best, time.perf_counter() - t0)
        times.append(best)
    slope, intercept = np.polyfit(counts, times, 1)
    pred = slope * counts + intercept
    r2 = 1 - np.sum((times - pred) ** 2) / np.sum((times - np.mean(times)) ** 2)
    assert slope > 0 and r2 > 0.9


# --- ablation ----------------------------------------------------------------

def test_grids_have_expected_rows():
    bins = [c for c in REPRESENTATION_GRID if c.head == "bins"]
    assert [c.n_bins for c in bins] == [4, 8, 12, 16]
    virtual = [c.n_views for c in VIEWPOINT_GRID if c.viewpoint == "virtual"]
    assert virtual == [1, 3, 6, 11, 15]
    assert sum(c.viewpoint == "roi-crop" for c in VIEWPOINT_GRID) == 1
    with pytest.raises(ValueError):
        AblationConfig("bad", head="quaternion")


def _tiny_dataset():
    def split(offset, n):
        out = []
        for k in range(n):
            frame, dets = cylinder_frame(f"{offset + k:06d}", yaws=(0.4 * k, -0.4 * k), xs=(-1.0, 1.0))
            out.append((frame, dets))
        return prepare_split(out)

    return AblationDataset(split(0, 3), split(100, 2))


def test_run_ablation_viewpoint_rows():
    rows = run_ablation(_tiny_dataset(), VIEWPOINT_GRID, SMALL_VIEW, TrainConfig(epochs=2))
    assert [r.config for r in rows] == list(VIEWPOINT_GRID)
    assert rows[0].n_train_samples == 6
    assert [r.n_train_samples for r in rows[1:]] == [6 * n for n in (1, 3, 6, 11, 15)]
    for r in rows:
        assert 0.0 <= r.os <= 1.0 and 0.0 <= r.aae_deg <= 180.0 and r.n_val_objects == 4
    assert len(format_rows(rows).splitlines()) == 8
    assert len(rows_csv(rows).splitlines()) == 7


def test_view_samples_targets_are_local():
    data = _tiny_dataset()
    samples = view_samples(data.train, "virtual", dataclasses.replace(SMALL_VIEW, n_views=3))
    assert len(samples) == 3 * 2 * 3
    det = data.train[0][1][0]
    cams = synthesize_views(data.train[0][2], det, dataclasses.replace(SMALL_VIEW, n_views=3)).cameras
    for (roi, target), cam in zip(samples[:3], cams):
        assert abs(angle_diff(target, det.yaw - cam.view_azimuth)) < 1e-12


def test_empty_ablation_dataset():
    with pytest.raises(EmptyDataset):
        run_ablation(AblationDataset([], []), REPRESENTATION_GRID)
