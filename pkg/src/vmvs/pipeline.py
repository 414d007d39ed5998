"""End-to-end orientation refinement for one frame or a set of frames.

Only the yaw of each processed 3D detection is replaced; centroids and
dimensions pass through as given. Scores (and optionally 2D boxes) change
afterwards in the false-positive suppression step.
"""
from __future__ import annotations

import dataclasses
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .depth_completion import densify
from .errors import DegenerateFusion, DegenerateVector, InputError, MarkerNotVisible
from .estimators import (ExternalFileEstimator, MarkerViewEstimator, OracleViewEstimator,
                         ToyViewEstimator, ViewContext)
from .evaluation.suppression import suppress_false_positives
from .geometry import ColoredPointCloud, depth_map_to_cloud, project_points
from .kitti_io import Frame, scan_to_camera
from .orientation.angles import decode_angle_vector, fuse_estimates, wrap_angle
from .orientation.fusion import OrientationEstimate
from .orientation.toy_model import ToyEstimator
from .view_synthesis import synthesize_views

log = logging.getLogger(__name__)

STAGES = ("densify", "render", "estimate", "suppress")
_VIEW_FAILURES = (MarkerNotVisible, DegenerateVector)


@dataclass
class FrameResult:
    detections: list
    timings: dict  # stage -> seconds
    n_processed: int = 0
    n_fallback: int = 0  # no usable view: input yaw kept
    n_strongest_view: int = 0  # fusion cancelled out: best single view used
    estimates: dict = field(default_factory=dict)  # detection index -> OrientationEstimate


def build_estimator(cfg: PipelineConfig, ground_truth: dict | None = None,
                    model: ToyEstimator | None = None):
    """Instantiate the per-view estimator named by ``cfg.estimator``."""
    if cfg.estimator == "marker":
        return MarkerViewEstimator(cfg.view)
    if cfg.estimator == "oracle":
        if ground_truth is None:
            raise InputError("the oracle estimator needs ground-truth labels")
        return OracleViewEstimator(ground_truth, math.radians(cfg.oracle_sigma_deg), cfg.seed)
    if cfg.estimator == "external-file":
        if not cfg.external_path:
            raise InputError("external-file estimator needs external_path")
        return ExternalFileEstimator.from_csv(cfg.external_path)
    if model is None:
        if not cfg.model_path:
            raise InputError("toy estimator needs model_path")
        with open(cfg.model_path, "rb") as fh:
            model = ToyEstimator.from_bytes(fh.read())
    return ToyViewEstimator(model)


def frame_cloud(frame: Frame, cfg: PipelineConfig) -> ColoredPointCloud:
    """Dense colored cloud for a frame: project the scan, complete depth, back-project."""
    pts = scan_to_camera(frame.scan, frame.calib)
    sparse, _ = project_points(pts, frame.calib, frame.width, frame.height)
    dense = densify(sparse, cfg.densifier)
    return depth_map_to_cloud(dense, frame.image, frame.calib)


def processing_order(dets3d) -> list[int]:
    """Indices by descending score, ties kept in input order."""
    return sorted(range(len(dets3d)), key=lambda i: -dets3d[i].score)


def estimate_object(view_set, estimator, cfg: PipelineConfig, frame_id: str, obj_index: int, det):
    """Fuse the usable views; returns ``(estimate, status)`` with status ok/strongest/fallback."""
    local_yaws, vectors = [], []
    for j, (cam, roi) in enumerate(zip(view_set.cameras, view_set.images)):
        try:
            vec = estimator(roi, cam, ViewContext(frame_id, obj_index, j, det))
            local = decode_angle_vector(vec)
        except _VIEW_FAILURES:
            continue
        if cfg.estimator_frame == "local":
            local_yaws.append(local)
            vec = vec.rotated(cam.view_azimuth)
        else:
            local_yaws.append(wrap_angle(local - cam.view_azimuth))
        vectors.append(vec)
    if not vectors:
        return None, "fallback"
    try:
        fused, magnitude = fuse_estimates(vectors, normalize=cfg.fuse_normalized)
        status = "ok"
    except DegenerateFusion:
        best = max(range(len(vectors)), key=lambda k: vectors[k].norm)
        fused, magnitude, status = decode_angle_vector(vectors[best]), 0.0, "strongest"
    except DegenerateVector:
        return None, "fallback"
    return OrientationEstimate(local_yaws, vectors, fused, magnitude), status


def run_frame(frame: Frame, dets3d, dets2d, cfg: PipelineConfig, estimator,
              workers: int | None = None) -> FrameResult:
    """Refine yaw for the top-k detections of one frame, then suppress.

    ``dets2d=None`` skips suppression. Detections beyond the top k by score
    pass through unchanged (apart from suppression).
    """
    workers = cfg.workers if workers is None else workers
    timings = dict.fromkeys(STAGES, 0.0)
    out = list(dets3d)
    result = FrameResult(out, timings)
    chosen = processing_order(out)[: cfg.top_k_per_frame]

    if chosen:
        t0 = time.perf_counter()
        cloud = frame_cloud(frame, cfg)
        timings["densify"] = time.perf_counter() - t0

    for rank, i in enumerate(chosen):
        det = out[i]
        t0 = time.perf_counter()
        view_set = synthesize_views(cloud, det, cfg.view, workers=workers)
        t1 = time.perf_counter()
        est, status = estimate_object(view_set, estimator, cfg, frame.frame_id, rank, det)
        timings["render"] += t1 - t0
        timings["estimate"] += time.perf_counter() - t1
        result.n_processed += 1
        if status == "fallback":
            result.n_fallback += 1
            log.info("frame %s object %d: no usable view, keeping input yaw", frame.frame_id, i)
            continue
        if status == "strongest":
            result.n_strongest_view += 1
        result.estimates[i] = est
        out[i] = det.with_(yaw=est.fused_global_yaw)

    if dets2d is not None:
        t0 = time.perf_counter()
        out = suppress_false_positives(out, dets2d, cfg.suppression)
        timings["suppress"] = time.perf_counter() - t0
    result.detections = out
    return result


def run_frames(items, cfg: PipelineConfig, estimator, workers: int | None = None) -> list[FrameResult]:
    """Run every ``(frame, dets3d, dets2d)`` item; results keep input order.

    With several workers, frames run concurrently and views render serially
    inside each frame; both paths give identical output.
    """
    workers = cfg.workers if workers is None else workers
    items = list(items)
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda it: run_frame(*it, cfg, estimator, workers=1), items))
    return [run_frame(*it, cfg, estimator, workers=workers) for it in items]


@dataclass
class StageStats:
    count: int
    mean: float
    median: float
    p95: float


def timing_summary(results) -> dict:
    """Per-stage mean, median and 95th percentile wall time in seconds."""
    summary = {}
    for stage in STAGES:
        vals = np.array([r.timings[stage] for r in results], dtype=np.float64)
        summary[stage] = StageStats(len(vals), float(vals.mean()), float(np.median(vals)),
                                    float(np.percentile(vals, 95)))
    return summary


def bench(items, cfg: PipelineConfig, estimator, workers: int | None = None) -> dict:
    """Run the pipeline over ``items`` and summarise per-stage wall time.

    Returns a JSON-ready dict: ``{"n_frames", "stages": {stage: stats}, "frame_total": stats}``.
    """
    items = list(items)
    if not items:
        raise InputError("bench needs at least one frame")
    results = run_frames(items, cfg, estimator, workers)
    totals = np.array([sum(r.timings.values()) for r in results])
    summary = {name: dataclasses.asdict(st) for name, st in timing_summary(results).items()}
    return {
        "n_frames": len(results),
        "n_objects": int(sum(r.n_processed for r in results)),
        "n_views": cfg.view.n_views,
        "stages": summary,
        "frame_total": dataclasses.asdict(StageStats(len(totals), float(totals.mean()),
                                                     float(np.median(totals)),
                                                     float(np.percentile(totals, 95)))),
    }
