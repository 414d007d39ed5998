"""Training-set construction and the representation / viewpoint ablations.

Both studies train the toy estimator on views of ground-truth objects and
score fused yaw on held-out frames, reporting Orientation Score (all ground
truth counted as detected, so OS equals AOS) and mean angular error.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import math
import time
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .depth_completion import DensifierConfig
from .detections import Detection3D
from .errors import DegenerateFusion, EmptyDataset
from .evaluation.metrics import aae, aos
from .orientation.angles import (angle_diff, decode_angle_vector, decode_bins, encode_angle_vector,
                                 fuse_estimates, wrap_angle)
from .orientation.losses import LossWeights
from .orientation.toy_model import ToyEstimator, TrainConfig, train_toy_estimator
from .pipeline import frame_cloud
from .synth import generate_frame, random_scene
from .view_synthesis import ViewConfig, roi_crop, synthesize_views

HEADS = ("vector", "bins", "vector+bins")


@dataclass(frozen=True)
class AblationConfig:
    name: str
    head: str = "vector+bins"
    n_bins: int = 8
    viewpoint: str = "virtual"  # or "roi-crop"
    n_views: int = 11

    def __post_init__(self):
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}")
        if self.viewpoint not in ("virtual", "roi-crop"):
            raise ValueError("viewpoint must be 'virtual' or 'roi-crop'")


REPRESENTATION_GRID = (
    *(AblationConfig(f"bins B={b}", head="bins", n_bins=b) for b in (4, 8, 12, 16)),
    AblationConfig("vector", head="vector"),
    AblationConfig("vector + bins B=8", head="vector+bins", n_bins=8),
)
VIEWPOINT_GRID = (
    AblationConfig("ROI crop", viewpoint="roi-crop"),
    *(AblationConfig(f"{n} views", n_views=n) for n in (1, 3, 6, 11, 15)),
)


@dataclass
class AblationDataset:
    """Frames with ground truth; each split is a list of ``(Frame, [Detection3D], cloud)``."""

    train: list
    val: list


@dataclass
class AblationRow:
    config: AblationConfig
    os: float
    aae_deg: float
    train_seconds: float
    infer_ms_per_object: float
    n_train_samples: int
    n_val_objects: int


def synth_frames(n_frames: int, seed: int = 0, n_objects: int = 2, id_offset: int = 0,
                 **scene_kwargs) -> list:
    """``[(Frame, [Detection3D])]`` from seeded random marker-facing scenes."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n_frames):
        spec = random_scene(rng, n_objects=n_objects, **scene_kwargs)
        frame, labels = generate_frame(spec, seed=seed * 100003 + k, frame_id=f"{id_offset + k:06d}")
        out.append((frame, [Detection3D.from_label(rec) for rec in labels]))
    return out


def head_weights(head: str, base: LossWeights | None = None) -> LossWeights:
    """Loss weights that train only the requested head(s)."""
    base = base or LossWeights()
    if head == "vector":
        return LossWeights(base.alpha, 0.0, 0.0)
    if head == "bins":
        return LossWeights(0.0, base.beta, base.gamma)
    return base


def prepare_split(frames_and_gt, densifier: DensifierConfig | None = None) -> list:
    """Attach the dense colored cloud to each ``(Frame, ground_truth)`` pair."""
    cfg = PipelineConfig(densifier=densifier or DensifierConfig())
    return [(frame, gts, frame_cloud(frame, cfg)) for frame, gts in frames_and_gt]


def object_views(frame, det, cloud, viewpoint: str, view_cfg: ViewConfig):
    """``[(roi, view_azimuth)]`` for one object: virtual views or a single image crop."""
    if viewpoint == "roi-crop":
        return [(roi_crop(frame.image, det.bbox2d, view_cfg), det.viewing_angle)]
    views = synthesize_views(cloud, det, view_cfg)
    return [(roi, cam.view_azimuth) for roi, cam in zip(views.images, views.cameras)]


def split_views(split, viewpoint: str = "virtual", view_cfg: ViewConfig | None = None) -> list:
    """Per ground-truth object: ``(Detection3D, [(roi, view_azimuth)], seconds to render)``."""
    view_cfg = view_cfg or ViewConfig()
    out = []
    for frame, gts, cloud in split:
        for det in gts:
            t0 = time.perf_counter()
            views = object_views(frame, det, cloud, viewpoint, view_cfg)
            out.append((det, views, time.perf_counter() - t0))
    return out


def view_samples(split, viewpoint: str = "virtual", view_cfg: ViewConfig | None = None) -> list:
    """Training pairs ``(RoiImage, local yaw)`` for every ground-truth object in a split."""
    return [(roi, wrap_angle(det.yaw - azimuth))
            for det, views, _ in split_views(split, viewpoint, view_cfg) for roi, azimuth in views]


def _predict(model: ToyEstimator, roi, head: str):
    vec, bins = model.forward(roi)
    if head == "bins":
        return encode_angle_vector(decode_bins(bins))
    return vec


def evaluate_model(model: ToyEstimator, objects, head: str):
    """Fused-yaw errors for ``split_views`` output, plus mean inference ms per object (render included)."""
    errors, elapsed = [], 0.0
    for det, views, render_s in objects:
        t0 = time.perf_counter()
        vecs = []
        for roi, azimuth in views:
            vec = _predict(model, roi, head)
            if vec.norm > 1e-6:
                vecs.append(vec.rotated(azimuth))
        try:
            fused = fuse_estimates(vecs)[0] if vecs else None
        except DegenerateFusion:
            fused = decode_angle_vector(max(vecs, key=lambda v: v.norm))
        elapsed += render_s + time.perf_counter() - t0
        # No usable prediction counts as the worst possible error.
        errors.append(math.pi if fused is None else angle_diff(fused, det.yaw))
    return errors, 1000.0 * elapsed / max(len(objects), 1)


def run_ablation(dataset: AblationDataset, grid, view_cfg: ViewConfig | None = None,
                 train_cfg: TrainConfig | None = None, weights: LossWeights | None = None,
                 max_train_samples: int | None = None) -> list:
    """Train and score one toy model per grid entry; rows keep grid order.

    Views are rendered once per (viewpoint, view count) and shared by the
    grid entries that need them. ``max_train_samples`` truncates the
    training set (in frame, object, view order).
    """
    if not dataset.train or not dataset.val or not any(g for _, g, _ in dataset.train):
        raise EmptyDataset("ablation needs ground-truth objects in both splits")
    if not any(g for _, g, _ in dataset.val):
        raise EmptyDataset("validation split has no ground-truth objects")
    view_cfg = view_cfg or ViewConfig()
    train_cfg = train_cfg or TrainConfig()
    rows, cache = [], {}
    for cfg in grid:
        key = (cfg.viewpoint, cfg.n_views)
        if key not in cache:
            vcfg = dataclasses.replace(view_cfg, n_views=cfg.n_views)
            samples = view_samples(dataset.train, cfg.viewpoint, vcfg)
            cache[key] = (samples[:max_train_samples], split_views(dataset.val, cfg.viewpoint, vcfg))
        samples, val_objects = cache[key]
        t0 = time.perf_counter()
        model = train_toy_estimator(samples, head_weights(cfg.head, weights), train_cfg, cfg.n_bins)
        train_s = time.perf_counter() - t0
        errors, infer_ms = evaluate_model(model, val_objects, cfg.head)
        entries = [(1.0, True, e) for e in errors]
        rows.append(AblationRow(cfg, aos(entries, len(entries)), math.degrees(aae(errors)),
                                train_s, infer_ms, len(samples), len(errors)))
    return rows


def format_rows(rows) -> str:
    head = f"{'Config':<22}{'OS':>8}{'AAE(deg)':>10}{'train(s)':>10}{'ms/obj':>9}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r.config.name:<22}{r.os:>8.4f}{r.aae_deg:>10.2f}{r.train_seconds:>10.2f}"
                     f"{r.infer_ms_per_object:>9.1f}")
    return "\n".join(lines) + "\n"


def rows_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["config", "head", "n_bins", "viewpoint", "n_views", "os", "aae_deg",
                     "train_seconds", "infer_ms_per_object", "n_train_samples", "n_val_objects"])
    for r in rows:
        c = r.config
        writer.writerow([c.name, c.head, c.n_bins, c.viewpoint, c.n_views, f"{r.os:.6f}",
                         f"{r.aae_deg:.4f}", f"{r.train_seconds:.3f}", f"{r.infer_ms_per_object:.2f}",
                         r.n_train_samples, r.n_val_objects])
    return buf.getvalue()
