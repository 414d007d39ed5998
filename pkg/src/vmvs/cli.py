"""Command-line entry point: ``vmvs <command> [options]``.

Exit codes: 0 success, 2 input error, 3 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ablation import (REPRESENTATION_GRID, VIEWPOINT_GRID, AblationDataset, format_rows, head_weights,
                       prepare_split, rows_csv, run_ablation, synth_frames, view_samples)
from .config import load_config
from .depth_completion import densify
from .detections import Detection2D, Detection3D
from .errors import ConfigError, InputError
from .evaluation.report import evaluate
from .geometry import project_points
from .kitti_io import (parse_labels, read_frame, list_frames, scan_to_camera, write_depth_png,
                       write_frame, write_image, write_labels)
from .orientation.angles import decode_angle_vector
from .orientation.toy_model import Augmentation, TrainConfig, train_toy_estimator, write_loss_curve
from .pipeline import bench, build_estimator, estimate_object, frame_cloud, processing_order, run_frames
from .synth import SynthSceneSpec, generate_frame, random_scene
from .view_synthesis import synthesize_views

log = logging.getLogger("vmvs")

EXIT_OK, EXIT_INPUT, EXIT_CONFIG = 0, 2, 3


# ---------------------------------------------------------------- helpers

def _frame_ids(args) -> list[str]:
    ids = args.frame or list_frames(args.data)
    if not ids:
        raise InputError(f"no frames found under {args.data}")
    return ids


def _read_dets3d(directory, frame_id: str) -> list[Detection3D]:
    """Detections from ``<dir>/<frame>.txt``; a missing file means no detections."""
    if directory is None:
        return []
    path = Path(directory) / f"{frame_id}.txt"
    if not path.exists():
        return []
    return [Detection3D.from_label(r) for r in parse_labels(path.read_text())]


def _read_dets2d(directory, frame_id: str):
    if directory is None:
        return None
    path = Path(directory) / f"{frame_id}.txt"
    if not path.exists():
        return []
    return [Detection2D.from_label(r) for r in parse_labels(path.read_text())]


def _ground_truth(directory, frame_ids) -> dict:
    return {fid: _read_dets3d(directory, fid) for fid in frame_ids}


def _write_json(path, payload) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _estimator_for(cfg, args, frame_ids):
    gt = None
    if cfg.estimator == "oracle":
        if not getattr(args, "gt", None):
            raise InputError("--gt is required with the oracle estimator")
        gt = _ground_truth(args.gt, frame_ids)
    return build_estimator(cfg, ground_truth=gt)


def _items(args, frame_ids):
    for fid in frame_ids:
        yield read_frame(args.data, fid), _read_dets3d(args.dets3d, fid), _read_dets2d(args.dets2d, fid)


# ---------------------------------------------------------------- commands

def cmd_densify(args, cfg) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for fid in _frame_ids(args):
        frame = read_frame(args.data, fid)
        pts = scan_to_camera(frame.scan, frame.calib)
        sparse, dropped = project_points(pts, frame.calib, frame.width, frame.height)
        dense = densify(sparse, cfg.densifier)
        write_depth_png(out / f"{fid}.png", dense)
        log.info("%s: %d points outside the image", fid, dropped)
    return EXIT_OK


def cmd_render_views(args, cfg) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for fid in _frame_ids(args):
        frame = read_frame(args.data, fid)
        dets = _read_dets3d(args.dets3d, fid)
        order = processing_order(dets)[: cfg.top_k_per_frame]
        if not order:
            continue
        cloud = frame_cloud(frame, cfg)
        for rank, i in enumerate(order):
            views = synthesize_views(cloud, dets[i], cfg.view, workers=cfg.workers)
            for j, roi in enumerate(views.images):
                write_image(out / f"{fid}_{rank:02d}_{j:02d}.png", roi.pixels)
    return EXIT_OK


def cmd_estimate(args, cfg) -> int:
    """Per-view predictions as CSV (the same layout the external-file estimator reads)."""
    frame_ids = _frame_ids(args)
    estimator = _estimator_for(cfg, args, frame_ids)
    rows = []
    for fid in frame_ids:
        frame = read_frame(args.data, fid)
        dets = _read_dets3d(args.dets3d, fid)
        order = processing_order(dets)[: cfg.top_k_per_frame]
        if not order:
            continue
        cloud = frame_cloud(frame, cfg)
        for rank, i in enumerate(order):
            views = synthesize_views(cloud, dets[i], cfg.view, workers=cfg.workers)
            est, status = estimate_object(views, estimator, cfg, fid, rank, dets[i])
            if est is None:
                continue
            fused = f"{est.fused_global_yaw:.6f}"
            for j, vec in enumerate(est.per_view_vectors):
                local = vec.rotated(-views.cameras[j].view_azimuth) if cfg.estimator_frame == "local" else vec
                rows.append([fid, rank, j, f"{local.x_theta:.9f}", f"{local.y_theta:.9f}",
                             f"{decode_angle_vector(local):.6f}", fused, status])
    header = ["frame_id", "object_index", "view_index", "x_theta", "y_theta", "yaw", "fused_yaw", "status"]
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return EXIT_OK


def cmd_run(args, cfg) -> int:
    frame_ids = _frame_ids(args)
    estimator = _estimator_for(cfg, args, frame_ids)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = run_frames(_items(args, frame_ids), cfg, estimator)
    counts = {"frames": 0, "processed": 0, "fallback": 0, "strongest_view": 0}
    for fid, res in zip(frame_ids, results):
        (out / f"{fid}.txt").write_text(write_labels([d.to_label() for d in res.detections]))
        counts["frames"] += 1
        counts["processed"] += res.n_processed
        counts["fallback"] += res.n_fallback
        counts["strongest_view"] += res.n_strongest_view
    log.info("run summary: %s", counts)
    if args.summary:
        _write_json(args.summary, counts)
    return EXIT_OK


def cmd_evaluate(args, cfg) -> int:
    gt_dir = Path(args.gt)
    frame_ids = sorted(p.stem for p in gt_dir.glob("*.txt"))
    if not frame_ids:
        raise InputError(f"no ground-truth label files in {gt_dir}")
    gt = _ground_truth(gt_dir, frame_ids)
    dets = _ground_truth(args.dets, frame_ids)
    report = evaluate(gt, dets, recall_points=args.recall_points, recall_k=cfg.top_k_per_frame)
    sys.stdout.write(report.to_table())
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n")
    if args.pr_csv:
        Path(args.pr_csv).write_text(report.pr_csv())
    return EXIT_OK


def _train_config(args) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, lr=args.lr, seed=args.seed,
                       augmentation=Augmentation(enabled=not args.no_augment))


def cmd_ablate(args, cfg) -> int:
    grid = REPRESENTATION_GRID if args.study == "representation" else VIEWPOINT_GRID
    if args.train_data:
        train = [(read_frame(args.train_data, f), _read_dets3d(Path(args.train_data) / "label_2", f))
                 for f in list_frames(args.train_data)]
        val = [(read_frame(args.val_data, f), _read_dets3d(Path(args.val_data) / "label_2", f))
               for f in list_frames(args.val_data)]
    else:
        train = synth_frames(args.train_frames, seed=args.seed)
        val = synth_frames(args.val_frames, seed=args.seed + 1, id_offset=args.train_frames)
    dataset = AblationDataset(prepare_split(train, cfg.densifier), prepare_split(val, cfg.densifier))
    rows = run_ablation(dataset, grid, cfg.view, _train_config(args), cfg.weights,
                        max_train_samples=args.max_train_samples)
    sys.stdout.write(format_rows(rows))
    if args.out:
        Path(args.out).write_text(rows_csv(rows))
    return EXIT_OK


def cmd_bench(args, cfg) -> int:
    if args.synth:
        frames = synth_frames(args.synth, seed=cfg.seed)
        items = [(frame, gts, None) for frame, gts in frames]
        gt = {frame.frame_id: gts for frame, gts in frames}
        estimator = build_estimator(cfg, ground_truth=gt)
    else:
        frame_ids = _frame_ids(args)
        items = list(_items(args, frame_ids))
        estimator = _estimator_for(cfg, args, frame_ids)
    _write_json(args.out, bench(items, cfg, estimator))
    return EXIT_OK


def cmd_synth_gen(args, cfg) -> int:
    out = Path(args.out)
    rng = np.random.default_rng(args.seed)
    specs_dir = out / "scene_specs"
    specs_dir.mkdir(parents=True, exist_ok=True)
    for k in range(args.frames):
        fid = f"{k:06d}"
        if args.scene:
            spec = SynthSceneSpec.from_json(Path(args.scene).read_text())
        else:
            spec = random_scene(rng, n_objects=args.objects, depth_sigma=args.depth_sigma,
                                dropout=args.dropout)
        frame, labels = generate_frame(spec, seed=args.seed * 100003 + k, frame_id=fid)
        write_frame(out, frame, labels)
        (specs_dir / f"{fid}.json").write_text(spec.to_json() + "\n")
    return EXIT_OK


def cmd_train_toy(args, cfg) -> int:
    frame_ids = list_frames(args.data)
    if not frame_ids:
        raise InputError(f"no frames found under {args.data}")
    label_dir = Path(args.data) / "label_2"
    split = prepare_split([(read_frame(args.data, f), _read_dets3d(label_dir, f)) for f in frame_ids],
                          cfg.densifier)
    samples = view_samples(split, args.viewpoint, cfg.view)[: args.max_samples]
    model = train_toy_estimator(samples, head_weights(args.head, cfg.weights), _train_config(args),
                                args.bins)
    Path(args.out).write_bytes(model.to_bytes())
    if args.loss_csv:
        write_loss_curve(args.loss_csv, model.history)
    log.info("trained on %d samples; final loss %.6g", len(samples), model.history[-1][0])
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key-value config file (see README)")
    common.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    common.add_argument("--workers", type=int, help="override the configured worker count")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", required=True, help="KITTI-layout root (calib/, velodyne/, image_2/)")
    data.add_argument("--frame", action="append", help="frame id; repeatable (default: all)")

    dets = argparse.ArgumentParser(add_help=False)
    dets.add_argument("--dets3d", help="directory of KITTI label files with 3D detections")
    dets.add_argument("--gt", help="ground-truth label directory (oracle estimator)")

    p = argparse.ArgumentParser(prog="vmvs", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"vmvs {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("densify", parents=[common, data], help="write dense depth maps as 16-bit PNG")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_densify)

    s = sub.add_parser("render-views", parents=[common, data, dets], help="dump virtual views as PNG")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_render_views)

    s = sub.add_parser("estimate", parents=[common, data, dets], help="per-view predictions as CSV")
    s.add_argument("--out", required=True, help="output CSV path")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("run", parents=[common, data, dets], help="refine yaw and write label files")
    s.add_argument("--dets2d", help="directory of 2D detections for false-positive suppression")
    s.add_argument("--out", required=True, help="output label directory")
    s.add_argument("--summary", help="write counts of processed/fallback objects as JSON")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("evaluate", parents=[common], help="AP, AOS, OS, AAE and centroid recall")
    s.add_argument("--gt", required=True, help="ground-truth label directory")
    s.add_argument("--dets", required=True, help="detection label directory")
    s.add_argument("--recall-points", type=int, choices=(11, 40), default=40)
    s.add_argument("--out", help="write the report as JSON")
    s.add_argument("--pr-csv", help="write the moderate precision/recall curve as CSV")
    s.set_defaults(func=cmd_evaluate)

    train = argparse.ArgumentParser(add_help=False)
    train.add_argument("--epochs", type=int, default=20)
    train.add_argument("--lr", type=float, default=1e-4)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--no-augment", action="store_true")

    s = sub.add_parser("ablate", parents=[common, train], help="representation or viewpoint study")
    s.add_argument("--study", choices=("representation", "viewpoint"), required=True)
    s.add_argument("--train-frames", type=int, default=23, help="synthetic training frames")
    s.add_argument("--val-frames", type=int, default=10, help="synthetic validation frames")
    s.add_argument("--train-data", help="KITTI-layout training root with label_2/ (instead of synth)")
    s.add_argument("--val-data", help="KITTI-layout validation root with label_2/")
    s.add_argument("--max-train-samples", type=int)
    s.add_argument("--out", help="write the table as CSV")
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("bench", parents=[common, dets], help="per-stage timing report (JSON)")
    s.add_argument("--data", help="KITTI-layout root")
    s.add_argument("--frame", action="append")
    s.add_argument("--dets2d")
    s.add_argument("--synth", type=int, help="benchmark N generated frames instead of --data")
    s.add_argument("--out", help="output JSON path (default stdout)")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("synth-gen", parents=[common], help="generate synthetic KITTI-layout frames")
    s.add_argument("--out", required=True)
    s.add_argument("--frames", type=int, default=10)
    s.add_argument("--objects", type=int, default=2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--depth-sigma", type=float, default=0.0)
    s.add_argument("--dropout", type=float, default=0.0)
    s.add_argument("--scene", help="JSON scene spec used for every frame")
    s.set_defaults(func=cmd_synth_gen)

    s = sub.add_parser("train-toy", parents=[common, train], help="train the toy estimator")
    s.add_argument("--data", required=True, help="KITTI-layout root with label_2/")
    s.add_argument("--out", required=True, help="model file")
    s.add_argument("--bins", type=int, default=8)
    s.add_argument("--head", choices=("vector", "bins", "vector+bins"), default="vector+bins")
    s.add_argument("--viewpoint", choices=("virtual", "roi-crop"), default="virtual")
    s.add_argument("--max-samples", type=int)
    s.add_argument("--loss-csv", help="write the per-epoch loss curve as CSV")
    s.set_defaults(func=cmd_train_toy)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.workers is not None:
            cfg = dataclasses.replace(cfg, workers=args.workers)
        return args.func(args, cfg)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (InputError, OSError) as exc:
        log.error("input error: %s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
