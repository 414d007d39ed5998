"""Per-view orientation estimators the pipeline can plug in.

Each estimator is called as ``est(roi, camera, ctx)`` and returns an
``AngleVector`` for the object's yaw relative to that view (local frame).
``ctx`` identifies the frame, object and view so that stateless estimators
(the noisy oracle, the file lookup) stay deterministic under any execution
order.
"""
from __future__ import annotations

import csv
import math
import zlib
from dataclasses import dataclass

import numpy as np

from .detections import Detection3D
from .errors import InputError, MalformedNumber, MarkerNotVisible
from .orientation.angles import AngleVector, decode_bins, encode_angle_vector
from .orientation.toy_model import ToyEstimator
from .synth import analytic_marker_estimator
from .view_synthesis import ViewConfig


@dataclass(frozen=True)
class ViewContext:
    frame_id: str
    object_index: int
    view_index: int
    detection: Detection3D


class ToyViewEstimator:
    """Toy model read-out; ``head`` picks the vector or the bin prediction."""

    def __init__(self, model: ToyEstimator, head: str = "vector"):
        if head not in ("vector", "bins"):
            raise ValueError("head must be 'vector' or 'bins'")
        self.model, self.head = model, head

    def __call__(self, roi, cam, ctx: ViewContext) -> AngleVector:
        vec, bins = self.model.forward(roi)
        if self.head == "bins":
            return encode_angle_vector(decode_bins(bins))
        return vec


class MarkerViewEstimator:
    """Closed-form stripe reader for synthetic scenes."""

    def __init__(self, cfg: ViewConfig | None = None):
        self.cfg = cfg or ViewConfig()

    def __call__(self, roi, cam, ctx: ViewContext) -> AngleVector:
        # Pedestrian footprints are near-circular; half the width is the body radius.
        radius = 0.5 * ctx.detection.dims[2]
        return encode_angle_vector(analytic_marker_estimator(roi, self.cfg, radius))


def _stream_seed(seed: int, ctx: ViewContext) -> list:
    return [seed, zlib.crc32(ctx.frame_id.encode()), ctx.object_index, ctx.view_index]


class OracleViewEstimator:
    """Ground-truth yaw plus wrapped-normal noise of ``sigma`` radians.

    The detection is matched to the ground-truth object with the nearest
    centroid in the same frame. Noise is drawn from a generator seeded by
    (seed, frame, object, view), so results do not depend on call order.
    """

    def __init__(self, ground_truth: dict, sigma: float = 0.0, seed: int = 0):
        self.ground_truth, self.sigma, self.seed = ground_truth, sigma, seed

    def __call__(self, roi, cam, ctx: ViewContext) -> AngleVector:
        gts = self.ground_truth.get(ctx.frame_id, [])
        if not gts:
            raise MarkerNotVisible(f"no ground truth for frame {ctx.frame_id}")
        c = np.asarray(ctx.detection.centroid)
        gt = min(gts, key=lambda g: float(np.sum((np.asarray(g.centroid) - c) ** 2)))
        local = gt.yaw - cam.view_azimuth
        if self.sigma > 0:
            local += np.random.default_rng(_stream_seed(self.seed, ctx)).normal(0.0, self.sigma)
        return encode_angle_vector(local)


class ExternalFileEstimator:
    """Looks up precomputed predictions.

    The file is CSV with a header ``frame_id,object_index,view_index,x_theta,y_theta``;
    object indices count the frame's detections in descending score order.
    """

    def __init__(self, table: dict):
        self.table = table

    @classmethod
    def from_csv(cls, path) -> "ExternalFileEstimator":
        table = {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                try:
                    key = (row["frame_id"], int(row["object_index"]), int(row["view_index"]))
                    table[key] = AngleVector(float(row["x_theta"]), float(row["y_theta"]))
                except KeyError as exc:
                    raise InputError(f"missing column {exc} in {path}") from None
                except (TypeError, ValueError):
                    raise MalformedNumber(f"bad row in {path}: {row}") from None
        return cls(table)

    def __call__(self, roi, cam, ctx: ViewContext) -> AngleVector:
        key = (ctx.frame_id, ctx.object_index, ctx.view_index)
        if key not in self.table:
            raise MarkerNotVisible(f"no prediction for {key}")
        vec = self.table[key]
        if not (math.isfinite(vec.x_theta) and math.isfinite(vec.y_theta)):
            raise MarkerNotVisible(f"non-finite prediction for {key}")
        return vec
