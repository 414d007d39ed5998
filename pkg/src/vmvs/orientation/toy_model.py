"""A linear orientation estimator over downsampled grayscale ROI pixels.

It stands in for a CNN backbone: small enough to train on a laptop, yet it
drives every term of the multi-task loss through a real training loop.
"""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import DimMismatch, EmptyDataset, InputError
from .angles import AngleBinSet, AngleVector, decode_angle_vector, decode_bins, wrap_angle
from .losses import LossWeights, loss_and_output_grad

FEATURE_SIZE = 28
_MAGIC = b"VMVT"
_HEADER = struct.Struct("<4sIIIII")  # magic, version, roi_h, roi_w, feature_size, n_bins
_VERSION = 1


def to_gray(pixels: np.ndarray) -> np.ndarray:
    """Luma in [0, 1] as float32."""
    px = np.asarray(pixels, dtype=np.float32)
    return (px[..., 0] * 0.299 + px[..., 1] * 0.587 + px[..., 2] * 0.114) / 255.0


def downsample(gray: np.ndarray, size: int = FEATURE_SIZE) -> np.ndarray:
    """Area-average the last two axes down to ``size`` x ``size``."""
    h, w = gray.shape[-2:]
    if h % size == 0 and w % size == 0:
        shape = gray.shape[:-2] + (size, h // size, size, w // size)
        return gray.reshape(shape).mean(axis=(-3, -1))
    rows = np.linspace(0, h, size + 1).astype(np.int64)[:-1]
    cols = np.linspace(0, w, size + 1).astype(np.int64)[:-1]
    row_counts = np.diff(np.append(rows, h))
    col_counts = np.diff(np.append(cols, w))
    summed = np.add.reduceat(np.add.reduceat(gray, rows, axis=-2), cols, axis=-1)
    return summed / (row_counts[:, None] * col_counts[None, :])


@dataclass
class ToyEstimator:
    """Linear map from 28x28 grayscale features to 2 + 2B head outputs."""

    n_bins: int = 8
    roi_height: int = 224
    roi_width: int = 224
    feature_size: int = FEATURE_SIZE
    weights: np.ndarray = None
    bias: np.ndarray = None
    history: list = field(default_factory=list)

    def __post_init__(self):
        n_out, n_feat = 2 + 2 * self.n_bins, self.feature_size ** 2
        if self.weights is None:
            self.weights = np.zeros((n_out, n_feat))
        if self.bias is None:
            self.bias = np.zeros(n_out)
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(n_out, n_feat)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(n_out)

    @property
    def n_outputs(self) -> int:
        return 2 + 2 * self.n_bins

    def features(self, pixels: np.ndarray) -> np.ndarray:
        if pixels.shape[-3:-1] != (self.roi_height, self.roi_width):
            raise DimMismatch(
                f"ROI is {pixels.shape[-3:-1]}, model expects {(self.roi_height, self.roi_width)}"
            )
        feats = downsample(to_gray(pixels), self.feature_size)
        return feats.reshape(feats.shape[:-2] + (-1,)).astype(np.float64)

    def outputs(self, feats: np.ndarray) -> np.ndarray:
        return feats @ self.weights.T + self.bias

    def forward(self, roi) -> tuple[AngleVector, AngleBinSet]:
        out = self.outputs(self.features(roi.pixels))
        b = self.n_bins
        return AngleVector(float(out[0]), float(out[1])), AngleBinSet(tuple(out[2 : 2 + b]), tuple(out[2 + b :]))

    def copy(self) -> "ToyEstimator":
        return ToyEstimator(self.n_bins, self.roi_height, self.roi_width, self.feature_size,
                            self.weights.copy(), self.bias.copy(), list(self.history))

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(_MAGIC, _VERSION, self.roi_height, self.roi_width, self.feature_size, self.n_bins)
        body = np.concatenate([self.weights.ravel(), self.bias]).astype("<f8").tobytes()
        return header + body

    @classmethod
    def from_bytes(cls, raw: bytes) -> "ToyEstimator":
        if len(raw) < _HEADER.size:
            raise InputError("model file shorter than its header")
        magic, version, roi_h, roi_w, fsize, n_bins = _HEADER.unpack_from(raw)
        if magic != _MAGIC or version != _VERSION:
            raise InputError("not a toy-estimator model file")
        n_out, n_feat = 2 + 2 * n_bins, fsize * fsize
        params = np.frombuffer(raw[_HEADER.size :], dtype="<f8")
        if len(params) != n_out * n_feat + n_out:
            raise InputError(f"expected {n_out * n_feat + n_out} parameters, found {len(params)}")
        return cls(n_bins, roi_h, roi_w, fsize, params[: n_out * n_feat].copy(), params[n_out * n_feat :].copy())


def estimator_forward(model: ToyEstimator, roi) -> tuple[AngleVector, AngleBinSet]:
    return model.forward(roi)


def predict_local_yaw(model: ToyEstimator, roi, head: str = "vector") -> float:
    vec, bins = model.forward(roi)
    if head == "bins":
        return decode_bins(bins)
    return decode_angle_vector(vec)


def loss_and_param_grad(model: ToyEstimator, feats: np.ndarray, targets, w: LossWeights):
    """Mean batch loss, its parts, and gradients w.r.t. (weights, bias)."""
    out = model.outputs(feats)
    total, parts, g_out = loss_and_output_grad(out, targets, model.n_bins, w)
    return total, parts, g_out.T @ np.atleast_2d(feats), g_out.sum(axis=0)


@dataclass
class Augmentation:
    enabled: bool = True
    brightness: float = 0.1  # additive, in gray units
    contrast: float = 0.2  # multiplicative spread around the image mean
    flip_probability: float = 0.5
    max_shift: int = 10  # pixels, uniform in each direction


def flip_target(theta: float) -> float:
    """Yaw after a left-right image flip."""
    return wrap_angle(math.pi - theta)


def _shift(img: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.zeros_like(img)
    h, w = img.shape
    ys, yd = (slice(0, h - dy), slice(dy, h)) if dy >= 0 else (slice(-dy, h), slice(0, h + dy))
    xs, xd = (slice(0, w - dx), slice(dx, w)) if dx >= 0 else (slice(-dx, w), slice(0, w + dx))
    out[yd, xd] = img[ys, xs]
    return out


def augment_batch(gray: np.ndarray, targets: np.ndarray, aug: Augmentation, rng: np.random.Generator):
    """Contrast, brightness, flip and translation jitter on (N, H, W) gray images."""
    n = len(gray)
    out = np.empty_like(gray)
    new_t = np.array(targets, dtype=np.float64)
    flips = rng.random(n) < aug.flip_probability
    shifts = rng.integers(-aug.max_shift, aug.max_shift + 1, size=(n, 2))
    gain = rng.uniform(1 - aug.contrast, 1 + aug.contrast, n).astype(np.float32)
    offset = rng.uniform(-aug.brightness, aug.brightness, n).astype(np.float32)
    for i in range(n):
        img = gray[i]
        if flips[i]:
            img = img[:, ::-1]
            new_t[i] = flip_target(new_t[i])
        img = _shift(img, int(shifts[i, 0]), int(shifts[i, 1]))
        m = img.mean()
        out[i] = np.clip((img - m) * gain[i] + m + offset[i], 0.0, 1.0)
    return out, new_t


@dataclass
class TrainConfig:
    epochs: int = 20
    lr: float = 1e-4
    lr_decay: float = 0.5  # multiplier applied once at decay_epoch
    decay_epoch: int | None = None  # default: half of epochs
    batch_size: int = 32
    seed: int = 0
    augmentation: Augmentation = field(default_factory=Augmentation)


def train_toy_estimator(dataset, w: LossWeights | None = None, cfg: TrainConfig | None = None,
                        n_bins: int = 8) -> ToyEstimator:
    """Adam on mini-batches in a seeded, fixed order.

    ``dataset`` is a list of ``(RoiImage, target_local_yaw)``. The returned
    model carries per-epoch ``(loss, L_ang, L_cls, L_reg)`` rows in ``history``,
    with row 0 measured at initialisation on the un-augmented data.
    """
    if not dataset:
        raise EmptyDataset("training set is empty")
    w = w or LossWeights()
    cfg = cfg or TrainConfig()
    h, wd = dataset[0][0].pixels.shape[:2]
    model = ToyEstimator(n_bins=n_bins, roi_height=h, roi_width=wd)
    gray = np.stack([to_gray(roi.pixels) for roi, _ in dataset])
    if gray.shape[1:] != (h, wd):
        raise DimMismatch("all ROIs must share one size")
    targets = np.array([t for _, t in dataset], dtype=np.float64)
    base_feats = downsample(gray, model.feature_size).reshape(len(gray), -1).astype(np.float64)

    rng = np.random.default_rng(cfg.seed)
    decay_epoch = cfg.epochs // 2 if cfg.decay_epoch is None else cfg.decay_epoch
    m_w, v_w = np.zeros_like(model.weights), np.zeros_like(model.weights)
    m_b, v_b = np.zeros_like(model.bias), np.zeros_like(model.bias)
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = 0

    total, parts, _, _ = loss_and_param_grad(model, base_feats, targets, w)
    model.history.append((total, *parts))
    for epoch in range(cfg.epochs):
        lr = cfg.lr * (cfg.lr_decay if epoch >= decay_epoch else 1.0)
        if cfg.augmentation.enabled:
            aug_gray, aug_t = augment_batch(gray, targets, cfg.augmentation, rng)
            feats = downsample(aug_gray, model.feature_size).reshape(len(gray), -1).astype(np.float64)
        else:
            feats, aug_t = base_feats, targets
        order = rng.permutation(len(feats))
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            _, _, g_w, g_b = loss_and_param_grad(model, feats[idx], aug_t[idx], w)
            step += 1
            m_w = b1 * m_w + (1 - b1) * g_w
            v_w = b2 * v_w + (1 - b2) * g_w ** 2
            m_b = b1 * m_b + (1 - b1) * g_b
            v_b = b2 * v_b + (1 - b2) * g_b ** 2
            corr1, corr2 = 1 - b1 ** step, 1 - b2 ** step
            model.weights -= lr * (m_w / corr1) / (np.sqrt(v_w / corr2) + eps)
            model.bias -= lr * (m_b / corr1) / (np.sqrt(v_b / corr2) + eps)
        total, parts, _, _ = loss_and_param_grad(model, base_feats, targets, w)
        model.history.append((total, *parts))
    return model


def write_loss_curve(path, history) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "l_ang", "l_cls", "l_reg"])
        for epoch, row in enumerate(history):
            writer.writerow([epoch, *(f"{v:.9g}" for v in row)])
