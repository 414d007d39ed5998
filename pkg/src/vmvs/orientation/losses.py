"""Multi-task orientation loss: angle-vector smooth L1, bin softmax CE, bin residual smooth L1."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ShapeMismatch
from .angles import AngleBinSet, AngleVector, encode_bins


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 50.0
    beta: float = 1.0
    gamma: float = 200.0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ConfigError("loss weights must be non-negative")


def smooth_l1(x):
    ax = np.abs(x)
    return np.where(ax < 1.0, 0.5 * np.square(x), ax - 0.5)


def smooth_l1_grad(x):
    return np.clip(x, -1.0, 1.0)


def log_softmax(logits, axis=-1):
    z = logits - np.max(logits, axis=axis, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


def _targets(target_theta, n_bins):
    t = np.atleast_1d(np.asarray(target_theta, dtype=np.float64))
    vec = np.column_stack([np.cos(t), np.sin(t)])
    enc = [encode_bins(float(v), n_bins) for v in t]
    bins = np.array([k for k, _ in enc], dtype=np.int64)
    res = np.array([r for _, r in enc])
    return vec, bins, res


def loss_terms_from_outputs(outputs, target_theta, n_bins: int):
    """Per-sample (L_ang, L_cls, L_reg) for raw head outputs.

    ``outputs`` is (N, 2 + 2B): angle vector, B logits, B residuals.
    """
    out = np.atleast_2d(np.asarray(outputs, dtype=np.float64))
    if out.shape[1] != 2 + 2 * n_bins:
        raise ShapeMismatch(f"expected {2 + 2 * n_bins} outputs, got {out.shape[1]}")
    vec_t, bin_t, res_t = _targets(target_theta, n_bins)
    if len(vec_t) == 1 and len(out) > 1:
        vec_t = np.repeat(vec_t, len(out), 0)
        bin_t = np.repeat(bin_t, len(out))
        res_t = np.repeat(res_t, len(out))
    rows = np.arange(len(out))
    logits = out[:, 2 : 2 + n_bins]
    residuals = out[:, 2 + n_bins :]
    l_ang = smooth_l1(out[:, :2] - vec_t).sum(axis=1)
    l_cls = -log_softmax(logits)[rows, bin_t]
    l_reg = smooth_l1(residuals[rows, bin_t] - res_t)
    return l_ang, l_cls, l_reg


def loss_and_output_grad(outputs, target_theta, n_bins: int, w: LossWeights):
    """Mean weighted loss over the batch, its parts, and d(loss)/d(outputs)."""
    out = np.atleast_2d(np.asarray(outputs, dtype=np.float64))
    l_ang, l_cls, l_reg = loss_terms_from_outputs(out, target_theta, n_bins)
    n = len(out)
    vec_t, bin_t, res_t = _targets(target_theta, n_bins)
    rows = np.arange(n)
    grad = np.zeros_like(out)
    grad[:, :2] = w.alpha * smooth_l1_grad(out[:, :2] - vec_t)
    probs = np.exp(log_softmax(out[:, 2 : 2 + n_bins]))
    probs[rows, bin_t] -= 1.0
    grad[:, 2 : 2 + n_bins] = w.beta * probs
    grad[rows, 2 + n_bins + bin_t] = w.gamma * smooth_l1_grad(out[rows, 2 + n_bins + bin_t] - res_t)
    parts = (float(l_ang.mean()), float(l_cls.mean()), float(l_reg.mean()))
    total = w.alpha * parts[0] + w.beta * parts[1] + w.gamma * parts[2]
    return total, parts, grad / n


def multitask_loss(pred, target_theta: float, w: LossWeights | None = None):
    """Weighted loss for one prediction ``(AngleVector, AngleBinSet)``.

    Returns ``(total, (L_ang, L_cls, L_reg))``.
    """
    w = w or LossWeights()
    vec, bins = pred
    if not isinstance(vec, AngleVector) or not isinstance(bins, AngleBinSet):
        raise ShapeMismatch("prediction must be (AngleVector, AngleBinSet)")
    outputs = np.concatenate([[vec.x_theta, vec.y_theta], bins.logits, bins.residuals])
    l_ang, l_cls, l_reg = loss_terms_from_outputs(outputs, target_theta, bins.n_bins)
    parts = (float(l_ang[0]), float(l_cls[0]), float(l_reg[0]))
    return w.alpha * parts[0] + w.beta * parts[1] + w.gamma * parts[2], parts
