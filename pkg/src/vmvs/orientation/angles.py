"""Angle representations: wrapping, unit angle vectors, heading bins, and circular-mean fusion."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import BadBinCount, DegenerateFusion, DegenerateVector, NonFinite

VECTOR_EPS = 1e-6
FUSION_EPS = 1e-6


def wrap_angle(theta: float) -> float:
    """Map ``theta`` into [-pi, pi)."""
    theta = float(theta)
    if not math.isfinite(theta):
        raise NonFinite(f"angle {theta!r} is not finite")
    if -math.pi <= theta < math.pi:
        return theta
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped < 0.0:
        wrapped += 2.0 * math.pi
    wrapped -= math.pi
    # fmod can land exactly on +pi after the shift for inputs a hair below an odd multiple.
    return -math.pi if wrapped >= math.pi else wrapped


def wrap_angles(theta) -> np.ndarray:
    """Vectorised :func:`wrap_angle` for arrays."""
    theta = np.asarray(theta, dtype=np.float64)
    if not np.all(np.isfinite(theta)):
        raise NonFinite("non-finite angle in array")
    out = np.mod(theta + np.pi, 2.0 * np.pi) - np.pi
    return np.where(out >= np.pi, -np.pi, out)


@dataclass(frozen=True)
class AngleVector:
    x_theta: float
    y_theta: float

    def __iter__(self):
        yield self.x_theta
        yield self.y_theta

    @property
    def norm(self) -> float:
        return math.hypot(self.x_theta, self.y_theta)

    def rotated(self, delta: float) -> "AngleVector":
        c, s = math.cos(delta), math.sin(delta)
        return AngleVector(c * self.x_theta - s * self.y_theta, s * self.x_theta + c * self.y_theta)


def encode_angle_vector(theta: float) -> AngleVector:
    if not math.isfinite(theta):
        raise NonFinite(f"angle {theta!r} is not finite")
    return AngleVector(math.cos(theta), math.sin(theta))


def decode_angle_vector(v: AngleVector) -> float:
    n = v.norm
    if not n > VECTOR_EPS:
        raise DegenerateVector(f"angle vector norm {n} too small to decode")
    # atan2 range (-pi, pi]; equal to wrap_angle(theta) modulo 2*pi.
    return math.atan2(v.y_theta / n, v.x_theta / n)


@dataclass(frozen=True)
class AngleBinSet:
    logits: tuple
    residuals: tuple

    def __post_init__(self):
        if len(self.logits) != len(self.residuals):
            raise BadBinCount("logits and residuals differ in length")
        if len(self.logits) < 2:
            raise BadBinCount(f"need at least 2 bins, got {len(self.logits)}")

    @property
    def n_bins(self) -> int:
        return len(self.logits)


def bin_centers(n_bins: int) -> np.ndarray:
    if n_bins < 2:
        raise BadBinCount(f"need at least 2 bins, got {n_bins}")
    return 2.0 * np.pi * np.arange(n_bins) / n_bins


def encode_bins(theta: float, n_bins: int) -> tuple[int, float]:
    """Nearest bin centre (centres at 2*pi*k/B) and the wrapped residual from it."""
    if n_bins < 2:
        raise BadBinCount(f"need at least 2 bins, got {n_bins}")
    width = 2.0 * math.pi / n_bins
    index = int(math.floor(wrap_angle(theta) / width + 0.5)) % n_bins
    residual = wrap_angle(theta - index * width)
    return index, residual


def decode_bins(bins: AngleBinSet) -> float:
    k = int(np.argmax(bins.logits))
    return wrap_angle(2.0 * math.pi * k / bins.n_bins + bins.residuals[k])


def angle_diff(a: float, b: float) -> float:
    """Signed smallest difference ``a - b`` in [-pi, pi)."""
    return wrap_angle(a - b)


def local_to_global_yaw(local_yaw: float, view_azimuth: float) -> float:
    return wrap_angle(local_yaw + view_azimuth)


def global_to_local_yaw(global_yaw: float, view_azimuth: float) -> float:
    return wrap_angle(global_yaw - view_azimuth)


def fuse_estimates(vectors: Sequence[AngleVector], normalize: bool = True) -> tuple[float, float]:
    """Circular mean of per-view angle vectors.

    Returns the fused angle ``atan2(mean y, mean x)`` and the length of the mean
    vector. With ``normalize`` each vector is scaled to unit length first, so
    the magnitude lies in [0, 1].
    """
    if len(vectors) == 0:
        raise DegenerateFusion("no estimates to fuse")
    arr = np.array([(v.x_theta, v.y_theta) for v in vectors], dtype=np.float64)
    if normalize:
        norms = np.hypot(arr[:, 0], arr[:, 1])
        if np.any(norms <= VECTOR_EPS):
            raise DegenerateVector("cannot normalise a near-zero angle vector")
        arr = arr / norms[:, None]
    mean_x, mean_y = arr.mean(axis=0)
    magnitude = math.hypot(mean_x, mean_y)
    if magnitude <= FUSION_EPS:
        raise DegenerateFusion(f"mean vector length {magnitude:.3g}: estimates cancel")
    return math.atan2(mean_y, mean_x), magnitude
