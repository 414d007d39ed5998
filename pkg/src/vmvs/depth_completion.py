"""Structure-preserving densification of sparse LiDAR depth maps.

The filter works on inverted depth (``max_depth + 1 - d``, invalid = 0) so
that grey-scale dilation, a running maximum, prefers the nearest surface.
Stages, all on the inverted map:

1. dilate with ``dilation_kernel`` (5x5 diamond)
2. morphological closing with ``closing_kernel`` (5x5 full)
3. fill still-empty pixels with a ``fill_kernel`` dilation (7x7 full)
4. replace pixels that were empty in the input by the lower median of the
   valid values in a ``smoothing_window`` square
5. un-invert and copy every measured pixel back verbatim

Pixels outside the raster never contribute to any window.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ConfigError, EmptyInput

log = logging.getLogger(__name__)


def diamond_kernel(size: int) -> np.ndarray:
    r = size // 2
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return (np.abs(yy) + np.abs(xx)) <= r


def full_kernel(size: int) -> np.ndarray:
    return np.ones((size, size), dtype=bool)


@dataclass
class DensifierConfig:
    max_depth: float = 80.0
    dilation_kernel: np.ndarray = field(default_factory=lambda: diamond_kernel(5))
    closing_kernel: np.ndarray = field(default_factory=lambda: full_kernel(5))
    fill_kernel: np.ndarray = field(default_factory=lambda: full_kernel(7))
    smoothing_window: int = 5

    def __post_init__(self):
        if not self.max_depth > 0:
            raise ConfigError("max_depth must be positive")
        for name in ("dilation_kernel", "closing_kernel", "fill_kernel"):
            k = np.asarray(getattr(self, name), dtype=bool)
            if k.ndim != 2 or k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
                raise ConfigError(f"{name} must be 2-D with odd dimensions")
            if not np.array_equal(k, k[::-1, ::-1]):
                raise ConfigError(f"{name} must be point-symmetric")
            setattr(self, name, k)
        if self.smoothing_window < 1 or self.smoothing_window % 2 == 0:
            raise ConfigError("smoothing_window must be a positive odd integer")


def _invert(sparse: np.ndarray, cfg: DensifierConfig):
    sparse = np.asarray(sparse, dtype=np.float64)
    valid = sparse > 0
    if not valid.any():
        raise EmptyInput("sparse depth map has no valid pixels")
    n_clamped = int(np.count_nonzero(sparse > cfg.max_depth))
    if n_clamped:
        log.warning("clamped %d depths above max_depth=%g", n_clamped, cfg.max_depth)
    clamped = np.minimum(sparse, cfg.max_depth)
    offset = cfg.max_depth + 1.0
    inv = np.where(valid, offset - clamped, 0.0)
    return sparse, valid, clamped, inv, offset


def _finish(sparse, valid, clamped, inv, offset):
    dense = np.where(inv > 0, offset - inv, 0.0)
    dense[valid] = clamped[valid]
    return dense


def _dilate(img, kernel):
    return ndimage.grey_dilation(img, footprint=kernel, mode="constant", cval=0.0)


def _erode(img, kernel):
    return ndimage.grey_erosion(img, footprint=kernel, mode="constant", cval=np.inf)


def _lower_median_of_valid(inv: np.ndarray, targets: np.ndarray, window: int) -> np.ndarray:
    """Lower median of the nonzero values in a square window around each target pixel."""
    h, w = inv.shape
    r = window // 2
    padded = np.pad(inv, r, mode="constant", constant_values=0.0)
    rows, cols = np.nonzero(targets)
    if len(rows) == 0:
        return np.zeros(0)
    dy, dx = np.mgrid[0:window, 0:window]
    samples = padded[rows[:, None] + dy.ravel()[None, :], cols[:, None] + dx.ravel()[None, :]]
    samples = np.where(samples > 0, samples, np.inf)
    samples.sort(axis=1)
    counts = np.count_nonzero(np.isfinite(samples), axis=1)
    return samples[np.arange(len(rows)), (counts - 1) // 2]


def densify(sparse: np.ndarray, cfg: DensifierConfig | None = None) -> np.ndarray:
    cfg = cfg or DensifierConfig()
    sparse, valid, clamped, inv, offset = _invert(sparse, cfg)

    out = _dilate(inv, cfg.dilation_kernel)
    out = _erode(_dilate(out, cfg.closing_kernel), cfg.closing_kernel)
    empty = out == 0
    out = np.where(empty, _dilate(out, cfg.fill_kernel), out)

    targets = ~valid & (out > 0)
    smoothed = out.copy()
    smoothed[targets] = _lower_median_of_valid(out, targets, cfg.smoothing_window)
    return _finish(sparse, valid, clamped, smoothed, offset)


def _window_values(img, i, j, kernel):
    h, w = len(img), len(img[0])
    kh, kw = kernel.shape
    ry, rx = kh // 2, kw // 2
    values = []
    for a in range(kh):
        for b in range(kw):
            if not kernel[a][b]:
                continue
            y, x = i + a - ry, j + b - rx
            if 0 <= y < h and 0 <= x < w:
                values.append(img[y][x])
    return values


def _oracle_dilate(img, kernel):
    return [[max(_window_values(img, i, j, kernel), default=0.0) for j in range(len(img[0]))]
            for i in range(len(img))]


def _oracle_erode(img, kernel):
    return [[min(_window_values(img, i, j, kernel), default=np.inf) for j in range(len(img[0]))]
            for i in range(len(img))]


def densify_oracle(sparse: np.ndarray, cfg: DensifierConfig | None = None) -> np.ndarray:
    """Per-pixel reference for :func:`densify` using plain Python loops.

    Same contract, no vectorisation; intended for tests only.
    """
    cfg = cfg or DensifierConfig()
    sparse, valid, clamped, inv, offset = _invert(sparse, cfg)
    h, w = inv.shape
    grid = inv.tolist()

    grid = _oracle_dilate(grid, cfg.dilation_kernel)
    grid = _oracle_erode(_oracle_dilate(grid, cfg.closing_kernel), cfg.closing_kernel)
    filled = _oracle_dilate(grid, cfg.fill_kernel)
    grid = [[filled[i][j] if grid[i][j] == 0 else grid[i][j] for j in range(w)] for i in range(h)]

    square = full_kernel(cfg.smoothing_window)
    smoothed = [row[:] for row in grid]
    for i in range(h):
        for j in range(w):
            if valid[i, j] or grid[i][j] == 0:
                continue
            vals = sorted(v for v in _window_values(grid, i, j, square) if v > 0)
            smoothed[i][j] = vals[(len(vals) - 1) // 2]
    return _finish(sparse, valid, clamped, np.array(smoothed, dtype=np.float64), offset)
