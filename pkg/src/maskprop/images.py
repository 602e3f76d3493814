"""Raster conversions, image pyramids and spatial gradients.

Conventions used throughout the package:
  * color frame  -- (H, W, 3) uint8, RGB order
  * gray frame   -- (H, W) uint8 for storage, float64 for computation
  * binary mask  -- (H, W) bool
  * coordinates  -- x is the column index, y is the row index

Everything here is a pure function; arrays are never modified in place.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ConfigError

# BT.601 luma weights
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

# 5-tap binomial used for pyramid smoothing
_PYR_KERNEL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0

# Scharr derivative: [-1, 0, 1] along the gradient axis, [3, 10, 3]
# smoothing across it, 1/32 overall so a unit ramp yields gradient 1.
_SCHARR_DERIV = np.array([-1.0, 0.0, 1.0])
_SCHARR_SMOOTH = np.array([3.0, 10.0, 3.0])


def to_grayscale(frame: np.ndarray) -> np.ndarray:
    """BT.601 luma conversion, rounded and clamped to uint8."""
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) color frame, got shape {frame.shape}")
    luma = frame.astype(np.float64) @ LUMA_WEIGHTS
    return np.clip(np.rint(luma), 0, 255).astype(np.uint8)


class Pyramid:
    """Coarse-to-fine image stack. Level 0 is full resolution; each level
    halves width and height (rounding up). Spatial gradients per level are
    computed lazily and cached, so a keyframe pyramid pays for them once."""

    def __init__(self, levels: list[np.ndarray]):
        self.levels = levels
        self._grads: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    @property
    def level_count(self) -> int:
        return len(self.levels)

    def gradient(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        if k not in self._grads:
            self._grads[k] = gradients(self.levels[k])
        return self._grads[k]


def _smooth_and_decimate(img: np.ndarray) -> np.ndarray:
    sm = correlate1d(img, _PYR_KERNEL, axis=0, mode="nearest")
    sm = correlate1d(sm, _PYR_KERNEL, axis=1, mode="nearest")
    return sm[::2, ::2]


def build_pyramid(img: np.ndarray, level_count: int, min_dim: int = 1) -> Pyramid:
    """Build a binomial pyramid with `level_count` levels.

    The smallest level must keep both dimensions >= min_dim (callers pass the
    flow window size here); otherwise the requested depth is a config error.
    """
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"expected 2-d gray image, got shape {img.shape}")
    if level_count < 1:
        raise ConfigError(f"level_count must be >= 1, got {level_count}")
    h, w = img.shape
    th, tw = h, w
    for _ in range(level_count - 1):
        th, tw = (th + 1) // 2, (tw + 1) // 2
    if th < min_dim or tw < min_dim:
        raise ConfigError(
            f"{level_count} pyramid levels reduce a {w}x{h} image to "
            f"{tw}x{th}, below the minimum {min_dim}"
        )
    levels = [img.astype(np.float64)]
    for _ in range(level_count - 1):
        levels.append(_smooth_and_decimate(levels[-1]))
    return Pyramid(levels)


def gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scharr 3x3 gradients (normalization 1/32, replicated borders)."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 3 or img.shape[1] < 3:
        raise ValueError(f"gradients need an image of at least 3x3, got {img.shape}")
    gx = correlate1d(img, _SCHARR_DERIV, axis=1, mode="nearest")
    gx = correlate1d(gx, _SCHARR_SMOOTH, axis=0, mode="nearest") / 32.0
    gy = correlate1d(img, _SCHARR_DERIV, axis=0, mode="nearest")
    gy = correlate1d(gy, _SCHARR_SMOOTH, axis=1, mode="nearest") / 32.0
    return gx, gy


def check_mask(mask: np.ndarray, like: np.ndarray | None = None) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.dtype != np.bool_:
        raise ValueError(f"mask must be boolean, got dtype {mask.dtype}")
    if like is not None and mask.shape != like.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} != frame shape {like.shape[:2]}")
    return mask
