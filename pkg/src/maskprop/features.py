"""Shi-Tomasi corner extraction restricted to a foreground mask.

Corner score is the minimum eigenvalue of the windowed structure tensor;
candidates are 3x3 local maxima above a quality fraction of the strongest
foreground response, then greedily thinned by a minimum-distance rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import binary_erosion, correlate1d, maximum_filter

from .errors import ConfigError
from .images import gradients


@dataclass(frozen=True)
class Corner:
    x: float
    y: float
    score: float


@dataclass(frozen=True)
class CornerParams:
    max_count: int = 4000
    quality_level: float = 0.01
    min_distance: float = 8.0
    block_size: int = 5
    fg_erosion: int = 0  # optional margin away from the mask boundary

    def validate(self) -> "CornerParams":
        if self.max_count < 1:
            raise ConfigError(f"corner.max_count must be >= 1, got {self.max_count}")
        if not 0.0 < self.quality_level <= 1.0:
            raise ConfigError(
                f"corner.quality_level must be in (0, 1], got {self.quality_level}"
            )
        if self.min_distance < 0:
            raise ConfigError(
                f"corner.min_distance must be >= 0, got {self.min_distance}"
            )
        if self.block_size < 3 or self.block_size % 2 == 0:
            raise ConfigError(
                f"corner.block_size must be odd and >= 3, got {self.block_size}"
            )
        if self.fg_erosion < 0:
            raise ConfigError(f"corner.fg_erosion must be >= 0, got {self.fg_erosion}")
        return self


def min_eig_map(img: np.ndarray, block_size: int) -> np.ndarray:
    """Per-pixel minimum eigenvalue of the block_size structure tensor."""
    img = np.asarray(img, dtype=np.float64)
    if block_size < 3 or block_size % 2 == 0:
        raise ConfigError(f"block_size must be odd and >= 3, got {block_size}")
    if img.shape[0] <= block_size or img.shape[1] <= block_size:
        raise ValueError(
            f"image {img.shape} not larger than block_size {block_size}"
        )
    gx, gy = gradients(img)
    ones = np.ones(block_size)

    def window_sum(a):
        s = correlate1d(a, ones, axis=0, mode="nearest")
        return correlate1d(s, ones, axis=1, mode="nearest")

    mxx = window_sum(gx * gx)
    myy = window_sum(gy * gy)
    mxy = window_sum(gx * gy)
    tr = mxx + myy
    disc = np.sqrt((mxx - myy) ** 2 + 4.0 * mxy * mxy)
    lam = 0.5 * (tr - disc)
    # clip tiny negatives from the sqrt rounding
    return np.maximum(lam, 0.0)


def good_features(img: np.ndarray, fg: np.ndarray, params: CornerParams) -> list[Corner]:
    """Top corners inside the foreground mask, minimum-distance thinned."""
    params.validate()
    img = np.asarray(img, dtype=np.float64)
    fg = np.asarray(fg, dtype=bool)
    if fg.shape != img.shape:
        raise ValueError(f"mask shape {fg.shape} != image shape {img.shape}")

    if params.fg_erosion > 0:
        fg = binary_erosion(fg, iterations=params.fg_erosion)
    if not fg.any():
        return []

    score = min_eig_map(img, params.block_size)
    local_max = score >= maximum_filter(score, size=3, mode="nearest")
    top = score[fg].max()
    if top <= 0.0:
        return []
    cand = local_max & fg & (score >= params.quality_level * top)
    ys, xs = np.nonzero(cand)
    if xs.size == 0:
        return []
    vals = score[ys, xs]
    # score descending; row-major tiebreak keeps the order deterministic
    order = np.lexsort((xs, ys, -vals))
    xs, ys, vals = xs[order], ys[order], vals[order]

    min_d = params.min_distance
    if min_d <= 0:
        keep = slice(0, params.max_count)
        return [Corner(float(x), float(y), float(v))
                for x, y, v in zip(xs[keep], ys[keep], vals[keep])]

    # greedy suppression on a grid of min_distance-sized cells: any conflict
    # lives in one of the 3x3 neighbouring cells
    cell = min_d
    grid: dict[tuple[int, int], list[tuple[float, float]]] = {}
    out: list[Corner] = []
    min_d2 = min_d * min_d
    for x, y, v in zip(xs, ys, vals):
        cx, cy = int(x // cell), int(y // cell)
        ok = True
        for gx in (cx - 1, cx, cx + 1):
            for gy in (cy - 1, cy, cy + 1):
                for px, py in grid.get((gx, gy), ()):
                    dx, dy = px - x, py - y
                    if dx * dx + dy * dy < min_d2:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                break
        if ok:
            out.append(Corner(float(x), float(y), float(v)))
            grid.setdefault((cx, cy), []).append((float(x), float(y)))
            if len(out) >= params.max_count:
                break
    return out


def corners_to_array(corners: list[Corner]) -> np.ndarray:
    """(N, 2) float64 array of (x, y) positions."""
    if not corners:
        return np.empty((0, 2), dtype=np.float64)
    return np.array([(c.x, c.y) for c in corners], dtype=np.float64)
