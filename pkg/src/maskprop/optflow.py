"""Pyramidal Lucas-Kanade sparse optical flow.

Forward-additive LK over a binomial pyramid: the structure tensor G is built
once per level per point from the reference (keyframe) window, then the
displacement is refined iteratively against the current frame with bilinear
subpixel sampling. Points whose window leaves the image or whose tensor is
near-singular are reported lost rather than raising.

The per-point loop is numba-compiled; points are independent, so output
order always matches input order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConfigError
from .images import Pyramid

STATUS_TRACKED = "tracked"
STATUS_LOST = "lost"


@dataclass(frozen=True)
class FlowParams:
    window: int = 21
    levels: int = 3
    max_iters: int = 30
    epsilon: float = 0.01
    min_eig_threshold: float = 1e-4  # on intensities normalized to [0, 1]

    def validate(self) -> "FlowParams":
        if self.window < 3 or self.window % 2 == 0:
            raise ConfigError(f"flow.window must be odd and >= 3, got {self.window}")
        if self.levels < 1:
            raise ConfigError(f"flow.levels must be >= 1, got {self.levels}")
        if self.max_iters < 1:
            raise ConfigError(f"flow.max_iters must be >= 1, got {self.max_iters}")
        if self.epsilon <= 0:
            raise ConfigError(f"flow.epsilon must be > 0, got {self.epsilon}")
        return self


@dataclass(frozen=True)
class TrackedPoint:
    src: tuple[float, float]
    dst: tuple[float, float]
    status: str
    residual: float  # mean |intensity error| over the window at dst


@njit(cache=True, fastmath=True)
def _lk_level(prev, gx, gy, nxt, src_lvl, d, status, win, max_iters,
              eps, min_eig_norm, strict, residual):
    h, w = prev.shape
    hw = (win - 1) // 2
    n = src_lvl.shape[0]
    area = win * win
    for p in range(n):
        if status[p] == 0:
            continue
        cx = src_lvl[p, 0]
        cy = src_lvl[p, 1]
        x0 = cx - hw
        y0 = cy - hw
        # reference window (and its bilinear support) must lie inside prev;
        # at coarse levels a border graze just skips refinement there
        if x0 < 0.0 or y0 < 0.0 or x0 + win > w - 1 or y0 + win > h - 1:
            if strict:
                status[p] = 0
            continue
        ix = int(np.floor(x0))
        iy = int(np.floor(y0))
        ax = x0 - ix
        ay = y0 - iy
        w00 = (1.0 - ax) * (1.0 - ay)
        w01 = ax * (1.0 - ay)
        w10 = (1.0 - ax) * ay
        w11 = ax * ay
        iwin = np.empty((win, win))
        gxwin = np.empty((win, win))
        gywin = np.empty((win, win))
        gxx = 0.0
        gyy = 0.0
        gxy = 0.0
        for r in range(win):
            for c in range(win):
                yy = iy + r
                xx = ix + c
                iwin[r, c] = (w00 * prev[yy, xx] + w01 * prev[yy, xx + 1]
                              + w10 * prev[yy + 1, xx] + w11 * prev[yy + 1, xx + 1])
                gvx = (w00 * gx[yy, xx] + w01 * gx[yy, xx + 1]
                       + w10 * gx[yy + 1, xx] + w11 * gx[yy + 1, xx + 1])
                gvy = (w00 * gy[yy, xx] + w01 * gy[yy, xx + 1]
                       + w10 * gy[yy + 1, xx] + w11 * gy[yy + 1, xx + 1])
                gxwin[r, c] = gvx
                gywin[r, c] = gvy
                gxx += gvx * gvx
                gyy += gvy * gvy
                gxy += gvx * gvy
        tr = gxx + gyy
        disc = np.sqrt((gxx - gyy) * (gxx - gyy) + 4.0 * gxy * gxy)
        lam_min = 0.5 * (tr - disc)
        if lam_min / (area * 255.0 * 255.0) < min_eig_norm:
            if strict:
                status[p] = 0
            continue
        det = gxx * gyy - gxy * gxy
        if det <= 0.0:
            if strict:
                status[p] = 0
            continue
        inv00 = gyy / det
        inv01 = -gxy / det
        inv11 = gxx / det

        dx = d[p, 0]
        dy = d[p, 1]
        ok = True
        for _ in range(max_iters):
            nx0 = cx + dx - hw
            ny0 = cy + dy - hw
            if nx0 < 0.0 or ny0 < 0.0 or nx0 + win > w - 1 or ny0 + win > h - 1:
                ok = False
                break
            jx = int(np.floor(nx0))
            jy = int(np.floor(ny0))
            bx = nx0 - jx
            by = ny0 - jy
            v00 = (1.0 - bx) * (1.0 - by)
            v01 = bx * (1.0 - by)
            v10 = (1.0 - bx) * by
            v11 = bx * by
            b0 = 0.0
            b1 = 0.0
            for r in range(win):
                for c in range(win):
                    yy = jy + r
                    xx = jx + c
                    cur = (v00 * nxt[yy, xx] + v01 * nxt[yy, xx + 1]
                           + v10 * nxt[yy + 1, xx] + v11 * nxt[yy + 1, xx + 1])
                    diff = iwin[r, c] - cur
                    b0 += diff * gxwin[r, c]
                    b1 += diff * gywin[r, c]
            sx = inv00 * b0 + inv01 * b1
            sy = inv01 * b0 + inv11 * b1
            dx += sx
            dy += sy
            if sx * sx + sy * sy < eps * eps:
                break
        if not ok:
            if strict:
                status[p] = 0
            continue
        d[p, 0] = dx
        d[p, 1] = dy
        if strict:
            nx0 = cx + dx - hw
            ny0 = cy + dy - hw
            if nx0 < 0.0 or ny0 < 0.0 or nx0 + win > w - 1 or ny0 + win > h - 1:
                status[p] = 0
                continue
            jx = int(np.floor(nx0))
            jy = int(np.floor(ny0))
            bx = nx0 - jx
            by = ny0 - jy
            v00 = (1.0 - bx) * (1.0 - by)
            v01 = bx * (1.0 - by)
            v10 = (1.0 - bx) * by
            v11 = bx * by
            acc = 0.0
            for r in range(win):
                for c in range(win):
                    yy = jy + r
                    xx = jx + c
                    cur = (v00 * nxt[yy, xx] + v01 * nxt[yy, xx + 1]
                           + v10 * nxt[yy + 1, xx] + v11 * nxt[yy + 1, xx + 1])
                    acc += abs(iwin[r, c] - cur)
            residual[p] = acc / area


def lk_track_arrays(
    prev: Pyramid,
    nxt: Pyramid,
    points: np.ndarray,
    params: FlowParams = FlowParams(),
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Array form of lk_track: returns (dst (N,2), tracked (N,) bool, residual (N,))."""
    params.validate()
    if prev.level_count < params.levels or nxt.level_count < params.levels:
        raise ConfigError(
            f"pyramids have {prev.level_count}/{nxt.level_count} levels, "
            f"flow needs {params.levels}"
        )
    if prev.levels[0].shape != nxt.levels[0].shape:
        raise ValueError("pyramids were built from differently sized frames")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = pts.shape[0]
    d = np.zeros((n, 2), dtype=np.float64)
    status = np.ones(n, dtype=np.uint8)
    residual = np.zeros(n, dtype=np.float64)
    for k in range(params.levels - 1, -1, -1):
        gx, gy = prev.gradient(k)
        src_lvl = pts / (2.0 ** k)
        _lk_level(
            prev.levels[k], gx, gy, nxt.levels[k], src_lvl, d, status,
            params.window, params.max_iters, params.epsilon,
            params.min_eig_threshold, k == 0, residual,
        )
        if k > 0:
            d *= 2.0
    dst = pts + d
    tracked = status.astype(bool)
    # keep every reported field finite; lost points fall back to src / 0
    dst[~tracked] = pts[~tracked]
    residual[~tracked] = 0.0
    return dst, tracked, residual


def lk_track(
    prev: Pyramid,
    nxt: Pyramid,
    points,
    params: FlowParams = FlowParams(),
) -> list[TrackedPoint]:
    """Track corners from the keyframe pyramid into the current frame."""
    from .features import Corner, corners_to_array

    if points and isinstance(points[0], Corner):
        pts = corners_to_array(points)
    else:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    dst, tracked, residual = lk_track_arrays(prev, nxt, pts, params)
    out = []
    for i in range(pts.shape[0]):
        out.append(TrackedPoint(
            src=(float(pts[i, 0]), float(pts[i, 1])),
            dst=(float(dst[i, 0]), float(dst[i, 1])),
            status=STATUS_TRACKED if tracked[i] else STATUS_LOST,
            residual=float(residual[i]),
        ))
    return out
