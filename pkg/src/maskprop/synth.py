"""Synthetic sequences with exact ground truth.

A textured tool polygon moves over a textured background under a scripted
affine motion (constant-velocity and/or sinusoidal translation, rotation
about the initial centroid). An optional bend flexes the polygon's distal
half about a hinge vertex, which no single affine can follow -- the rigid
warping pipeline is expected to degrade on it. Ground truth is the exact
pixel-center rasterization of the (bent, transformed) polygon.

The manifest records the true affine per frame:
    frame_id, a11, a12, a21, a22, tx, ty, bend_deg
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

from . import pnm
from .config import parse_kv_file
from .errors import ConfigError
from .geometry import Affine2D

_EDGE_TOL = 1e-9


def default_rod_polygon(width: int, height: int) -> np.ndarray:
    """Six-vertex rod centred on the canvas, with mid-rod hinge vertices."""
    L = 0.42 * width
    t = 0.10 * height
    cx, cy = width / 2.0, height / 2.0
    x0, x1 = cx - L / 2, cx + L / 2
    xm = cx
    y0, y1 = cy - t / 2, cy + t / 2
    return np.array([
        (x0, y0), (xm, y0), (x1, y0),
        (x1, y1), (xm, y1), (x0, y1),
    ], dtype=np.float64)


@dataclass
class SynthScript:
    width: int = 720
    height: int = 576
    frames: int = 60
    bg_period: float = 48.0
    bg_amp: float = 22.0
    noise_amp: float = 10.0
    polygon: np.ndarray | None = None          # (N, 2); default: centred rod
    translate_per_frame: tuple[float, float] = (0.0, 0.0)
    translate_amp: tuple[float, float] = (0.0, 0.0)
    translate_period: float = 0.0              # frames; 0 disables
    rotate_per_frame_deg: float = 0.0
    bend_per_frame_deg: float = 0.0
    bend_max_deg: float = 45.0                 # triangle-wave fold amplitude
    hinge_index: int = 1
    speckle_rate: float = 0.0                  # speckle centres per pixel per frame
    tex_amp: float = 50.0

    def resolved_polygon(self) -> np.ndarray:
        if self.polygon is None:
            return default_rod_polygon(self.width, self.height)
        return np.asarray(self.polygon, dtype=np.float64)

    def validate(self) -> "SynthScript":
        if self.width < 16 or self.height < 16:
            raise ConfigError("canvas must be at least 16x16")
        if self.frames < 1:
            raise ConfigError("frames must be >= 1")
        poly = self.resolved_polygon()
        if poly.shape[0] < 3 or poly.shape[1] != 2:
            raise ConfigError(f"polygon needs at least 3 (x, y) vertices, got {poly.shape}")
        if not polygon_is_simple(poly):
            raise ConfigError("tool polygon is self-intersecting")
        if not 0 <= self.hinge_index < poly.shape[0]:
            raise ConfigError(f"hinge_index {self.hinge_index} out of range")
        if not 0.0 <= self.speckle_rate < 0.05:
            raise ConfigError("speckle_rate must be in [0, 0.05)")
        return self


def _parse_pair(key: str, v: str) -> tuple[float, float]:
    parts = v.replace(";", ",").split(",")
    if len(parts) != 2:
        raise ConfigError(f"{key} expects 'x,y', got {v!r}")
    return float(parts[0]), float(parts[1])


def load_script(path) -> SynthScript:
    kv = parse_kv_file(path)
    s = SynthScript()
    for key, v in kv.items():
        try:
            if key in ("width", "height", "frames", "hinge_index"):
                setattr(s, key, int(v))
            elif key in ("bg_period", "bg_amp", "noise_amp", "rotate_per_frame_deg",
                         "bend_per_frame_deg", "bend_max_deg", "translate_period",
                         "speckle_rate", "tex_amp"):
                setattr(s, key, float(v))
            elif key in ("translate_per_frame", "translate_amp"):
                setattr(s, key, _parse_pair(key, v))
            elif key == "polygon":
                pts = [tuple(map(float, p.split(","))) for p in v.split(";") if p.strip()]
                s.polygon = np.array(pts, dtype=np.float64)
            else:
                raise ConfigError(f"unknown script key {key!r}")
        except ValueError as e:
            raise ConfigError(f"script key {key}: {e}") from e
    return s.validate()


# ---------------------------------------------------------------------------
# geometry of the scripted motion

def _cross2(a, b) -> float:
    return a[0] * b[1] - a[1] * b[0]


def _segments_intersect(p1, p2, p3, p4) -> bool:
    d1 = _cross2(p4 - p3, p1 - p3)
    d2 = _cross2(p4 - p3, p2 - p3)
    d3 = _cross2(p2 - p1, p3 - p1)
    d4 = _cross2(p2 - p1, p4 - p1)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def polygon_is_simple(poly: np.ndarray) -> bool:
    n = poly.shape[0]
    for i in range(n):
        a1, a2 = poly[i], poly[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue  # shared-vertex neighbours
            b1, b2 = poly[j], poly[(j + 1) % n]
            if _segments_intersect(a1, a2, b1, b2):
                return False
    return True


def polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def bend_angle_deg(script: SynthScript, frame: int) -> float:
    """Triangle wave: the distal half flexes at bend_per_frame_deg per frame
    up to +-bend_max_deg and back, so long runs remain geometrically sane."""
    rate = script.bend_per_frame_deg
    m = script.bend_max_deg
    if rate == 0.0 or m <= 0.0:
        return 0.0
    x = (rate * frame) % (4.0 * m)
    if x <= m:
        return x
    if x <= 3.0 * m:
        return 2.0 * m - x
    return x - 4.0 * m


def affine_at(script: SynthScript, frame: int) -> Affine2D:
    """True rigid motion of frame `frame` (maps frame-0 coordinates)."""
    theta = np.deg2rad(script.rotate_per_frame_deg * frame)
    R = np.array([[np.cos(theta), -np.sin(theta)],
                  [np.sin(theta), np.cos(theta)]])
    c = script.resolved_polygon().mean(axis=0)
    shift = np.array(script.translate_per_frame) * frame
    if script.translate_period > 0:
        amp = np.array(script.translate_amp)
        shift = shift + amp * np.sin(2.0 * np.pi * frame / script.translate_period)
    t = c - R @ c + shift
    return Affine2D(R, t)


def _rot_about(pts: np.ndarray, pivot: np.ndarray, deg: float) -> np.ndarray:
    th = np.deg2rad(deg)
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    return (pts - pivot) @ R.T + pivot


def polygon_at(script: SynthScript, frame: int) -> np.ndarray:
    poly = script.resolved_polygon().copy()
    bend = bend_angle_deg(script, frame)
    if bend != 0.0:
        pivot = poly[script.hinge_index]
        distal = poly[:, 0] > pivot[0] + _EDGE_TOL
        poly[distal] = _rot_about(poly[distal], pivot, bend)
    return affine_at(script, frame).apply(poly)


# ---------------------------------------------------------------------------
# rasterization

def rasterize_polygon(poly: np.ndarray, width: int, height: int) -> np.ndarray:
    """Pixel-center-in-polygon test (even-odd rule); centers exactly on an
    edge count as foreground."""
    poly = np.asarray(poly, dtype=np.float64)
    px, py = np.meshgrid(np.arange(width, dtype=np.float64),
                         np.arange(height, dtype=np.float64))
    inside = np.zeros((height, width), dtype=bool)
    n = poly.shape[0]
    on_edge = np.zeros((height, width), dtype=bool)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        crosses = (y1 > py) != (y2 > py)
        if crosses.any():
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = (x2 - x1) * (py - y1) / (y2 - y1) + x1
            inside ^= crosses & (px < xint)
        # tie handling: distance from the pixel center to the segment
        ex, ey = x2 - x1, y2 - y1
        L2 = ex * ex + ey * ey
        if L2 == 0.0:
            continue
        tpar = np.clip(((px - x1) * ex + (py - y1) * ey) / L2, 0.0, 1.0)
        dx = px - (x1 + tpar * ex)
        dy = py - (y1 + tpar * ey)
        on_edge |= dx * dx + dy * dy <= _EDGE_TOL
    return inside | on_edge


# ---------------------------------------------------------------------------
# rendering

def _smoothed_noise(shape, rng, sigma=1.6) -> np.ndarray:
    """Zero-mean, unit-variance value noise with correlation length sigma."""
    n = gaussian_filter(rng.standard_normal(shape), sigma)
    sd = n.std()
    return n / sd if sd > 0 else n


def render_sequence(script: SynthScript, seed: int):
    """Yield (frame_id, color frame, gt mask, affine, bend_deg) per frame."""
    script.validate()
    w, h = script.width, script.height
    ss = np.random.SeedSequence(seed)
    bg_ss, tex_ss, speck_ss = ss.spawn(3)
    bg_rng = np.random.default_rng(bg_ss)
    tex_rng = np.random.default_rng(tex_ss)

    # everything needed to fail fast: geometry of every frame, checked before
    # any frame is rendered
    polys = [polygon_at(script, f) for f in range(script.frames)]
    affines = [affine_at(script, f) for f in range(script.frames)]
    bends = [bend_angle_deg(script, f) for f in range(script.frames)]
    for f, poly in enumerate(polys):
        if not polygon_is_simple(poly):
            raise ConfigError(f"frame {f}: scripted motion makes the polygon self-intersect")
    masks = [rasterize_polygon(poly, w, h) for poly in polys]
    for f, (poly, mask) in enumerate(zip(polys, masks)):
        area = polygon_area(poly)
        if area > 0 and mask.sum() < 0.5 * area:
            raise ConfigError(f"frame {f}: less than 50% of the tool stays in frame")

    xg, yg = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    grid = np.sin(2 * np.pi * xg / script.bg_period) * np.sin(2 * np.pi * yg / script.bg_period)
    bg_gray = 120.0 + script.bg_amp * grid + script.noise_amp * _smoothed_noise((h, w), bg_rng)
    bg_gray = np.clip(bg_gray, 20, 235)
    background = np.stack([bg_gray, 0.62 * bg_gray, 0.50 * bg_gray], axis=-1)

    # tool texture lives in frame-0 coordinates and moves rigidly with the
    # script's affine, so trackable structure follows the tool; two noise
    # octaves keep it matchable at every pyramid level (a single fine or
    # periodic pattern aliases under large inter-keyframe motion)
    tex_field = script.tex_amp * (0.7 * _smoothed_noise((h, w), tex_rng, sigma=2.0)
                                  + 0.3 * _smoothed_noise((h, w), tex_rng, sigma=5.0))

    speckle_rngs = [np.random.default_rng(c) for c in speck_ss.spawn(script.frames)]

    for f in range(script.frames):
        mask = masks[f]
        frame = background.copy()
        if mask.any():
            inv = affines[f].inverse()
            ys, xs = np.nonzero(mask)
            bx = inv.A[0, 0] * xs + inv.A[0, 1] * ys + inv.t[0]
            by = inv.A[1, 0] * xs + inv.A[1, 1] * ys + inv.t[1]
            tex = map_coordinates(tex_field, [by, bx], order=1, mode="nearest")
            v = np.clip(160.0 + tex, 70, 245)
            frame[ys, xs, 0] = 0.45 * v
            frame[ys, xs, 1] = 0.55 * v
            frame[ys, xs, 2] = v
        if script.speckle_rate > 0:
            rng = speckle_rngs[f]
            k = rng.poisson(script.speckle_rate * w * h)
            if k > 0:
                sx = rng.integers(0, w - 1, size=k)
                sy = rng.integers(0, h - 1, size=k)
                for ddy in (0, 1):
                    for ddx in (0, 1):
                        frame[sy + ddy, sx + ddx] = 255.0
        yield f, np.clip(np.rint(frame), 0, 255).astype(np.uint8), mask, affines[f], bends[f]


def synth_sequence(script: SynthScript, seed: int, out_dir):
    """Render to disk: out/frames/*.ppm, out/masks/*.pgm, out/manifest.csv.

    Returns (frames_dir, masks_dir, manifest_path).
    """
    out_dir = Path(out_dir)
    frames_dir = out_dir / "frames"
    masks_dir = out_dir / "masks"
    frames_dir.mkdir(parents=True, exist_ok=True)
    masks_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.csv"
    with open(manifest_path, "w", newline="") as mf:
        wcsv = csv.writer(mf)
        wcsv.writerow(["frame_id", "a11", "a12", "a21", "a22", "tx", "ty", "bend_deg"])
        for f, frame, mask, aff, bend in render_sequence(script, seed):
            pnm.write_ppm(frames_dir / f"{f:06d}.ppm", frame)
            pnm.write_mask(masks_dir / f"{f:06d}.pgm", mask)
            a11, a12, a21, a22, tx, ty = aff.params()
            wcsv.writerow([f, repr(a11), repr(a12), repr(a21), repr(a22),
                           repr(tx), repr(ty), repr(bend)])
    return frames_dir, masks_dir, manifest_path
