"""Dual-rate orchestration: slow segmenter keyframes, fast per-frame warping.

Per frame, in order: poll the segmenter (installing a new keyframe if a
result is due), offer the frame via submit_if_idle, then propagate the
keyframe mask to the current frame (track corners -> robust affine -> warp).
Exactly one FrameOutput is emitted per input frame, in input order. With
frame-count latency and a fixed seed the whole run is bit-reproducible.
"""

from __future__ import annotations

import logging
import time
from collections import Counter, OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .errors import EstimationFailed, FrameSourceError
from .features import Corner, corners_to_array, good_features
from .geometry import Affine2D, Correspondences, ransac_affine, warp_mask
from .images import Pyramid, build_pyramid, to_grayscale
from .optflow import lk_track_arrays
from .segmenter import Segmenter, SegmenterResult

log = logging.getLogger(__name__)

SOURCE_NONE = "none"
SOURCE_KEYFRAME = "keyframe"
SOURCE_WARPED = "warped"
SOURCE_FALLBACK = "fallback"

STAGES = ("prep", "track", "ransac", "warp")


@dataclass
class KeyframeRecord:
    frame_id: int
    gray: np.ndarray
    pyramid: Pyramid
    mask: np.ndarray
    corners: list[Corner]
    corner_xy: np.ndarray  # (N, 2) cached array form


@dataclass
class FrameOutput:
    frame_id: int
    mask: np.ndarray | None
    source: str
    keyframe_id: int | None = None
    transform: Affine2D | None = None
    n_tracked: int = 0
    n_inliers: int = 0
    timing: dict[str, float] = field(default_factory=dict)  # ms per stage

    @property
    def total_ms(self) -> float:
        return sum(self.timing.values())


@dataclass
class RunReport:
    frame_count: int = 0
    source_counts: Counter = field(default_factory=Counter)
    rows: list[FrameOutput] = field(default_factory=list)
    stage_ms: dict[str, list[float]] = field(
        default_factory=lambda: {s: [] for s in STAGES})

    def summary(self) -> dict:
        agg = {}
        totals = None
        for stage, vals in self.stage_ms.items():
            arr = np.array(vals) if vals else np.zeros(1)
            agg[stage] = {
                "mean_ms": float(arr.mean()),
                "p50_ms": float(np.percentile(arr, 50)),
                "p95_ms": float(np.percentile(arr, 95)),
            }
            totals = arr if totals is None else totals + arr
        total = totals if totals is not None else np.zeros(1)
        agg["total"] = {
            "mean_ms": float(total.mean()),
            "p50_ms": float(np.percentile(total, 50)),
            "p95_ms": float(np.percentile(total, 95)),
        }
        mean_ms = agg["total"]["mean_ms"]
        return {
            "frames": self.frame_count,
            "sources": dict(self.source_counts),
            "stages": agg,
            "achieved_fps": 1000.0 / mean_ms if mean_ms > 0 else float("inf"),
        }


def make_keyframe(frame_id: int, frame: np.ndarray, mask: np.ndarray,
                  cfg: PipelineConfig) -> KeyframeRecord:
    gray = to_grayscale(frame)
    pyramid = build_pyramid(gray, cfg.flow.levels, min_dim=cfg.flow.window)
    corners = good_features(pyramid.levels[0], mask, cfg.corner)
    return KeyframeRecord(frame_id, gray, pyramid, mask,
                          corners, corners_to_array(corners))


class Pipeline:
    """Stateful frame-loop driver. Use run() for the plain directory case."""

    def __init__(self, cfg: PipelineConfig, segmenter: Segmenter):
        cfg.validate()
        self.cfg = cfg
        self.segmenter = segmenter
        self.rng = np.random.default_rng(cfg.seed)
        self.keyframe: KeyframeRecord | None = None
        self.report = RunReport()
        self._cache: OrderedDict[int, np.ndarray] = OrderedDict()
        self._shape: tuple[int, int] | None = None
        self._last_mask: np.ndarray | None = None
        self._fallback_streak = 0

    # ------------------------------------------------------------------
    def process_frame(self, frame_id: int, frame: np.ndarray) -> FrameOutput:
        if frame.ndim != 3 or frame.shape[2] != 3:
            raise FrameSourceError(
                f"frame {frame_id}: expected (H, W, 3), got {frame.shape}")
        if self._shape is None:
            self._shape = frame.shape[:2]
        elif frame.shape[:2] != self._shape:
            raise FrameSourceError(
                f"frame {frame_id}: size changed from {self._shape} "
                f"to {frame.shape[:2]}")

        self._cache[frame_id] = frame
        while len(self._cache) > self.cfg.frame_cache:
            self._cache.popitem(last=False)

        res = self.segmenter.poll_result(now_frame=frame_id)
        if res is not None:
            self._install_keyframe(res)
        self.segmenter.submit_if_idle(frame_id, frame)

        out = self._propagate(frame_id, frame)
        self.report.frame_count += 1
        self.report.source_counts[out.source] += 1
        self.report.rows.append(out)
        if out.source in (SOURCE_KEYFRAME, SOURCE_WARPED, SOURCE_FALLBACK):
            for s in STAGES:
                self.report.stage_ms[s].append(out.timing.get(s, 0.0))
        if out.mask is not None:
            self._last_mask = out.mask
        return out

    def finish(self) -> RunReport:
        self.segmenter.close()
        return self.report

    # ------------------------------------------------------------------
    def _install_keyframe(self, res: SegmenterResult) -> None:
        frame = self._cache.get(res.frame_id)
        if frame is None:
            log.warning("segmented frame %d evicted from cache; keeping old keyframe",
                        res.frame_id)
            return
        self.keyframe = make_keyframe(res.frame_id, frame, res.mask, self.cfg)

    def _fallback(self, frame_id: int, kf: KeyframeRecord,
                  timing: dict[str, float]) -> FrameOutput:
        self._fallback_streak += 1
        if self._fallback_streak > self.cfg.fallback_limit:
            return FrameOutput(frame_id, None, SOURCE_NONE,
                               keyframe_id=kf.frame_id, timing=timing)
        mask = self._last_mask if self._last_mask is not None else kf.mask
        return FrameOutput(frame_id, mask, SOURCE_FALLBACK,
                           keyframe_id=kf.frame_id, timing=timing)

    def _propagate(self, frame_id: int, frame: np.ndarray) -> FrameOutput:
        kf = self.keyframe
        if kf is None:
            return FrameOutput(frame_id, None, SOURCE_NONE)

        timing: dict[str, float] = {}
        t0 = time.perf_counter()
        gray = to_grayscale(frame)
        pyramid = build_pyramid(gray, self.cfg.flow.levels,
                                min_dim=self.cfg.flow.window)
        timing["prep"] = (time.perf_counter() - t0) * 1000.0

        # a frame identical in id to the keyframe snaps to the exact mask
        if frame_id == kf.frame_id:
            self._fallback_streak = 0
            return FrameOutput(frame_id, kf.mask, SOURCE_KEYFRAME,
                               keyframe_id=kf.frame_id,
                               transform=Affine2D.identity(), timing=timing)

        t0 = time.perf_counter()
        if kf.corner_xy.shape[0] >= 3:
            dst, tracked, _resid = lk_track_arrays(
                kf.pyramid, pyramid, kf.corner_xy, self.cfg.flow)
        else:
            tracked = np.zeros(0, dtype=bool)
            dst = np.empty((0, 2))
        timing["track"] = (time.perf_counter() - t0) * 1000.0
        n_tracked = int(tracked.sum())

        if n_tracked < 3:
            return self._fallback(frame_id, kf, timing)

        t0 = time.perf_counter()
        pairs = Correspondences.of(kf.corner_xy[tracked], dst[tracked])
        try:
            transform, inliers = ransac_affine(pairs, self.cfg.ransac, self.rng)
        except EstimationFailed:
            timing["ransac"] = (time.perf_counter() - t0) * 1000.0
            return self._fallback(frame_id, kf, timing)
        timing["ransac"] = (time.perf_counter() - t0) * 1000.0

        if not transform.invertible:
            return self._fallback(frame_id, kf, timing)

        t0 = time.perf_counter()
        mask = warp_mask(kf.mask, transform)
        timing["warp"] = (time.perf_counter() - t0) * 1000.0

        self._fallback_streak = 0
        return FrameOutput(frame_id, mask, SOURCE_WARPED,
                           keyframe_id=kf.frame_id, transform=transform,
                           n_tracked=n_tracked, n_inliers=int(inliers.sum()),
                           timing=timing)


def run(frames, cfg: PipelineConfig, sink=None) -> RunReport:
    """Drive the pipeline over an iterable of (frame_id, color frame).

    `sink(output)` is called once per frame in order, if given.
    """
    segmenter = cfg.segmenter.build(cfg.seed)
    pipe = Pipeline(cfg, segmenter)
    try:
        for frame_id, frame in frames:
            out = pipe.process_frame(frame_id, frame)
            if sink is not None:
                sink(out)
    finally:
        segmenter.close()
    return pipe.finish()
