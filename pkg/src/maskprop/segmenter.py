"""Slow-segmenter abstraction with a single-slot submission contract.

The pipeline offers every frame through submit_if_idle; at most one request
is ever in flight. Two latency modes exist:

  * frame-count -- deterministic replay: the result for frame k becomes
    visible exactly when frame k+L is polled. No threads involved.
  * wall-clock  -- the mask is computed on a worker thread and released no
    earlier than `value` milliseconds after submission (for the external
    process the child's real compute time governs).

Built-in implementations: OracleSegmenter (ground-truth masks from disk,
optional corruption), ThresholdSegmenter (channel expression threshold),
ExternalProcessSegmenter (PPM in / PGM out over a child's stdio).
"""

from __future__ import annotations

import shlex
import subprocess
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import binary_dilation, binary_erosion

from . import pnm
from .errors import ConfigError, PnmError, SegmenterError

MODE_WALL_CLOCK = "wall-clock"
MODE_FRAME_COUNT = "frame-count"


@dataclass(frozen=True)
class LatencyModel:
    mode: str = MODE_WALL_CLOCK
    value: float = 100.0  # ms (wall-clock) or frames (frame-count)

    def validate(self) -> "LatencyModel":
        if self.mode not in (MODE_WALL_CLOCK, MODE_FRAME_COUNT):
            raise ConfigError(f"unknown latency mode {self.mode!r}")
        if self.value < 0:
            raise ConfigError(f"latency value must be >= 0, got {self.value}")
        return self


@dataclass(frozen=True)
class SegmenterResult:
    frame_id: int
    mask: np.ndarray


class Segmenter:
    """Base class handling the single-slot/latency contract.

    Subclasses implement _segment(frame_id, frame) -> bool mask. Results are
    delivered exactly once, in submission order (trivially, with one slot).
    """

    def __init__(self, latency: LatencyModel):
        self.latency = latency.validate()
        self._pending: dict | None = None
        self._last_frame_id: int | None = None
        self._closed = False
        self._lock = threading.Lock()

    # -- subclass hook ----------------------------------------------------
    def _segment(self, frame_id: int, frame: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # -- public contract --------------------------------------------------
    def submit_if_idle(self, frame_id: int, frame: np.ndarray) -> bool:
        """Accept the frame unless a request is already in flight."""
        if self._closed:
            raise SegmenterError("submit on a terminated segmenter")
        if self._last_frame_id is not None and frame_id <= self._last_frame_id:
            raise ValueError(
                f"frame ids must be strictly increasing "
                f"({frame_id} after {self._last_frame_id})"
            )
        if self._pending is not None:
            return False
        self._last_frame_id = frame_id
        if self.latency.mode == MODE_FRAME_COUNT:
            mask = self._segment(frame_id, frame)
            self._check_mask(mask, frame)
            self._pending = {
                "frame_id": frame_id,
                "mask": mask,
                "due_frame": frame_id + int(self.latency.value),
            }
        else:
            slot = {
                "frame_id": frame_id,
                "mask": None,
                "error": None,
                "t0": time.monotonic(),
                "done": threading.Event(),
            }

            def work():
                try:
                    mask = self._segment(frame_id, frame)
                    self._check_mask(mask, frame)
                    with self._lock:
                        slot["mask"] = mask
                except Exception as e:  # surfaced on the next poll
                    with self._lock:
                        slot["error"] = e
                finally:
                    slot["done"].set()

            self._pending = slot
            threading.Thread(target=work, daemon=True).start()
        return True

    def poll_result(self, now_frame: int | None = None) -> SegmenterResult | None:
        """Return the completed result once it is due, else None.

        In frame-count mode `now_frame` is the frame currently being
        processed; in wall-clock mode it is ignored.
        """
        slot = self._pending
        if slot is None:
            return None
        if self.latency.mode == MODE_FRAME_COUNT:
            if now_frame is None:
                raise ValueError("frame-count latency requires now_frame")
            if now_frame < slot["due_frame"]:
                return None
            self._pending = None
            return SegmenterResult(slot["frame_id"], slot["mask"])
        if not slot["done"].is_set():
            return None
        with self._lock:
            if slot["error"] is not None:
                self._pending = None
                err = slot["error"]
                if isinstance(err, SegmenterError):
                    raise err
                raise SegmenterError(f"segmenter worker failed: {err}") from err
        if (time.monotonic() - slot["t0"]) * 1000.0 < self.latency.value:
            return None
        self._pending = None
        return SegmenterResult(slot["frame_id"], slot["mask"])

    @property
    def busy(self) -> bool:
        return self._pending is not None

    def close(self) -> None:
        self._closed = True

    @staticmethod
    def _check_mask(mask: np.ndarray, frame: np.ndarray) -> None:
        if mask.dtype != np.bool_ or mask.shape != frame.shape[:2]:
            raise SegmenterError(
                f"segmenter returned mask {mask.shape}/{mask.dtype} for "
                f"frame {frame.shape[:2]}"
            )


@dataclass(frozen=True)
class CorruptionModel:
    """Optional imperfect-output emulation for the oracle segmenter."""
    morph_radius: int = 0       # > 0 dilate, < 0 erode
    border_flip_fraction: float = 0.0
    seed: int = 0

    def apply(self, mask: np.ndarray) -> np.ndarray:
        out = mask
        r = self.morph_radius
        if r > 0:
            out = binary_dilation(out, iterations=r)
        elif r < 0:
            out = binary_erosion(out, iterations=-r)
        if self.border_flip_fraction > 0.0:
            border = binary_dilation(out, iterations=1) & ~binary_erosion(out, iterations=1)
            ys, xs = np.nonzero(border)
            if ys.size:
                rng = np.random.default_rng(self.seed)
                pick = rng.random(ys.size) < self.border_flip_fraction
                out = out.copy()
                out[ys[pick], xs[pick]] = ~out[ys[pick], xs[pick]]
        return out


class OracleSegmenter(Segmenter):
    """Serves ground-truth masks for frame ids from a directory of PGMs."""

    def __init__(self, mask_dir, latency: LatencyModel,
                 corruption: CorruptionModel | None = None):
        super().__init__(latency)
        self.mask_dir = Path(mask_dir)
        self.corruption = corruption
        self._index = dict(pnm.numbered_files(self.mask_dir, ".pgm"))
        if not self._index:
            raise ConfigError(f"no numbered .pgm masks found in {self.mask_dir}")

    def _segment(self, frame_id: int, frame: np.ndarray) -> np.ndarray:
        path = self._index.get(frame_id)
        if path is None:
            raise SegmenterError(f"oracle has no mask for frame {frame_id}")
        mask = pnm.read_mask(path)
        if self.corruption is not None:
            mask = self.corruption.apply(mask)
        return mask


_CHANNELS = {"r": 0, "g": 1, "b": 2}


def channel_expression(frame: np.ndarray, expr: str) -> np.ndarray:
    """Evaluate a tiny channel expression: 'r'|'g'|'b'|'luma' or 'c1-c2'."""
    expr = expr.strip().lower()
    f = frame.astype(np.float64)
    if expr == "luma":
        from .images import LUMA_WEIGHTS
        return f @ LUMA_WEIGHTS
    if expr in _CHANNELS:
        return f[:, :, _CHANNELS[expr]]
    if "-" in expr:
        a, b = (s.strip() for s in expr.split("-", 1))
        if a in _CHANNELS and b in _CHANNELS:
            return f[:, :, _CHANNELS[a]] - f[:, :, _CHANNELS[b]]
    raise ConfigError(f"unsupported channel expression {expr!r}")


class ThresholdSegmenter(Segmenter):
    """Foreground = channel expression strictly above a threshold."""

    def __init__(self, latency: LatencyModel, threshold: float,
                 channel: str = "luma"):
        super().__init__(latency)
        self.threshold = float(threshold)
        self.channel = channel
        channel_expression(np.zeros((1, 1, 3), np.uint8), channel)  # validate

    def _segment(self, frame_id: int, frame: np.ndarray) -> np.ndarray:
        return channel_expression(frame, self.channel) > self.threshold


class ExternalProcessSegmenter(Segmenter):
    """Talks to a child process: one P6 PPM on its stdin per frame, one P5
    PGM (values 0/255) on its stdout per frame, strictly alternating. The
    observed latency is the child's real compute time."""

    def __init__(self, command: str, latency: LatencyModel | None = None):
        super().__init__(latency or LatencyModel(MODE_WALL_CLOCK, 0.0))
        self.command = command
        try:
            self._proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=None,  # pass through for logging
            )
        except OSError as e:
            raise SegmenterError(f"cannot start segmenter command {command!r}: {e}")

    def _segment(self, frame_id: int, frame: np.ndarray) -> np.ndarray:
        proc = self._proc
        if proc.poll() is not None:
            raise SegmenterError(
                f"segmenter child exited with code {proc.returncode}"
            )
        try:
            pnm.write_ppm_stream(proc.stdin, frame)
            proc.stdin.flush()
            mask = pnm.read_mask_stream(proc.stdout)
        except (OSError, PnmError) as e:
            raise SegmenterError(f"segmenter protocol error: {e}") from e
        if mask.shape != frame.shape[:2]:
            raise SegmenterError(
                f"child returned {mask.shape} mask for {frame.shape[:2]} frame"
            )
        return mask

    def close(self) -> None:
        super().close()
        proc = self._proc
        if proc.poll() is None:
            try:
                proc.stdin.close()
            except OSError:
                pass
            try:
                proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                proc.kill()
