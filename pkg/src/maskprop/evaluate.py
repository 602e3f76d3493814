"""Segmentation quality metrics: sensitivity, specificity, balanced accuracy.

Both pixel-pooled (all frames lumped into one confusion matrix) and
per-frame-mean variants are reported; degenerate ratios (no foreground or no
background in the reference) are tracked as not-applicable rather than
guessed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import pnm
from .errors import FrameSourceError


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.fp + other.fp,
                         self.tn + other.tn, self.fn + other.fn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class Metrics:
    sensitivity: float | None
    specificity: float | None
    balanced_accuracy: float | None


def confusion(pred: np.ndarray, gt: np.ndarray) -> Confusion:
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    tn = pred.size - tp - fp - fn
    return Confusion(tp, fp, tn, fn)


def metrics(c: Confusion) -> Metrics:
    sens = c.tp / (c.tp + c.fn) if c.tp + c.fn > 0 else None
    spec = c.tn / (c.tn + c.fp) if c.tn + c.fp > 0 else None
    bal = (sens + spec) / 2.0 if sens is not None and spec is not None else None
    return Metrics(sens, spec, bal)


@dataclass
class MetricReport:
    pooled: Metrics
    per_frame_mean: Metrics
    frames_compared: int
    frames_excluded: int
    per_frame: list[tuple[int, Confusion, Metrics]] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["frame_id", "tp", "fp", "tn", "fn",
                        "sensitivity", "specificity", "balanced_accuracy"])
            for fid, c, m in self.per_frame:
                w.writerow([fid, c.tp, c.fp, c.tn, c.fn,
                            _fmt(m.sensitivity), _fmt(m.specificity),
                            _fmt(m.balanced_accuracy)])

    def summary_lines(self) -> list[str]:
        p, m = self.pooled, self.per_frame_mean
        return [
            f"frames_compared {self.frames_compared}",
            f"frames_excluded {self.frames_excluded}",
            f"pooled sensitivity {_fmt(p.sensitivity)} specificity "
            f"{_fmt(p.specificity)} balanced_accuracy {_fmt(p.balanced_accuracy)}",
            f"per_frame_mean sensitivity {_fmt(m.sensitivity)} specificity "
            f"{_fmt(m.specificity)} balanced_accuracy {_fmt(m.balanced_accuracy)}",
        ]


def _fmt(v) -> str:
    return "n/a" if v is None else f"{v:.6f}"


def _mean_or_none(vals: list[float]) -> float | None:
    return float(np.mean(vals)) if vals else None


def aggregate(per_frame: list[tuple[int, Confusion]]) -> MetricReport:
    pooled_c = Confusion()
    rows = []
    sens, spec, bal = [], [], []
    for fid, c in per_frame:
        pooled_c = pooled_c + c
        m = metrics(c)
        rows.append((fid, c, m))
        if m.sensitivity is not None:
            sens.append(m.sensitivity)
        if m.specificity is not None:
            spec.append(m.specificity)
        if m.balanced_accuracy is not None:
            bal.append(m.balanced_accuracy)
    report = MetricReport(
        pooled=metrics(pooled_c),
        per_frame_mean=Metrics(_mean_or_none(sens), _mean_or_none(spec),
                               _mean_or_none(bal)),
        frames_compared=len(per_frame),
        frames_excluded=0,
        per_frame=rows,
    )
    return report


def evaluate_sequence(pred_dir, gt_dir) -> MetricReport:
    """Compare numbered PGM masks frame by frame.

    Ground-truth frames with no prediction file are counted as excluded
    (the pipeline emits nothing before its first keyframe). Prediction
    files without a ground-truth counterpart are an error.
    """
    pred = dict(pnm.numbered_files(pred_dir, ".pgm"))
    gt = dict(pnm.numbered_files(gt_dir, ".pgm"))
    if not gt:
        raise FrameSourceError(f"no ground-truth masks found in {gt_dir}")
    orphans = sorted(set(pred) - set(gt))
    if orphans:
        raise FrameSourceError(
            f"predictions without ground truth: frames {orphans[:10]}"
            + ("..." if len(orphans) > 10 else ""))
    compared = []
    excluded = 0
    for fid in sorted(gt):
        if fid not in pred:
            excluded += 1
            continue
        p = pnm.read_mask(pred[fid])
        g = pnm.read_mask(gt[fid])
        if p.shape != g.shape:
            raise FrameSourceError(
                f"frame {fid}: prediction {p.shape} vs ground truth {g.shape}")
        compared.append((fid, confusion(p, g)))
    report = aggregate(compared)
    report.frames_excluded = excluded
    return report
