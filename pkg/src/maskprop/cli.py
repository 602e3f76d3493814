"""Command-line entry point: synth, run, eval, track, bench.

Exit codes: 0 success, 1 configuration/usage error, 2 I/O error,
3 segmenter protocol or fatal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, pnm
from .config import PipelineConfig, config_from_dict, config_snapshot, load_config
from .errors import ConfigError, FrameSourceError, PnmError, SegmenterError
from .evaluate import evaluate_sequence
from .features import good_features
from .geometry import Correspondences, ransac_affine
from .images import build_pyramid, to_grayscale
from .optflow import lk_track
from .pipeline import Pipeline, RunReport
from .synth import SynthScript, load_script, synth_sequence

_CONFIG_KEY_HELP = """\
config file keys (key = value, '#' comments):
  corner.max_count corner.quality_level corner.min_distance corner.block_size
  corner.fg_erosion
  flow.window flow.levels flow.max_iters flow.epsilon flow.min_eig_threshold
  ransac.inlier_threshold ransac.max_iters ransac.confidence ransac.min_inliers
  segmenter.kind (oracle|threshold|external) segmenter.latency_mode
  (wall-clock|frame-count) segmenter.latency_value segmenter.command
  segmenter.mask_dir segmenter.threshold segmenter.channel
  segmenter.corrupt_morph_radius segmenter.corrupt_border_flip
  pipeline.fallback_limit pipeline.frame_cache seed
"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _load_frames(frames_dir):
    entries = pnm.numbered_files(frames_dir, ".ppm")
    if not Path(frames_dir).is_dir():
        raise FrameSourceError(f"frames directory not found: {frames_dir}")
    for fid, path in entries:
        yield fid, pnm.read_ppm(path)


def _build_config(args) -> PipelineConfig:
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.config:
        return load_config(args.config, overrides)
    return config_from_dict(overrides)


def _write_report(path, report: RunReport) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["frame_id", "source", "keyframe_id", "n_tracked", "n_inliers",
                    "a11", "a12", "a21", "a22", "tx", "ty",
                    "t_prep_ms", "t_track_ms", "t_ransac_ms", "t_warp_ms", "t_total_ms"])
        for out in report.rows:
            params = out.transform.params() if out.transform else ("",) * 6
            w.writerow([
                out.frame_id, out.source,
                "" if out.keyframe_id is None else out.keyframe_id,
                out.n_tracked, out.n_inliers, *params,
                f"{out.timing.get('prep', 0.0):.3f}",
                f"{out.timing.get('track', 0.0):.3f}",
                f"{out.timing.get('ransac', 0.0):.3f}",
                f"{out.timing.get('warp', 0.0):.3f}",
                f"{out.total_ms:.3f}",
            ])
        f.write(_summary_block(report))


def _summary_block(report: RunReport) -> str:
    s = report.summary()
    lines = ["# summary", f"# frames {s['frames']}"]
    for src, n in sorted(s["sources"].items()):
        lines.append(f"# source.{src} {n}")
    for stage, st in s["stages"].items():
        lines.append(
            f"# stage.{stage} mean_ms {st['mean_ms']:.3f} "
            f"p50_ms {st['p50_ms']:.3f} p95_ms {st['p95_ms']:.3f}")
    lines.append(f"# achieved_fps {s['achieved_fps']:.2f}")
    return "\n".join(lines) + "\n"


def _write_manifest(path, cfg: PipelineConfig, args, report: RunReport) -> None:
    manifest = {
        "version": __version__,
        "seed": cfg.seed,
        "config": {k: str(v) for k, v in config_snapshot(cfg).items()},
        "inputs": {"frames": str(args.frames)},
        "outputs": {
            "masks": str(getattr(args, "out_masks", "") or ""),
            "report": str(getattr(args, "report", "") or ""),
        },
        "summary": report.summary(),
    }
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(args) -> int:
    script = load_script(args.script) if args.script else SynthScript()
    frames_dir, masks_dir, manifest = synth_sequence(script, args.seed, args.out)
    print(f"wrote {script.frames} frames to {frames_dir}")
    print(f"wrote ground-truth masks to {masks_dir}")
    print(f"wrote motion manifest to {manifest}")
    return 0


def _run_pipeline(args, write_masks: bool) -> tuple[PipelineConfig, RunReport]:
    cfg = _build_config(args)
    out_dir = None
    if write_masks:
        out_dir = Path(args.out_masks)
        out_dir.mkdir(parents=True, exist_ok=True)
    segmenter = cfg.segmenter.build(cfg.seed)
    pipe = Pipeline(cfg, segmenter)
    try:
        for frame_id, frame in _load_frames(args.frames):
            out = pipe.process_frame(frame_id, frame)
            if out_dir is not None and out.mask is not None:
                pnm.write_mask(out_dir / f"{frame_id:06d}.pgm", out.mask)
    finally:
        segmenter.close()
    return cfg, pipe.finish()


def cmd_run(args) -> int:
    cfg, report = _run_pipeline(args, write_masks=True)
    _write_report(args.report, report)
    _write_manifest(str(args.report) + ".manifest.json", cfg, args, report)
    print(_summary_block(report), end="")
    return 0


def cmd_bench(args) -> int:
    cfg, report = _run_pipeline(args, write_masks=False)
    if args.report:
        _write_report(args.report, report)
        _write_manifest(str(args.report) + ".manifest.json", cfg, args, report)
    print(_summary_block(report), end="")
    return 0


def cmd_eval(args) -> int:
    report = evaluate_sequence(args.pred, args.gt)
    report.write_csv(args.report)
    for line in report.summary_lines():
        print(line)
    return 0


def cmd_track(args) -> int:
    cfg = _build_config(args)
    prev = pnm.read_ppm(args.prev)
    nxt = pnm.read_ppm(args.next)
    mask = pnm.read_mask(args.mask) if args.mask else \
        np.ones(prev.shape[:2], dtype=bool)
    gray_p = to_grayscale(prev)
    gray_n = to_grayscale(nxt)
    pyr_p = build_pyramid(gray_p, cfg.flow.levels, min_dim=cfg.flow.window)
    pyr_n = build_pyramid(gray_n, cfg.flow.levels, min_dim=cfg.flow.window)
    corners = good_features(pyr_p.levels[0], mask, cfg.corner)
    tracks = lk_track(pyr_p, pyr_n, corners, cfg.flow)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "corners.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["frame_id", "x", "y", "score"])
        for c in corners:
            w.writerow([0, c.x, c.y, f"{c.score:.8g}"])
    with open(out_dir / "tracks.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["src_x", "src_y", "dst_x", "dst_y", "status", "residual"])
        for t in tracks:
            w.writerow([t.src[0], t.src[1], f"{t.dst[0]:.4f}", f"{t.dst[1]:.4f}",
                        t.status, f"{t.residual:.4f}"])

    good = [t for t in tracks if t.status == "tracked"]
    line = [1, "", "", "", "", "", "", 0, len(tracks)]
    if len(good) >= 3:
        pairs = Correspondences.of(
            np.array([t.src for t in good]), np.array([t.dst for t in good]))
        try:
            T, inl = ransac_affine(pairs, cfg.ransac)
            line = [1, *(f"{p:.8g}" for p in T.params()), int(inl.sum()), len(tracks)]
        except Exception:
            pass
    with open(out_dir / "transform.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["frame_id", "a11", "a12", "a21", "a22", "tx", "ty",
                    "n_inliers", "n_points"])
        w.writerow(line)
    print(f"{len(corners)} corners, {len(good)} tracked; CSVs in {out_dir}")
    return 0


# ---------------------------------------------------------------------------

def _add_config_args(p):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--seed", type=int, default=None, help="RNG seed override")


def build_parser() -> _Parser:
    p = _Parser(
        prog="maskprop",
        description="Real-time mask propagation: slow segmenter + optical-flow warping.",
        epilog=_CONFIG_KEY_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("synth", help="generate a synthetic sequence with ground truth")
    ps.add_argument("--script", help="key=value motion script (defaults if omitted)")
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--out", required=True, help="output directory")
    ps.set_defaults(func=cmd_synth)

    pr = sub.add_parser("run", help="run the propagation pipeline over a frame directory")
    pr.add_argument("--frames", required=True, help="directory of numbered .ppm frames")
    pr.add_argument("--out-masks", required=True, help="directory for per-frame .pgm masks")
    pr.add_argument("--report", required=True, help="per-frame CSV + summary block")
    _add_config_args(pr)
    pr.set_defaults(func=cmd_run)

    pe = sub.add_parser("eval", help="score predicted masks against ground truth")
    pe.add_argument("--pred", required=True)
    pe.add_argument("--gt", required=True)
    pe.add_argument("--report", required=True, help="per-frame metrics CSV")
    pe.set_defaults(func=cmd_eval)

    pt = sub.add_parser("track", help="debug: corners + flow + affine on one frame pair")
    pt.add_argument("--prev", required=True, help="reference frame (.ppm)")
    pt.add_argument("--next", required=True, help="current frame (.ppm)")
    pt.add_argument("--mask", help="foreground mask for corner extraction (.pgm)")
    pt.add_argument("--out-dir", required=True)
    _add_config_args(pt)
    pt.set_defaults(func=cmd_track)

    pb = sub.add_parser("bench", help="run without writing masks, print timing")
    pb.add_argument("--frames", required=True)
    pb.add_argument("--report", help="optional report path")
    _add_config_args(pb)
    pb.set_defaults(func=cmd_bench)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 1
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (PnmError, FrameSourceError, OSError) as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 2
    except SegmenterError as e:
        print(f"segmenter error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
