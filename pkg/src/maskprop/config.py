"""Plain-text key=value configuration for the pipeline.

Files hold one `key = value` pair per line, '#' starts a comment. Unknown
keys are errors; precedence is defaults < config file < overrides.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError
from .features import CornerParams
from .geometry import RansacParams
from .optflow import FlowParams
from .segmenter import (
    CorruptionModel,
    ExternalProcessSegmenter,
    LatencyModel,
    OracleSegmenter,
    Segmenter,
    ThresholdSegmenter,
)


@dataclass
class SegmenterConfig:
    kind: str = "threshold"             # oracle | threshold | external
    latency_mode: str = "wall-clock"
    latency_value: float = 100.0
    command: str | None = None          # external
    mask_dir: str | None = None         # oracle
    threshold: float = 127.0            # threshold
    channel: str = "luma"               # threshold
    corrupt_morph_radius: int = 0       # oracle, optional corruption
    corrupt_border_flip: float = 0.0

    def build(self, seed: int = 0) -> Segmenter:
        latency = LatencyModel(self.latency_mode, self.latency_value)
        if self.kind == "oracle":
            if not self.mask_dir:
                raise ConfigError("segmenter.kind=oracle requires segmenter.mask_dir")
            corruption = None
            if self.corrupt_morph_radius or self.corrupt_border_flip:
                corruption = CorruptionModel(
                    self.corrupt_morph_radius, self.corrupt_border_flip, seed
                )
            return OracleSegmenter(self.mask_dir, latency, corruption)
        if self.kind == "threshold":
            return ThresholdSegmenter(latency, self.threshold, self.channel)
        if self.kind == "external":
            if not self.command:
                raise ConfigError("segmenter.kind=external requires segmenter.command")
            return ExternalProcessSegmenter(self.command, latency)
        raise ConfigError(f"unknown segmenter.kind {self.kind!r}")


@dataclass
class PipelineConfig:
    corner: CornerParams = field(default_factory=CornerParams)
    flow: FlowParams = field(default_factory=FlowParams)
    ransac: RansacParams = field(default_factory=RansacParams)
    segmenter: SegmenterConfig = field(default_factory=SegmenterConfig)
    fallback_limit: int = 30   # consecutive fallbacks before emitting none
    frame_cache: int = 64
    seed: int = 0

    def validate(self) -> "PipelineConfig":
        self.corner.validate()
        self.flow.validate()
        self.ransac.validate()
        if self.fallback_limit < 1:
            raise ConfigError(f"pipeline.fallback_limit must be >= 1, got {self.fallback_limit}")
        if self.frame_cache < 1:
            raise ConfigError(f"pipeline.frame_cache must be >= 1, got {self.frame_cache}")
        return self


def _to_int(key, v):
    try:
        return int(v)
    except ValueError:
        raise ConfigError(f"{key} expects an integer, got {v!r}")


def _to_float(key, v):
    try:
        return float(v)
    except ValueError:
        raise ConfigError(f"{key} expects a number, got {v!r}")


def parse_kv_file(path) -> dict[str, str]:
    """Parse `key = value` lines; '#' comments; blank lines ignored."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = line.split("=", 1)
            key = key.strip()
            value = value.strip()
            if not key:
                raise ConfigError(f"{path}:{lineno}: empty key")
            if key in out:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = value
    return out


def config_from_dict(kv: dict[str, str]) -> PipelineConfig:
    cfg = PipelineConfig()
    corner: dict = {}
    flow: dict = {}
    ransac: dict = {}
    for key, v in kv.items():
        if key == "corner.max_count":
            corner["max_count"] = _to_int(key, v)
        elif key == "corner.quality_level":
            corner["quality_level"] = _to_float(key, v)
        elif key == "corner.min_distance":
            corner["min_distance"] = _to_float(key, v)
        elif key == "corner.block_size":
            corner["block_size"] = _to_int(key, v)
        elif key == "corner.fg_erosion":
            corner["fg_erosion"] = _to_int(key, v)
        elif key == "flow.window":
            flow["window"] = _to_int(key, v)
        elif key == "flow.levels":
            flow["levels"] = _to_int(key, v)
        elif key == "flow.max_iters":
            flow["max_iters"] = _to_int(key, v)
        elif key == "flow.epsilon":
            flow["epsilon"] = _to_float(key, v)
        elif key == "flow.min_eig_threshold":
            flow["min_eig_threshold"] = _to_float(key, v)
        elif key == "ransac.inlier_threshold":
            ransac["inlier_threshold"] = _to_float(key, v)
        elif key == "ransac.max_iters":
            ransac["max_iters"] = _to_int(key, v)
        elif key == "ransac.confidence":
            ransac["confidence"] = _to_float(key, v)
        elif key == "ransac.min_inliers":
            ransac["min_inliers"] = _to_int(key, v)
        elif key == "segmenter.kind":
            cfg.segmenter.kind = v
        elif key == "segmenter.latency_mode":
            cfg.segmenter.latency_mode = v
        elif key == "segmenter.latency_value":
            cfg.segmenter.latency_value = _to_float(key, v)
        elif key == "segmenter.command":
            cfg.segmenter.command = v
        elif key == "segmenter.mask_dir":
            cfg.segmenter.mask_dir = v
        elif key == "segmenter.threshold":
            cfg.segmenter.threshold = _to_float(key, v)
        elif key == "segmenter.channel":
            cfg.segmenter.channel = v
        elif key == "segmenter.corrupt_morph_radius":
            cfg.segmenter.corrupt_morph_radius = _to_int(key, v)
        elif key == "segmenter.corrupt_border_flip":
            cfg.segmenter.corrupt_border_flip = _to_float(key, v)
        elif key == "pipeline.fallback_limit":
            cfg.fallback_limit = _to_int(key, v)
        elif key == "pipeline.frame_cache":
            cfg.frame_cache = _to_int(key, v)
        elif key == "seed":
            cfg.seed = _to_int(key, v)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if corner:
        cfg.corner = CornerParams(**{**cfg.corner.__dict__, **corner})
    if flow:
        cfg.flow = FlowParams(**{**cfg.flow.__dict__, **flow})
    if ransac:
        cfg.ransac = RansacParams(**{**cfg.ransac.__dict__, **ransac})
    return cfg.validate()


def load_config(path, overrides: dict[str, str] | None = None) -> PipelineConfig:
    kv = parse_kv_file(path)
    if overrides:
        kv.update(overrides)
    return config_from_dict(kv)


def config_snapshot(cfg: PipelineConfig) -> dict:
    """Flat key -> value view of a config, for the run manifest."""
    out = {}
    for prefix, obj in (
        ("corner", cfg.corner), ("flow", cfg.flow), ("ransac", cfg.ransac),
        ("segmenter", cfg.segmenter),
    ):
        for k, v in obj.__dict__.items():
            out[f"{prefix}.{k}"] = v
    out["pipeline.fallback_limit"] = cfg.fallback_limit
    out["pipeline.frame_cache"] = cfg.frame_cache
    out["seed"] = cfg.seed
    return out
