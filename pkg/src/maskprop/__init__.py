"""maskprop: real-time binary-mask propagation.

A slow per-frame segmenter runs asynchronously (at most one request in
flight); every video frame gets a mask by tracking keyframe corners with
pyramidal Lucas-Kanade flow, fitting a robust affine transform and warping
the last segmenter output. Includes a synthetic sequence generator and a
sensitivity/specificity/balanced-accuracy evaluation harness.
"""

__version__ = "0.1.0"

from .config import PipelineConfig, SegmenterConfig, load_config
from .errors import (
    ConfigError,
    DegenerateGeometry,
    EstimationFailed,
    FrameSourceError,
    MaskpropError,
    PnmError,
    SegmenterError,
)
from .evaluate import Confusion, MetricReport, Metrics, confusion, evaluate_sequence, metrics
from .features import Corner, CornerParams, good_features, min_eig_map
from .geometry import (
    Affine2D,
    Correspondences,
    RansacParams,
    fit_affine_lsq,
    ransac_affine,
    warp_mask,
)
from .images import Pyramid, build_pyramid, gradients, to_grayscale
from .optflow import FlowParams, TrackedPoint, lk_track, lk_track_arrays
from .pipeline import FrameOutput, KeyframeRecord, Pipeline, RunReport, run
from .segmenter import (
    ExternalProcessSegmenter,
    LatencyModel,
    OracleSegmenter,
    SegmenterResult,
    ThresholdSegmenter,
)
from .synth import SynthScript, load_script, synth_sequence
