"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, IOError/PnmError -> 2,
SegmenterError -> 3.
"""


class MaskpropError(Exception):
    """Base class for all package errors."""


class ConfigError(MaskpropError):
    """Invalid configuration value, unknown key, or inconsistent parameters."""


class PnmError(MaskpropError):
    """Malformed PPM/PGM data or an unsupported variant."""


class FrameSourceError(MaskpropError):
    """Unreadable frame, missing file, or mid-run dimension change."""


class EstimationFailed(MaskpropError):
    """Robust fitting could not find an acceptable model (caller falls back)."""


class DegenerateGeometry(MaskpropError):
    """Point configuration does not constrain the model (collinear, singular)."""


class SegmenterError(MaskpropError):
    """Fatal segmenter failure: dead child process, protocol violation."""
