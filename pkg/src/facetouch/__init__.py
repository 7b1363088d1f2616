"""Face-touch detection from wrist accelerometer streams.

The pipeline: uniform resampling and sliding candidate windows (signal),
30 per-axis statistics (features), from-scratch random forests (forest),
one forest per prefix instant combined by F1-derived weights with early
decisions (ensemble), synthetic data and protocol tooling (dataset), and
session-level scoring (evaluate).
"""

from .ensemble import (
    DEFAULT_PREFIX_INSTANTS,
    DetectionEvent,
    StreamDetector,
    TemporalEnsemble,
    detect_stream,
    load_ensemble,
    save_ensemble,
    train_ensemble,
)
from .features import FEATURE_NAMES, FEATURE_ORDER_HASH, featurize
from .forest import Hyperparams, RandomForest, cross_validate, fit
from .signal import FrameSchedule, Window, prefix, resample_uniform, slide

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_PREFIX_INSTANTS",
    "DetectionEvent",
    "FEATURE_NAMES",
    "FEATURE_ORDER_HASH",
    "FrameSchedule",
    "Hyperparams",
    "RandomForest",
    "StreamDetector",
    "TemporalEnsemble",
    "Window",
    "cross_validate",
    "detect_stream",
    "featurize",
    "fit",
    "load_ensemble",
    "prefix",
    "resample_uniform",
    "save_ensemble",
    "slide",
    "train_ensemble",
    "__version__",
]
