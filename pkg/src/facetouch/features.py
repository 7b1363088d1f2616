"""Per-axis statistical features for acceleration windows.

Each axis contributes ten statistics, in this order:

    sum, mean, median, std, cv, zero_crossings,
    mean_abs_dev, median_abs_dev, skewness, kurtosis

and the 30-entry vector concatenates the axes as X, Y, Z. Conventions:

* std is the sample standard deviation (n - 1 divisor), 0 for n = 1;
* cv = std / |mean|, forced to 0 when |mean| < 1e-12;
* zero_crossings counts strict sign changes between consecutive nonzero
  samples of the raw signal (zeros are skipped, no mean-centering);
* mean_abs_dev / median_abs_dev are deviations from the mean / the median;
* skewness = m3 / m2^1.5 and kurtosis = m4 / m2^2 - 3 use population
  central moments (n divisor); both are 0 when m2 < 1e-24 (excess
  kurtosis: a Gaussian scores ~0).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .signal import Window

AXES = ("x", "y", "z")
STAT_NAMES = (
    "sum",
    "mean",
    "median",
    "std",
    "cv",
    "zero_crossings",
    "mean_abs_dev",
    "median_abs_dev",
    "skewness",
    "kurtosis",
)
FEATURE_NAMES = tuple(f"{axis}_{stat}" for axis in AXES for stat in STAT_NAMES)
N_FEATURES = len(FEATURE_NAMES)

# Fingerprint of the serialized feature order; stored in model files so a
# reordered build cannot silently consume a stale model.
FEATURE_ORDER_HASH = hashlib.sha256(",".join(FEATURE_NAMES).encode()).hexdigest()

MEAN_EPS = 1e-12
MOMENT_EPS = 1e-24


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray  # shape (30,), ordered as FEATURE_NAMES
    prefix_s: float

    def as_dict(self) -> dict:
        return dict(zip(FEATURE_NAMES, self.values.tolist()))


def axis_features_batch(m: np.ndarray) -> np.ndarray:
    """Ten statistics for each row of an (k, n) matrix, returned as (k, 10)."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] == 0:
        raise ValueError(f"expected a (k, n) matrix with n >= 1, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise ValueError("axis values must be finite")
    k, n = m.shape

    total = m.sum(axis=1)
    mean = total / n
    median = np.median(m, axis=1)

    dev = m - mean[:, None]
    if n > 1:
        std = np.sqrt((dev * dev).sum(axis=1) / (n - 1))
    else:
        std = np.zeros(k)

    small = np.abs(mean) < MEAN_EPS
    cv = np.where(small, 0.0, std / np.where(small, 1.0, np.abs(mean)))

    sign = np.sign(m)
    nz = sign != 0
    idx = np.where(nz, np.arange(n)[None, :], -1)
    last_nz = np.maximum.accumulate(idx, axis=1)
    prev_nz = np.concatenate([np.full((k, 1), -1, dtype=np.int64), last_nz[:, :-1]], axis=1)
    prev_sign = np.take_along_axis(sign, np.clip(prev_nz, 0, None), axis=1)
    prev_sign = np.where(prev_nz >= 0, prev_sign, 0.0)
    crossings = (nz & (prev_sign != 0) & (sign != prev_sign)).sum(axis=1).astype(np.float64)

    mean_abs_dev = np.abs(dev).mean(axis=1)
    median_abs_dev = np.median(np.abs(m - median[:, None]), axis=1)

    m2 = (dev * dev).mean(axis=1)
    m3 = (dev * dev * dev).mean(axis=1)
    m4 = (dev * dev * dev * dev).mean(axis=1)
    tiny = m2 < MOMENT_EPS
    safe_m2 = np.where(tiny, 1.0, m2)
    skewness = np.where(tiny, 0.0, m3 / safe_m2**1.5)
    kurtosis = np.where(tiny, 0.0, m4 / (safe_m2 * safe_m2) - 3.0)

    return np.column_stack(
        [total, mean, median, std, cv, crossings, mean_abs_dev, median_abs_dev, skewness, kurtosis]
    )


def axis_features(xs: np.ndarray) -> np.ndarray:
    """Ten statistics of a single 1-D axis signal."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 1:
        raise ValueError(f"expected a 1-D axis signal, got shape {xs.shape}")
    return axis_features_batch(xs[None, :])[0]


def featurize_windows(data: np.ndarray, prefix_s: float) -> np.ndarray:
    """Feature matrix (k, 30) for a stacked (k, n, 3) block of windows."""
    if data.ndim != 3 or data.shape[2] != 3:
        raise ValueError(f"expected (k, n, 3) window stack, got shape {data.shape}")
    cols = [axis_features_batch(data[:, :, axis]) for axis in range(3)]
    return np.concatenate(cols, axis=1)


def featurize(window: Window, prefix_s: float | None = None) -> FeatureVector:
    """30-entry feature vector of one window (axes X, Y, Z in order)."""
    if prefix_s is None:
        prefix_s = window.duration_s
    values = featurize_windows(window.data[None, :, :], prefix_s)[0]
    return FeatureVector(values=values, prefix_s=prefix_s)


def write_feature_csv(x: np.ndarray, y: np.ndarray, prefix_s: float, path) -> None:
    """Dump a labelled feature matrix for offline inspection.

    Columns are FEATURE_NAMES plus `label` (+1/-1) and `prefix_t`.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != N_FEATURES:
        raise ValueError(f"expected (k, {N_FEATURES}) feature matrix, got {x.shape}")
    df = pd.DataFrame(x, columns=list(FEATURE_NAMES))
    df["label"] = np.asarray(y, dtype=np.int64)
    df["prefix_t"] = prefix_s
    df.to_csv(path, index=False)


def read_feature_csv(path) -> tuple[np.ndarray, np.ndarray, float]:
    df = pd.read_csv(path, float_precision="round_trip")
    expected = list(FEATURE_NAMES) + ["label", "prefix_t"]
    if list(df.columns) != expected:
        raise ValueError(f"{path}: unexpected feature CSV columns")
    prefixes = df["prefix_t"].unique()
    if len(prefixes) != 1:
        raise ValueError(f"{path}: mixed prefix_t values in one file")
    x = df[list(FEATURE_NAMES)].to_numpy(dtype=np.float64)
    y = df["label"].to_numpy(dtype=np.int64)
    return x, y, float(prefixes[0])
