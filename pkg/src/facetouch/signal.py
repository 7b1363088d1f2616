"""Accelerometer stream handling: resampling, windowing, prefixes, viz bins.

A stream is a float64 array of shape (n, 4) with columns (t, ax, ay, az),
timestamps in seconds and strictly increasing, acceleration in g. All
duration arithmetic below is done in integer sample counts so that e.g. a
1.5 s window at 100 Hz is exactly 150 samples, never 149 or 151.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

STREAM_COLUMNS = ("t", "ax", "ay", "az")

DEFAULT_RATE_HZ = 100.0
DEFAULT_WINDOW_S = 1.5
DEFAULT_STRIDE_S = 0.25

# An inter-sample interval longer than this many nominal periods is a gap.
GAP_PERIODS = 5.0

_REL_TOL = 1e-9


class StreamError(ValueError):
    """Malformed or unusable sample stream."""


@dataclass(frozen=True)
class FrameSchedule:
    """Sliding-window grid: window length and stride, both in seconds."""

    window_s: float = DEFAULT_WINDOW_S
    stride_s: float = DEFAULT_STRIDE_S
    rate_hz: float = DEFAULT_RATE_HZ

    def __post_init__(self) -> None:
        if self.rate_hz <= 0:
            raise ValueError("rate_hz must be positive")
        if self.window_samples <= 0:
            raise ValueError("window length must cover at least one sample")
        if self.stride_samples <= 0:
            raise ValueError("stride must cover at least one sample")

    @property
    def window_samples(self) -> int:
        return int(round(self.window_s * self.rate_hz))

    @property
    def stride_samples(self) -> int:
        return int(round(self.stride_s * self.rate_hz))


@dataclass(frozen=True)
class Window:
    """One fixed-length slice of a uniform stream.

    `data` holds only the acceleration columns, shape (n, 3); time inside a
    window is relative, sample i sits at i / rate_hz seconds. `start_t` keeps
    the absolute stream time of sample 0.
    """

    data: np.ndarray
    start_t: float
    rate_hz: float = DEFAULT_RATE_HZ

    def __post_init__(self) -> None:
        if self.data.ndim != 2 or self.data.shape[1] != 3:
            raise ValueError(f"window data must have shape (n, 3), got {self.data.shape}")
        if len(self.data) == 0:
            raise ValueError("window must contain at least one sample")

    def __len__(self) -> int:
        return len(self.data)

    @property
    def duration_s(self) -> float:
        return len(self.data) / self.rate_hz

    @property
    def t_rel(self) -> np.ndarray:
        return np.arange(len(self.data)) / self.rate_hz


@dataclass(frozen=True)
class GapReport:
    """Input interval with no samples for more than GAP_PERIODS periods."""

    start_t: float
    end_t: float

    @property
    def duration_s(self) -> float:
        return self.end_t - self.start_t


def validate_stream(stream: np.ndarray) -> np.ndarray:
    arr = np.asarray(stream, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise StreamError(f"stream must have shape (n, 4) (t, ax, ay, az), got {arr.shape}")
    if len(arr) == 0:
        raise StreamError("stream is empty")
    if not np.isfinite(arr).all():
        raise StreamError("stream contains non-finite values")
    if len(arr) > 1 and not (np.diff(arr[:, 0]) > 0).all():
        raise StreamError("timestamps must be strictly increasing")
    return arr


def _lerp_grid(tq: np.ndarray, tp: np.ndarray, fp: np.ndarray) -> np.ndarray:
    # Linear interpolation with the exact arithmetic the incremental
    # resampler replicates: slope * (t - t0) + y0, and query times that land
    # exactly on a sample time return that sample's value bit-for-bit.
    j = np.searchsorted(tp, tq, side="right") - 1
    j = np.clip(j, 0, len(tp) - 2)
    t0 = tp[j]
    slope = (fp[j + 1] - fp[j]) / (tp[j + 1] - t0)
    out = slope * (tq - t0) + fp[j]
    last = tq == tp[-1]
    if last.any():
        out[last] = fp[-1]
    return out


def resample_uniform(
    stream: np.ndarray, rate_hz: float = DEFAULT_RATE_HZ
) -> Tuple[np.ndarray, List[GapReport]]:
    """Resample onto the absolute grid k / rate_hz spanning the input times.

    Values are linearly interpolated between neighbouring input samples; a
    stream already on the grid passes through unchanged. Inter-sample
    intervals longer than GAP_PERIODS nominal periods are interpolated too,
    but reported so callers can discard windows that overlap them.
    """
    arr = validate_stream(stream)
    if rate_hz <= 0:
        raise StreamError("rate_hz must be positive")
    t = arr[:, 0]
    kmin = int(np.ceil(t[0] * rate_hz - _REL_TOL))
    kmax = int(np.floor(t[-1] * rate_hz + _REL_TOL))
    if kmax < kmin:
        raise StreamError("stream spans no grid point at the requested rate")
    if len(arr) == 1:
        if kmin != kmax:
            raise StreamError("single-sample stream is ambiguous at this rate")
        return arr.copy(), []
    tq = np.arange(kmin, kmax + 1, dtype=np.float64) / rate_hz
    out = np.empty((len(tq), 4))
    out[:, 0] = tq
    for c in range(1, 4):
        out[:, c] = _lerp_grid(tq, t, arr[:, c])

    gaps = []
    dt = np.diff(t)
    limit = GAP_PERIODS / rate_hz
    for i in np.nonzero(dt > limit * (1.0 + _REL_TOL))[0]:
        gaps.append(GapReport(start_t=float(t[i]), end_t=float(t[i + 1])))
    return out, gaps


class GridResampler:
    """Incremental counterpart of resample_uniform for sample-at-a-time input.

    push() returns the grid samples that became computable; the sequence of
    outputs over a whole stream is identical to the batch function.
    """

    def __init__(self, rate_hz: float = DEFAULT_RATE_HZ):
        if rate_hz <= 0:
            raise StreamError("rate_hz must be positive")
        self.rate_hz = rate_hz
        self._prev: Optional[np.ndarray] = None
        self._k: Optional[int] = None
        self.gaps: List[GapReport] = []

    def push(self, t: float, ax: float, ay: float, az: float) -> List[np.ndarray]:
        cur = np.array([t, ax, ay, az], dtype=np.float64)
        if not np.isfinite(cur).all():
            raise StreamError("sample contains non-finite values")
        out: List[np.ndarray] = []
        if self._prev is None:
            self._prev = cur
            self._k = int(np.ceil(t * self.rate_hz - _REL_TOL))
            return out
        prev = self._prev
        if t <= prev[0]:
            raise StreamError("timestamps must be strictly increasing")
        if (t - prev[0]) > GAP_PERIODS / self.rate_hz * (1.0 + _REL_TOL):
            self.gaps.append(GapReport(start_t=float(prev[0]), end_t=float(t)))
        assert self._k is not None
        while True:
            tq = self._k / self.rate_hz
            if tq > t:
                break
            if tq == prev[0]:
                vals = prev[1:]
            elif tq == t:
                vals = cur[1:]
            else:
                slope = (cur[1:] - prev[1:]) / (t - prev[0])
                vals = slope * (tq - prev[0]) + prev[1:]
            out.append(np.concatenate(([tq], vals)))
            self._k += 1
        self._prev = cur
        return out


def slide(stream: np.ndarray, schedule: FrameSchedule = FrameSchedule()) -> List[Window]:
    """Cut a uniform stream into overlapping candidate windows.

    Window k starts at sample k * stride_samples; only complete windows are
    returned. A 10 s stream at the defaults yields 35 windows, starting at
    0.0, 0.25, ..., 8.5 s.
    """
    arr = _require_uniform(stream, schedule.rate_hz)
    n = len(arr)
    w, s = schedule.window_samples, schedule.stride_samples
    windows = []
    for start in range(0, n - w + 1, s):
        windows.append(
            Window(
                data=arr[start : start + w, 1:4],
                start_t=float(arr[start, 0]),
                rate_hz=schedule.rate_hz,
            )
        )
    return windows


def _require_uniform(stream: np.ndarray, rate_hz: float) -> np.ndarray:
    arr = validate_stream(stream)
    if len(arr) > 1:
        dt = np.diff(arr[:, 0])
        if np.abs(dt - 1.0 / rate_hz).max() > _REL_TOL * max(1.0, abs(arr[-1, 0])):
            raise StreamError("stream is not uniform at the requested rate; resample first")
    return arr


def window_from_samples(samples: np.ndarray, rate_hz: float = DEFAULT_RATE_HZ) -> Window:
    """Wrap a whole uniform (n, 4) capture as a single window."""
    arr = _require_uniform(samples, rate_hz)
    return Window(data=arr[:, 1:4], start_t=float(arr[0, 0]), rate_hz=rate_hz)


def prefix(window: Window, prefix_s: float) -> Window:
    """First round(prefix_s * rate) samples of a window.

    prefix(w, 1.0) on a 1.5 s window at 100 Hz keeps samples 0..99;
    prefix(w, 1.5) is the identity. Asking beyond the window is an error.
    """
    count = int(round(prefix_s * window.rate_hz))
    if count <= 0:
        raise ValueError(f"prefix {prefix_s} s covers no samples")
    if count > len(window):
        raise ValueError(
            f"prefix {prefix_s} s ({count} samples) exceeds window of {len(window)} samples"
        )
    return Window(data=window.data[:count], start_t=window.start_t, rate_hz=window.rate_hz)


def bin_for_viz(window: Window, n_bins: int = 15) -> List[np.ndarray]:
    """Split a window into n_bins equal-duration bins (for plotting only).

    Returns one (m, 3) block per bin; together they partition the window in
    order. Detection never consumes these.
    """
    if n_bins <= 0:
        raise ValueError("n_bins must be positive")
    n = len(window)
    if n % n_bins != 0:
        raise ValueError(f"{n} samples do not divide into {n_bins} equal bins")
    m = n // n_bins
    return [window.data[i * m : (i + 1) * m] for i in range(n_bins)]


def windows_clear_of_gaps(windows: Sequence[Window], gaps: Sequence[GapReport]) -> List[bool]:
    """Flag which windows avoid every reported gap (True = clean)."""
    flags = []
    for w in windows:
        end_t = w.start_t + len(w) / w.rate_hz
        clean = all(g.end_t <= w.start_t or g.start_t >= end_t for g in gaps)
        flags.append(clean)
    return flags


def read_stream_csv(path) -> np.ndarray:
    df = pd.read_csv(path, float_precision="round_trip")
    if tuple(df.columns) != STREAM_COLUMNS:
        raise StreamError(
            f"{path}: expected columns {','.join(STREAM_COLUMNS)}, got {','.join(map(str, df.columns))}"
        )
    return validate_stream(df.to_numpy(dtype=np.float64))


def write_stream_csv(stream: np.ndarray, path) -> None:
    arr = validate_stream(stream)
    pd.DataFrame(arr, columns=list(STREAM_COLUMNS)).to_csv(path, index=False)


def parse_stream_line(line: str, line_no: int) -> Tuple[float, float, float, float]:
    """Parse one 't,ax,ay,az' CSV line; errors carry the 1-based line number."""
    parts = line.strip().split(",")
    if len(parts) != 4:
        raise StreamError(f"line {line_no}: expected 4 comma-separated values, got {len(parts)}")
    try:
        t, ax, ay, az = (float(p) for p in parts)
    except ValueError:
        raise StreamError(f"line {line_no}: non-numeric value in {line.strip()!r}") from None
    return t, ax, ay, az
