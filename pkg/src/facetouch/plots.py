"""Figure rendering for the report paths. All output goes to files (Agg)."""

from __future__ import annotations

from typing import Dict, Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from .dataset import TrialRecord
from .signal import bin_for_viz

_AXIS_LABELS = ("x", "y", "z")


def bin_summary(trials: Sequence[TrialRecord], n_bins: int = 15) -> pd.DataFrame:
    """Per-class, per-axis, per-bin distribution summary of trial windows.

    Rows: class x 3 axes x n_bins, columns with the bin's time span and the
    pooled value distribution (mean/std and a few quantiles).
    """
    if not trials:
        raise ValueError("no trials to summarize")
    pools: Dict[tuple, list] = {}
    bin_span = None
    for tr in trials:
        if tr.window is None:
            raise ValueError("trials must carry samples")
        bins = bin_for_viz(tr.window, n_bins)
        bin_span = len(tr.window) / tr.window.rate_hz / n_bins
        cls = "touch" if tr.is_touch else "no_touch"
        for b, block in enumerate(bins):
            for axis in range(3):
                pools.setdefault((cls, axis, b), []).append(block[:, axis])
    rows = []
    for (cls, axis, b), chunks in sorted(pools.items()):
        vals = np.concatenate(chunks)
        rows.append(
            {
                "class": cls,
                "axis": _AXIS_LABELS[axis],
                "bin": b,
                "t_start": b * bin_span,
                "t_end": (b + 1) * bin_span,
                "mean": vals.mean(),
                "std": vals.std(ddof=1) if len(vals) > 1 else 0.0,
                "p10": np.percentile(vals, 10),
                "p25": np.percentile(vals, 25),
                "p50": np.percentile(vals, 50),
                "p75": np.percentile(vals, 75),
                "p90": np.percentile(vals, 90),
            }
        )
    return pd.DataFrame(rows)


def render_bins(summary: pd.DataFrame, path) -> None:
    """Small-multiple view of the binned distributions, one panel per class/axis."""
    classes = list(dict.fromkeys(summary["class"]))
    fig, axes = plt.subplots(
        len(classes), 3, figsize=(11, 3.0 * len(classes)), sharex=True, sharey=True
    )
    axes = np.atleast_2d(axes)
    for i, cls in enumerate(classes):
        for j, axis in enumerate(_AXIS_LABELS):
            ax = axes[i, j]
            sub = summary[(summary["class"] == cls) & (summary["axis"] == axis)]
            mid = (sub["t_start"] + sub["t_end"]) / 2.0
            ax.fill_between(mid, sub["p10"], sub["p90"], alpha=0.25, color="tab:blue")
            ax.fill_between(mid, sub["p25"], sub["p75"], alpha=0.45, color="tab:blue")
            ax.plot(mid, sub["p50"], color="tab:blue", lw=1.5)
            ax.axhline(0.0, color="0.7", lw=0.5)
            if i == 0:
                ax.set_title(f"{axis.upper()} axis")
            if j == 0:
                ax.set_ylabel(f"{cls}\nacceleration (g)")
            if i == len(classes) - 1:
                ax.set_xlabel("time in window (s)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_f1_curve(curve: Mapping[float, float], path,
                    baseline: Optional[Mapping[float, float]] = None) -> None:
    ts = sorted(curve)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ts, [curve[t] for t in ts], marker="o", label="cross-validated F1")
    if baseline:
        bs = sorted(baseline)
        ax.plot(bs, [baseline[t] for t in bs], marker="s", ls="--",
                color="0.5", label="baseline")
        ax.legend()
    ax.set_xlabel("prefix length (s)")
    ax.set_ylabel("F1")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_early_histogram(histogram: Mapping[float, int], instants: Sequence[float], path) -> None:
    counts = [histogram.get(t, 0) for t in instants]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar([f"{t:.2f}" for t in instants], counts, color="tab:blue")
    ax.set_xlabel("decision finalized at prefix (s)")
    ax.set_ylabel("detected touches")
    for i, c in enumerate(counts):
        if c:
            ax.text(i, c, str(c), ha="center", va="bottom", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
