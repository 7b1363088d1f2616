"""Session-level evaluation: recall, false-positive rate, early decisions.

A prompt counts as detected when at least one event's window start falls in
[prompt, prompt + label window). The false-positive rate is measured over
frames: events starting outside every prompt interval, divided by the
number of candidate frames outside every prompt interval. Both are
computable from the event log and the prompt log alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .dataset import PromptLog, TrialRecord
from .ensemble import (
    DEFAULT_REFRACTORY_S,
    DetectionEvent,
    TemporalEnsemble,
    detect_stream,
    single_instant_ensemble,
    validate_instants,
)
from .features import featurize_windows
from .forest import Hyperparams, cross_validate
from .seeds import derive_seed
from .signal import FrameSchedule, slide

DEFAULT_LABEL_WINDOW_S = 3.0


@dataclass(frozen=True)
class SessionResult:
    user_id: str
    n_prompts: int
    n_detected: int
    n_frames: int
    n_negative_frames: int
    n_false_positive_events: int
    early_histogram: Dict[float, int]
    events: Tuple[DetectionEvent, ...]

    @property
    def recall(self) -> float:
        return self.n_detected / self.n_prompts if self.n_prompts else 0.0

    @property
    def fpr(self) -> float:
        return (
            self.n_false_positive_events / self.n_negative_frames
            if self.n_negative_frames
            else 0.0
        )


def _inside_any(start: float, prompts: Sequence[Tuple[float, str]], width: float) -> bool:
    return any(p <= start < p + width for p, _ in prompts)


def score_events(
    events: Sequence[DetectionEvent],
    prompts: Sequence[Tuple[float, str]],
    frame_starts: Sequence[float],
    user_id: str = "p01",
    label_window_s: float = DEFAULT_LABEL_WINDOW_S,
) -> SessionResult:
    """Score an event log against a prompt schedule (pure bookkeeping)."""
    detected = 0
    histogram: Dict[float, int] = {}
    for p, _ in prompts:
        matching = [e for e in events if p <= e.window_start_t < p + label_window_s]
        if matching:
            detected += 1
            first = matching[0]
            histogram[first.decided_at_t] = histogram.get(first.decided_at_t, 0) + 1

    negative_frames = sum(
        0 if _inside_any(s, prompts, label_window_s) else 1 for s in frame_starts
    )
    false_positives = sum(
        0 if _inside_any(e.window_start_t, prompts, label_window_s) else 1 for e in events
    )
    return SessionResult(
        user_id=user_id,
        n_prompts=len(prompts),
        n_detected=detected,
        n_frames=len(frame_starts),
        n_negative_frames=negative_frames,
        n_false_positive_events=false_positives,
        early_histogram=histogram,
        events=tuple(events),
    )


def evaluate_session(
    log: PromptLog,
    ensemble: TemporalEnsemble,
    schedule: Optional[FrameSchedule] = None,
    refractory_s: float = DEFAULT_REFRACTORY_S,
    label_window_s: float = DEFAULT_LABEL_WINDOW_S,
) -> SessionResult:
    """Detect over one session log and score the result."""
    if schedule is None:
        schedule = FrameSchedule(window_s=ensemble.window_s, rate_hz=ensemble.rate_hz)
    windows = slide(log.stream, schedule)
    events = detect_stream(windows, ensemble, refractory_s=refractory_s)
    starts = [w.start_t for w in windows]
    return score_events(events, log.prompts, starts, user_id=log.user_id,
                        label_window_s=label_window_s)


def compare_full_window(
    log: PromptLog,
    ensemble: TemporalEnsemble,
    schedule: Optional[FrameSchedule] = None,
    refractory_s: float = DEFAULT_REFRACTORY_S,
    label_window_s: float = DEFAULT_LABEL_WINDOW_S,
) -> Tuple[SessionResult, SessionResult]:
    """(temporal ensemble, full-window-model-only) results on the same log."""
    full = single_instant_ensemble(ensemble)
    return (
        evaluate_session(log, ensemble, schedule, refractory_s, label_window_s),
        evaluate_session(log, full, schedule, refractory_s, label_window_s),
    )


def aggregate(results: Sequence[SessionResult]) -> SessionResult:
    """Pool sessions into one overall result."""
    if not results:
        raise ValueError("no session results to aggregate")
    histogram: Dict[float, int] = {}
    events: List[DetectionEvent] = []
    for r in results:
        for t, c in r.early_histogram.items():
            histogram[t] = histogram.get(t, 0) + c
        events.extend(r.events)
    return SessionResult(
        user_id="overall",
        n_prompts=sum(r.n_prompts for r in results),
        n_detected=sum(r.n_detected for r in results),
        n_frames=sum(r.n_frames for r in results),
        n_negative_frames=sum(r.n_negative_frames for r in results),
        n_false_positive_events=sum(r.n_false_positive_events for r in results),
        early_histogram=histogram,
        events=tuple(events),
    )


def f1_curve(
    trials: Sequence[TrialRecord],
    seed: int,
    hp_by_t: Mapping[float, Hyperparams],
    instants: Sequence[float],
    k: int = 10,
) -> Dict[float, float]:
    """Cross-validated F1 per prefix instant (the detectability curve)."""
    if not trials:
        raise ValueError("no trials")
    if any(tr.window is None for tr in trials):
        raise ValueError("trials must carry samples")
    rate = trials[0].window.rate_hz
    window_s = trials[0].window.duration_s
    instants = validate_instants(instants, window_s, rate)
    stack = np.stack([tr.window.data for tr in trials])
    y = np.array([tr.label_sign for tr in trials], dtype=np.int64)
    curve = {}
    for i, t in enumerate(instants):
        count = int(round(t * rate))
        x = featurize_windows(stack[:, :count, :], t)
        curve[t] = cross_validate(x, y, hp_by_t[t], derive_seed(seed, i, 0), k=k).mean_f1
    return curve


# ---------------------------------------------------------------------------
# Report rendering
# ---------------------------------------------------------------------------


def format_report_table(
    results: Sequence[SessionResult],
    overall: SessionResult,
    title: str = "Temporal ensemble",
) -> str:
    cols = [r.user_id for r in results] + ["overall"]
    rows = [
        ("touches detected", [f"{r.n_detected}/{r.n_prompts}" for r in results]
         + [f"{overall.n_detected}/{overall.n_prompts}"]),
        ("recall", [f"{r.recall:.3f}" for r in results] + [f"{overall.recall:.3f}"]),
        ("false positive rate", [f"{100 * r.fpr:.2f}%" for r in results]
         + [f"{100 * overall.fpr:.2f}%"]),
    ]
    width = max(12, *(len(c) for c in cols)) + 2
    head = " " * 22 + "".join(c.rjust(width) for c in cols)
    lines = [title, head]
    for name, cells in rows:
        lines.append(name.ljust(22) + "".join(c.rjust(width) for c in cells))
    return "\n".join(lines) + "\n"


def format_early_histogram(overall: SessionResult, instants: Sequence[float]) -> str:
    lines = ["decisions finalized by prefix instant (detected touches)"]
    for t in instants:
        lines.append(f"  t={t:.2f} s: {overall.early_histogram.get(t, 0)}")
    return "\n".join(lines) + "\n"


def report_kv_lines(
    results: Sequence[SessionResult],
    overall: SessionResult,
    prefix: str = "",
) -> List[str]:
    """Machine-readable key = value lines for one detector's results."""
    lines = []
    for r in list(results) + [overall]:
        tag = f"{prefix}{r.user_id}"
        lines.append(f"{tag}_prompts = {r.n_prompts}")
        lines.append(f"{tag}_detected = {r.n_detected}")
        lines.append(f"{tag}_recall = {r.recall!r}")
        lines.append(f"{tag}_negative_frames = {r.n_negative_frames}")
        lines.append(f"{tag}_false_positive_events = {r.n_false_positive_events}")
        lines.append(f"{tag}_fpr = {r.fpr!r}")
    for t in sorted(overall.early_histogram):
        lines.append(f"{prefix}overall_decided_at_{t} = {overall.early_histogram[t]}")
    return lines


def write_f1_curve_csv(curve: Mapping[float, float], path) -> None:
    df = pd.DataFrame({"t": sorted(curve), "f1": [curve[t] for t in sorted(curve)]})
    df.to_csv(path, index=False)


def read_f1_curve_csv(path) -> Dict[float, float]:
    df = pd.read_csv(path, float_precision="round_trip")
    if list(df.columns) != ["t", "f1"]:
        raise ValueError(f"{path}: expected columns t,f1")
    return {float(r["t"]): float(r["f1"]) for _, r in df.iterrows()}


def write_early_histogram_csv(histogram: Mapping[float, int], instants: Sequence[float], path) -> None:
    df = pd.DataFrame(
        {"t": list(instants), "count": [histogram.get(t, 0) for t in instants]}
    )
    df.to_csv(path, index=False)
