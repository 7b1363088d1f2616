"""Temporal ensemble of prefix-window forests and the streaming detector.

One forest is trained per prefix instant t (seconds from window start); at
detection time a candidate window is evaluated at the instants in order and
the weighted votes are combined as sign(sum_t w_t * f_t(x_t)), with
sign(0) = +1. Weights come from per-instant cross-validation F1:

    w_t = exp(lambda * (F1_t - min_T F1))

so the weakest instant always gets weight exactly 1. Because weights are
known up front, a window can be finalized as soon as the accumulated vote
can no longer be overturned by the instants not yet evaluated (|S| > R);
that early decision provably equals the full vote.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .dataset import TrialRecord
from .features import FEATURE_ORDER_HASH, featurize_windows
from .forest import (
    Hyperparams,
    RandomForest,
    _parse_bool,
    cross_validate,
    fit,
    load_model,
    save_model,
)
from .seeds import derive_seed
from .signal import DEFAULT_RATE_HZ, DEFAULT_WINDOW_S, FrameSchedule, GridResampler, Window

DEFAULT_PREFIX_INSTANTS = (1.0, 1.1, 1.2, 1.3, 1.4, 1.5)
DEFAULT_LAMBDA = 10.0
DEFAULT_REFRACTORY_S = 3.0

ENSEMBLE_FORMAT = "facetouch-ensemble"
ENSEMBLE_FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"

# Tuned per-instant defaults shipped with the package; `facetouch tune`
# regenerates a table in the same shape.
DEFAULT_HYPERPARAMS_BY_PREFIX: Dict[float, Hyperparams] = {
    1.0: Hyperparams(n_estimators=150, max_depth=200, max_features="log2",
                     min_samples_leaf=2, min_samples_split=3, bootstrap=False),
    1.1: Hyperparams(n_estimators=150, max_depth=150, max_features="log2",
                     min_samples_leaf=1, min_samples_split=2, bootstrap=False),
    1.2: Hyperparams(n_estimators=300, max_depth=150, max_features="log2",
                     min_samples_leaf=1, min_samples_split=2, bootstrap=False),
    1.3: Hyperparams(n_estimators=200, max_depth=300, max_features="log2",
                     min_samples_leaf=1, min_samples_split=3, bootstrap=False),
    1.4: Hyperparams(n_estimators=100, max_depth=200, max_features="log2",
                     min_samples_leaf=4, min_samples_split=4, bootstrap=False),
    1.5: Hyperparams(n_estimators=300, max_depth=150, max_features="log2",
                     min_samples_leaf=2, min_samples_split=3, bootstrap=False),
}


def validate_instants(instants: Sequence[float], window_s: float, rate_hz: float) -> Tuple[float, ...]:
    instants = tuple(float(t) for t in instants)
    if not instants:
        raise ValueError("prefix schedule is empty")
    if any(t <= 0 for t in instants):
        raise ValueError("prefix instants must be positive")
    if any(b <= a for a, b in zip(instants, instants[1:])):
        raise ValueError("prefix instants must be strictly increasing")
    if int(round(instants[-1] * rate_hz)) != int(round(window_s * rate_hz)):
        raise ValueError(
            f"last prefix instant {instants[-1]} s must cover the whole {window_s} s window"
        )
    return instants


def compute_weights(f1_by_t: Mapping[float, float], lam: float = DEFAULT_LAMBDA) -> Dict[float, float]:
    """exp(lam * (F1_t - min F1)) per instant; the minimum gets exactly 1."""
    if not f1_by_t:
        raise ValueError("need at least one F1 value")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    for t, v in f1_by_t.items():
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"F1 at t={t} out of [0, 1]: {v}")
    lowest = min(f1_by_t.values())
    return {t: math.exp(lam * (v - lowest)) for t, v in f1_by_t.items()}


@dataclass
class TemporalEnsemble:
    instants: Tuple[float, ...]
    models: Dict[float, RandomForest]
    f1_by_t: Dict[float, float]
    weights: Dict[float, float]
    lam: float = DEFAULT_LAMBDA
    window_s: float = DEFAULT_WINDOW_S
    rate_hz: float = DEFAULT_RATE_HZ
    feature_order_hash: str = FEATURE_ORDER_HASH

    def __post_init__(self) -> None:
        self.instants = validate_instants(self.instants, self.window_s, self.rate_hz)
        for name, mapping in (("models", self.models), ("f1", self.f1_by_t),
                              ("weights", self.weights)):
            if set(mapping) != set(self.instants):
                raise ValueError(f"{name} keys do not match the prefix schedule")
        if any(w <= 0 for w in self.weights.values()):
            raise ValueError("weights must be positive")

    @property
    def window_samples(self) -> int:
        return int(round(self.window_s * self.rate_hz))

    def prefix_samples(self, t: float) -> int:
        return int(round(t * self.rate_hz))

    def ordered_weights(self) -> List[float]:
        return [self.weights[t] for t in self.instants]


def vote(predictions: Mapping[float, int], weights: Mapping[float, float]) -> Tuple[int, float]:
    """Full weighted vote over all instants: (decision, signed score)."""
    if set(predictions) != set(weights):
        raise ValueError("predictions must cover exactly the weighted instants")
    _check_votes(predictions.values())
    score = 0.0
    for t in sorted(weights):
        score += weights[t] * predictions[t]
    return (1 if score >= 0.0 else -1), score


def _check_votes(votes: Iterable[int]) -> None:
    for v in votes:
        if v not in (-1, 1):
            raise ValueError(f"votes must be +1 or -1, got {v!r}")


def _suffix_remainders(weights: Sequence[float]) -> List[float]:
    rems = [0.0] * len(weights)
    acc = 0.0
    for i in range(len(weights) - 1, -1, -1):
        rems[i] = acc
        acc += weights[i]
    return rems


def _scan_votes(
    predict_at: Callable[[int], int],
    weights: Sequence[float],
    rems: Sequence[float],
) -> Tuple[int, int, float, List[int]]:
    """Evaluate instants in order until the outcome is locked in.

    Returns (decision, index decided at, score at decision, votes so far).
    Both the batch and the sample-at-a-time detectors run this exact loop,
    which is what makes their event logs identical.
    """
    score = 0.0
    votes: List[int] = []
    last = len(weights) - 1
    for i in range(len(weights)):
        p = predict_at(i)
        votes.append(p)
        score += weights[i] * p
        if i == last or abs(score) > rems[i]:
            return (1 if score >= 0.0 else -1), i, score, votes
    raise AssertionError("unreachable")


def early_decide(
    partial_predictions: Mapping[float, int], weights: Mapping[float, float]
) -> Optional[int]:
    """Decision for a prefix of the schedule, or None while still pending.

    `partial_predictions` must cover the first len(partial) instants of the
    schedule implied by `weights` (evaluation is in-order by construction).
    Never contradicts what vote() would return once all instants are in.
    """
    order = sorted(weights)
    n = len(partial_predictions)
    if n == 0:
        raise ValueError("no predictions evaluated yet")
    expected = order[:n]
    if sorted(partial_predictions) != expected:
        raise ValueError("predictions must cover a leading prefix of the schedule, in order")
    _check_votes(partial_predictions.values())
    w = [weights[t] for t in order]
    rems = _suffix_remainders(w)
    score = 0.0
    for i, t in enumerate(expected):
        score += w[i] * partial_predictions[t]
        if i == len(order) - 1:
            return 1 if score >= 0.0 else -1
        if i == n - 1:
            if abs(score) > rems[i]:
                return 1 if score >= 0.0 else -1
            return None
    return None


@dataclass(frozen=True)
class DetectionEvent:
    """One finalized positive decision of the streaming detector."""

    window_start_t: float
    decided_at_t: float
    score: float
    votes: Dict[float, int] = field(default_factory=dict)

    def to_json_line(self) -> str:
        doc = {
            "window_start_t": self.window_start_t,
            "decided_at_t": self.decided_at_t,
            "score": self.score,
            "votes": {repr(float(t)): int(v) for t, v in self.votes.items()},
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json_line(cls, line: str) -> "DetectionEvent":
        doc = json.loads(line)
        return cls(
            window_start_t=float(doc["window_start_t"]),
            decided_at_t=float(doc["decided_at_t"]),
            score=float(doc["score"]),
            votes={float(k): int(v) for k, v in doc["votes"].items()},
        )


def write_event_log(events: Sequence[DetectionEvent], path) -> None:
    with open(path, "w") as fh:
        for e in events:
            fh.write(e.to_json_line() + "\n")


def read_event_log(path) -> List[DetectionEvent]:
    events = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                events.append(DetectionEvent.from_json_line(line))
    return events


def train_ensemble(
    trials: Sequence[TrialRecord],
    seed: int,
    hp_by_t: Optional[Mapping[float, Hyperparams]] = None,
    instants: Sequence[float] = DEFAULT_PREFIX_INSTANTS,
    lam: float = DEFAULT_LAMBDA,
    k: int = 10,
) -> TemporalEnsemble:
    """Fit one forest per prefix instant and weight them by 10-fold CV F1.

    All trials must carry equal-length windows at a common rate; the last
    instant must span the full window.
    """
    if not trials:
        raise ValueError("no trials to train on")
    missing = [i for i, tr in enumerate(trials) if tr.window is None]
    if missing:
        raise ValueError(f"trial {missing[0]} has no samples")
    rate = trials[0].window.rate_hz
    n = len(trials[0].window)
    for i, tr in enumerate(trials):
        if tr.window.rate_hz != rate or len(tr.window) != n:
            raise ValueError(f"trial {i} window shape differs from the first trial")
    window_s = n / rate
    instants = validate_instants(instants, window_s, rate)
    if hp_by_t is None:
        hp_by_t = DEFAULT_HYPERPARAMS_BY_PREFIX
    missing_t = [t for t in instants if t not in hp_by_t]
    if missing_t:
        raise ValueError(f"no hyperparameters for prefix instants {missing_t}")

    stack = np.stack([tr.window.data for tr in trials])
    y = np.array([tr.label_sign for tr in trials], dtype=np.int64)

    models: Dict[float, RandomForest] = {}
    f1_by_t: Dict[float, float] = {}
    for i, t in enumerate(instants):
        count = int(round(t * rate))
        x = featurize_windows(stack[:, :count, :], t)
        cv = cross_validate(x, y, hp_by_t[t], derive_seed(seed, i, 0), k=k)
        f1_by_t[t] = cv.mean_f1
        models[t] = fit(x, y, hp_by_t[t], derive_seed(seed, i, 1),
                        feature_order_hash=FEATURE_ORDER_HASH)

    return TemporalEnsemble(
        instants=instants,
        models=models,
        f1_by_t=f1_by_t,
        weights=compute_weights(f1_by_t, lam),
        lam=lam,
        window_s=window_s,
        rate_hz=rate,
    )


def _check_window_shape(w: Window, ensemble: TemporalEnsemble) -> None:
    if w.rate_hz != ensemble.rate_hz:
        raise ValueError(f"window rate {w.rate_hz} != ensemble rate {ensemble.rate_hz}")
    if len(w) != ensemble.window_samples:
        raise ValueError(
            f"window has {len(w)} samples, ensemble expects {ensemble.window_samples}"
        )


def detect_stream(
    windows: Sequence[Window],
    ensemble: TemporalEnsemble,
    refractory_s: float = DEFAULT_REFRACTORY_S,
) -> List[DetectionEvent]:
    """Run the detector over candidate windows (already on the stride grid).

    Windows are evaluated in start order at the prefix instants, finalizing
    early when possible; a +1 finalization emits an event whose start then
    suppresses candidates starting within `refractory_s` seconds.
    """
    if refractory_s < 0:
        raise ValueError("refractory must be non-negative")
    if not windows:
        return []
    for w in windows:
        _check_window_shape(w, ensemble)
    starts = [w.start_t for w in windows]
    if any(b <= a for a, b in zip(starts, starts[1:])):
        raise ValueError("windows must be ordered by strictly increasing start time")

    # Predict every (window, instant) pair up front in vectorized batches;
    # the sequential scan below consumes them in schedule order, so the
    # result is the same as evaluating lazily, just faster.
    stack = np.stack([w.data for w in windows])
    preds = np.empty((len(windows), len(ensemble.instants)), dtype=np.int64)
    for i, t in enumerate(ensemble.instants):
        count = ensemble.prefix_samples(t)
        x = featurize_windows(stack[:, :count, :], t)
        preds[:, i] = ensemble.models[t].predict_batch(x)

    weights = ensemble.ordered_weights()
    rems = _suffix_remainders(weights)
    events: List[DetectionEvent] = []
    suppressed_until = -math.inf
    for j, w in enumerate(windows):
        if w.start_t < suppressed_until:
            continue
        decision, di, score, votes = _scan_votes(lambda i: int(preds[j, i]), weights, rems)
        if decision == 1:
            events.append(
                DetectionEvent(
                    window_start_t=w.start_t,
                    decided_at_t=ensemble.instants[di],
                    score=score,
                    votes={ensemble.instants[i]: votes[i] for i in range(di + 1)},
                )
            )
            suppressed_until = w.start_t + refractory_s
    return events


class StreamDetector:
    """Sample-at-a-time detector: push raw samples, collect events.

    Resamples onto the nominal grid, forms candidate windows on the stride
    grid, and applies the same early-decision scan as detect_stream. Feeding
    a file's samples one by one yields the identical event log.
    """

    def __init__(
        self,
        ensemble: TemporalEnsemble,
        stride_s: float = 0.25,
        refractory_s: float = DEFAULT_REFRACTORY_S,
    ):
        self.ensemble = ensemble
        self.schedule = FrameSchedule(
            window_s=ensemble.window_s, stride_s=stride_s, rate_hz=ensemble.rate_hz
        )
        self.refractory_s = refractory_s
        self._resampler = GridResampler(ensemble.rate_hz)
        self._grid: List[np.ndarray] = []
        self._next_start = 0
        self._suppressed_until = -math.inf
        self._weights = ensemble.ordered_weights()
        self._rems = _suffix_remainders(self._weights)
        self._counts = [ensemble.prefix_samples(t) for t in ensemble.instants]

    @property
    def gaps(self):
        return self._resampler.gaps

    def push(self, t: float, ax: float, ay: float, az: float) -> List[DetectionEvent]:
        out: List[DetectionEvent] = []
        for row in self._resampler.push(t, ax, ay, az):
            self._grid.append(row)
            out.extend(self._drain())
        return out

    def _drain(self) -> List[DetectionEvent]:
        events = []
        w = self.schedule.window_samples
        s = self.schedule.stride_samples
        while len(self._grid) >= self._next_start + w:
            block = np.asarray(self._grid[self._next_start : self._next_start + w])
            start_t = float(block[0, 0])
            self._next_start += s
            if start_t < self._suppressed_until:
                continue
            window = Window(data=block[:, 1:4], start_t=start_t, rate_hz=self.ensemble.rate_hz)
            event = self._evaluate(window)
            if event is not None:
                events.append(event)
                self._suppressed_until = start_t + self.refractory_s
        return events

    def _evaluate(self, window: Window) -> Optional[DetectionEvent]:
        ens = self.ensemble

        def predict_at(i: int) -> int:
            x = featurize_windows(window.data[None, : self._counts[i], :], ens.instants[i])
            return int(ens.models[ens.instants[i]].predict_batch(x)[0])

        decision, di, score, votes = _scan_votes(predict_at, self._weights, self._rems)
        if decision != 1:
            return None
        return DetectionEvent(
            window_start_t=window.start_t,
            decided_at_t=ens.instants[di],
            score=score,
            votes={ens.instants[i]: votes[i] for i in range(di + 1)},
        )


def single_instant_ensemble(ensemble: TemporalEnsemble, t: Optional[float] = None) -> TemporalEnsemble:
    """Sub-ensemble holding only the full-window model (baseline comparator)."""
    if t is None:
        t = ensemble.instants[-1]
    if t not in ensemble.models:
        raise ValueError(f"no model at instant {t}")
    return TemporalEnsemble(
        instants=(t,),
        models={t: ensemble.models[t]},
        f1_by_t={t: ensemble.f1_by_t[t]},
        weights={t: 1.0},
        lam=ensemble.lam,
        window_s=ensemble.window_s,
        rate_hz=ensemble.rate_hz,
        feature_order_hash=ensemble.feature_order_hash,
    )


def save_ensemble(ensemble: TemporalEnsemble, directory) -> None:
    """Write per-instant model files plus a manifest into a directory."""
    os.makedirs(directory, exist_ok=True)
    model_names = []
    for i, t in enumerate(ensemble.instants):
        name = f"model_{i}.json"
        save_model(ensemble.models[t], os.path.join(directory, name))
        model_names.append(name)
    manifest = {
        "format": ENSEMBLE_FORMAT,
        "format_version": ENSEMBLE_FORMAT_VERSION,
        "schedule": list(ensemble.instants),
        "window_s": ensemble.window_s,
        "rate_hz": ensemble.rate_hz,
        "f1": [ensemble.f1_by_t[t] for t in ensemble.instants],
        "weights": [ensemble.weights[t] for t in ensemble.instants],
        "lambda": ensemble.lam,
        "feature_order_hash": ensemble.feature_order_hash,
        "models": model_names,
    }
    with open(os.path.join(directory, MANIFEST_NAME), "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_ensemble(directory) -> TemporalEnsemble:
    path = os.path.join(directory, MANIFEST_NAME)
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise ValueError(f"{directory}: not an ensemble directory (no {MANIFEST_NAME})") from None
    if manifest.get("format") != ENSEMBLE_FORMAT:
        raise ValueError(f"{path}: not an ensemble manifest")
    if manifest.get("format_version") != ENSEMBLE_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported ensemble format version")
    instants = tuple(float(t) for t in manifest["schedule"])
    order_hash = manifest["feature_order_hash"]
    models = {}
    for t, name in zip(instants, manifest["models"]):
        models[t] = load_model(os.path.join(directory, name), expect_feature_order_hash=order_hash)
    f1_by_t = {t: float(v) for t, v in zip(instants, manifest["f1"])}
    weights = {t: float(v) for t, v in zip(instants, manifest["weights"])}
    expected = compute_weights(f1_by_t, float(manifest["lambda"]))
    for t in instants:
        if abs(expected[t] - weights[t]) > 1e-9 * max(1.0, expected[t]):
            raise ValueError(f"{path}: stored weights do not match the stored F1 values")
    return TemporalEnsemble(
        instants=instants,
        models=models,
        f1_by_t=f1_by_t,
        weights=weights,
        lam=float(manifest["lambda"]),
        window_s=float(manifest["window_s"]),
        rate_hz=float(manifest["rate_hz"]),
        feature_order_hash=order_hash,
    )


def write_hyperparams_csv(hp_by_t: Mapping[float, Hyperparams], path) -> None:
    """One row per prefix instant, columns matching the tuned-defaults table."""
    rows = []
    for t in sorted(hp_by_t):
        hp = hp_by_t[t]
        rows.append(
            {
                "t": t,
                "bootstrap": hp.bootstrap,
                "max_depth": hp.max_depth,
                "max_features": hp.max_features,
                "min_samples_leaf": hp.min_samples_leaf,
                "min_samples_split": hp.min_samples_split,
                "n_estimators": hp.n_estimators,
            }
        )
    pd.DataFrame(rows).to_csv(path, index=False)


def read_hyperparams_csv(path) -> Dict[float, Hyperparams]:
    df = pd.read_csv(path, float_precision="round_trip")
    required = {"t", "bootstrap", "max_depth", "max_features",
                "min_samples_leaf", "min_samples_split", "n_estimators"}
    missing = required - set(df.columns)
    if missing:
        raise ValueError(f"{path}: hyperparameter table missing columns {sorted(missing)}")
    out = {}
    for _, row in df.iterrows():
        out[float(row["t"])] = Hyperparams(
            n_estimators=int(row["n_estimators"]),
            max_depth=int(row["max_depth"]),
            max_features=str(row["max_features"]),
            min_samples_leaf=int(row["min_samples_leaf"]),
            min_samples_split=int(row["min_samples_split"]),
            bootstrap=_parse_bool(row["bootstrap"]),
        )
    return out
