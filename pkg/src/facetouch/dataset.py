"""Data collection protocol, synthetic generators, labeling, trial files.

The protocol mirrors a wrist-worn capture campaign: per participant, three
sessions (one per watch placement: high, mid, low on the forearm). Each
session records 8 touch trials for each of 9 facial parts (manner balanced
transient/lingering, and for symmetric parts balanced left/right) plus 10
trials for each of 5 no-touch activities. That is 122 trials per session,
366 per participant: 216 touch and 150 no-touch.

The synthetic trial generator is deliberately simple but honest about the
geometry: a touch tilts the watch so X climbs toward +1 g, the reach gives
an early Y peak, and where the hand lands shifts Z by facial part and side.
Activities get their own oscillation templates. Every shape parameter and
the noise level live in GenConfig and can be loaded from a key=value file.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .seeds import derive_rng
from .signal import DEFAULT_RATE_HZ, Window

TOUCH_PARTS = ("hair", "forehead", "temple", "eye", "ear", "nose", "cheek", "mouth", "chin")
SYMMETRIC_PARTS = frozenset({"temple", "eye", "ear", "cheek"})
SIDES = ("left", "right", "center")
MANNERS = ("transient", "lingering")
ACTIVITIES = (
    "flipping_magazines",
    "jumping_jacks",
    "typing",
    "speaking_gesturing",
    "washing_hands",
)
PLACEMENTS = ("high", "mid", "low")
SESSION_PLACEMENTS = {1: "high", 2: "mid", 3: "low"}

TRIALS_PER_PART = 8
TRIALS_PER_ACTIVITY = 10


class TrialFormatError(ValueError):
    """Trial file violates the schema; the message names the offending line."""


@dataclass(frozen=True)
class Touch:
    part: str
    side: str = "center"
    manner: str = "lingering"

    def __post_init__(self) -> None:
        if self.part not in TOUCH_PARTS:
            raise ValueError(f"unknown facial part {self.part!r}")
        if self.side not in SIDES:
            raise ValueError(f"unknown side {self.side!r}")
        if self.manner not in MANNERS:
            raise ValueError(f"unknown manner {self.manner!r}")
        if self.part in SYMMETRIC_PARTS:
            if self.side == "center":
                raise ValueError(f"{self.part} is symmetric and needs side left/right")
        elif self.side != "center":
            raise ValueError(f"{self.part} has no left/right sides")


@dataclass(frozen=True)
class NoTouch:
    activity: str

    def __post_init__(self) -> None:
        if self.activity not in ACTIVITIES:
            raise ValueError(f"unknown activity {self.activity!r}")


@dataclass(frozen=True)
class TrialRecord:
    user_id: str
    session: int
    placement: str
    behavior: Touch | NoTouch
    window: Optional[Window] = None

    def __post_init__(self) -> None:
        if self.placement not in PLACEMENTS:
            raise ValueError(f"unknown placement {self.placement!r}")

    @property
    def is_touch(self) -> bool:
        return isinstance(self.behavior, Touch)

    @property
    def label_sign(self) -> int:
        return 1 if self.is_touch else -1


# ---------------------------------------------------------------------------
# Generator configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GenConfig:
    """All synthesis parameters (acceleration in g, times in seconds)."""

    rate_hz: float = DEFAULT_RATE_HZ
    trial_s: float = 1.5
    noise_sigma: float = 0.05          # white noise std on every axis
    onset_jitter_s: float = 0.0        # touch onset delay drawn from [0, this]

    # rest orientation of the watch (gravity split across axes) per placement
    rest_x_high: float = 0.20
    rest_y_high: float = -0.30
    rest_z_high: float = -0.20
    rest_x_mid: float = 0.00
    rest_y_mid: float = -0.45
    rest_z_mid: float = -0.30
    rest_x_low: float = -0.15
    rest_y_low: float = -0.60
    rest_z_low: float = -0.40

    # touch template: X ramps rest -> x_touch_g over [ramp_start, ramp_end]
    ramp_start_s: float = 0.50
    ramp_end_s: float = 1.00
    x_touch_g: float = 0.90
    y_peak_amp_g: float = 0.55         # early reach bump on Y
    y_peak_t_s: float = 0.28
    y_peak_width_s: float = 0.12
    y_flat_g: float = -0.05            # Y level once the hand is at the face
    z_part_base_g: float = -0.80       # Z target = base + step * part index
    z_part_step_g: float = 0.20
    z_side_offset_g: float = 0.015     # left -> -offset, right -> +offset
    retract_s: float = 0.15            # transient touches start pulling back
    retract_dip_g: float = 0.10
    plateau_calm: float = 0.5          # noise multiplier on a lingering plateau

    # no-touch activity templates: amplitude and frequency band per activity
    mag_amp_g: float = 0.22
    mag_freq_lo_hz: float = 0.6
    mag_freq_hi_hz: float = 1.1
    jj_amp_g: float = 0.80
    jj_freq_lo_hz: float = 1.8
    jj_freq_hi_hz: float = 2.4
    typing_jitter_g: float = 0.04
    speak_amp_g: float = 0.30
    speak_freq_lo_hz: float = 0.4
    speak_freq_hi_hz: float = 0.8
    wash_amp_g: float = 0.35
    wash_freq_lo_hz: float = 2.6
    wash_freq_hi_hz: float = 3.4

    # session-log construction
    reaction_lo_s: float = 0.8         # motion onset lags the prompt by this
    reaction_hi_s: float = 1.4
    dwell_s: float = 1.00              # hand stays at the face after a touch
    release_s: float = 0.40            # ease back to the background
    blend_s: float = 0.05              # crossfade at the injection start
    segment_lo_s: float = 8.0          # background activity segment length
    segment_hi_s: float = 20.0
    prompt_margin_start_s: float = 5.0
    prompt_margin_end_s: float = 7.0

    def __post_init__(self) -> None:
        if self.rate_hz <= 0:
            raise ValueError("rate_hz must be positive")
        if self.trial_s <= 0:
            raise ValueError("trial_s must be positive")
        if self.noise_sigma < 0 or self.onset_jitter_s < 0:
            raise ValueError("noise_sigma and onset_jitter_s must be non-negative")
        if not 0 <= self.ramp_start_s < self.ramp_end_s <= self.trial_s:
            raise ValueError("need 0 <= ramp_start_s < ramp_end_s <= trial_s")
        if not 0 <= self.reaction_lo_s <= self.reaction_hi_s:
            raise ValueError("need 0 <= reaction_lo_s <= reaction_hi_s")

    def rest(self, placement: str) -> np.ndarray:
        if placement not in PLACEMENTS:
            raise ValueError(f"unknown placement {placement!r}")
        return np.array(
            [
                getattr(self, f"rest_x_{placement}"),
                getattr(self, f"rest_y_{placement}"),
                getattr(self, f"rest_z_{placement}"),
            ]
        )

    def trial_samples(self) -> int:
        return int(round(self.trial_s * self.rate_hz))

    def to_file(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("# synthetic generator parameters (g, seconds, Hz)\n")
            for f in dataclasses.fields(self):
                fh.write(f"{f.name} = {getattr(self, f.name)!r}\n")

    @classmethod
    def from_file(cls, path) -> "GenConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        overrides = {}
        with open(path) as fh:
            for line_no, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}: line {line_no}: expected 'key = value'")
                key, _, value = line.partition("=")
                key = key.strip()
                if key not in known:
                    raise ValueError(f"{path}: line {line_no}: unknown parameter {key!r}")
                try:
                    overrides[key] = float(value.strip())
                except ValueError:
                    raise ValueError(
                        f"{path}: line {line_no}: non-numeric value for {key!r}"
                    ) from None
        return cls(**overrides)


# ---------------------------------------------------------------------------
# Protocol manifest
# ---------------------------------------------------------------------------


def protocol_manifest(seed: int, user_id: str = "u01") -> List[TrialRecord]:
    """Stub trials (no samples) for one participant's full protocol.

    Part order is shuffled per session; within a part the 8 manner/side
    combinations are shuffled too. Counts are exact by construction.
    """
    rng = derive_rng(seed, 5)
    stubs: List[TrialRecord] = []
    for session in (1, 2, 3):
        placement = SESSION_PLACEMENTS[session]
        parts = list(TOUCH_PARTS)
        rng.shuffle(parts)
        for part in parts:
            if part in SYMMETRIC_PARTS:
                combos = [
                    (side, manner)
                    for side in ("left", "right")
                    for manner in MANNERS
                    for _ in range(TRIALS_PER_PART // 4)
                ]
            else:
                combos = [
                    ("center", manner) for manner in MANNERS for _ in range(TRIALS_PER_PART // 2)
                ]
            rng.shuffle(combos)
            for side, manner in combos:
                stubs.append(
                    TrialRecord(
                        user_id=user_id,
                        session=session,
                        placement=placement,
                        behavior=Touch(part=part, side=side, manner=manner),
                    )
                )
        for activity in ACTIVITIES:
            for _ in range(TRIALS_PER_ACTIVITY):
                stubs.append(
                    TrialRecord(
                        user_id=user_id,
                        session=session,
                        placement=placement,
                        behavior=NoTouch(activity=activity),
                    )
                )
    return stubs


# ---------------------------------------------------------------------------
# Waveform templates
# ---------------------------------------------------------------------------


def _smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def part_z_target(cfg: GenConfig, part: str, side: str) -> float:
    z = cfg.z_part_base_g + cfg.z_part_step_g * TOUCH_PARTS.index(part)
    if side == "left":
        z -= cfg.z_side_offset_g
    elif side == "right":
        z += cfg.z_side_offset_g
    return z


def _touch_curves(
    t: np.ndarray, behavior: Touch, placement: str, cfg: GenConfig
) -> Tuple[np.ndarray, np.ndarray]:
    """Noise-free touch trajectory and per-sample noise scale over times t."""
    rest = cfg.rest(placement)
    u = _smoothstep((t - cfg.ramp_start_s) / (cfg.ramp_end_s - cfg.ramp_start_s))

    x = rest[0] + (cfg.x_touch_g - rest[0]) * u
    y = rest[1] + (cfg.y_flat_g - rest[1]) * u
    y = y + cfg.y_peak_amp_g * np.exp(-0.5 * ((t - cfg.y_peak_t_s) / cfg.y_peak_width_s) ** 2)
    z_target = part_z_target(cfg, behavior.part, behavior.side)
    z = rest[2] + (z_target - rest[2]) * u

    scale = np.ones_like(t)
    if behavior.manner == "transient":
        back = np.clip((t - (cfg.trial_s - cfg.retract_s)) / cfg.retract_s, 0.0, 1.0)
        x = x - cfg.retract_dip_g * back
    else:
        scale = np.where(t >= cfg.ramp_end_s, cfg.plateau_calm, 1.0)
    return np.column_stack([x, y, z]), scale


# per-axis amplitude shares of each oscillating activity
_ACTIVITY_AXIS_MIX = {
    "flipping_magazines": (0.15, 1.0, 0.8),
    "jumping_jacks": (1.0, 1.0, 1.0),
    "speaking_gesturing": (0.3, 1.0, 0.8),
    "washing_hands": (0.4, 1.0, 0.9),
}


def _activity_band(cfg: GenConfig, activity: str) -> Tuple[float, float, float]:
    return {
        "flipping_magazines": (cfg.mag_amp_g, cfg.mag_freq_lo_hz, cfg.mag_freq_hi_hz),
        "jumping_jacks": (cfg.jj_amp_g, cfg.jj_freq_lo_hz, cfg.jj_freq_hi_hz),
        "speaking_gesturing": (cfg.speak_amp_g, cfg.speak_freq_lo_hz, cfg.speak_freq_hi_hz),
        "washing_hands": (cfg.wash_amp_g, cfg.wash_freq_lo_hz, cfg.wash_freq_hi_hz),
    }[activity]


def _activity_curves(
    t: np.ndarray,
    activity: str,
    placement: str,
    cfg: GenConfig,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, float]:
    """Noise-free activity trajectory and any extra jitter std for the trial."""
    rest = cfg.rest(placement)
    base = np.tile(rest, (len(t), 1))
    if activity == "typing":
        return base, cfg.typing_jitter_g
    amp, lo, hi = _activity_band(cfg, activity)
    freq = rng.uniform(lo, hi)
    phases = rng.uniform(0.0, 2.0 * math.pi, size=3)
    mix = _ACTIVITY_AXIS_MIX[activity]
    for axis in range(3):
        base[:, axis] += amp * mix[axis] * np.sin(2.0 * math.pi * freq * t + phases[axis])
    return base, 0.0


def synth_trial(stub: TrialRecord, rng: np.random.Generator, cfg: GenConfig = GenConfig()) -> TrialRecord:
    """Fill a stub with synthesized samples (onset at t=0, plus optional jitter)."""
    n = cfg.trial_samples()
    t = np.arange(n) / cfg.rate_hz
    if isinstance(stub.behavior, Touch):
        jitter = rng.uniform(0.0, cfg.onset_jitter_s)
        base, scale = _touch_curves(t - jitter, stub.behavior, stub.placement, cfg)
        noise = rng.normal(0.0, 1.0, size=(n, 3)) * (cfg.noise_sigma * scale)[:, None]
        data = base + noise
    else:
        base, extra = _activity_curves(t, stub.behavior.activity, stub.placement, cfg, rng)
        sigma = math.hypot(cfg.noise_sigma, extra)
        data = base + rng.normal(0.0, sigma, size=(n, 3))
    window = Window(data=data, start_t=0.0, rate_hz=cfg.rate_hz)
    return replace(stub, window=window)


def synth_trials(
    stubs: Sequence[TrialRecord], seed: int, cfg: GenConfig = GenConfig()
) -> List[TrialRecord]:
    """Synthesize every stub with an independent per-trial RNG stream."""
    return [synth_trial(stub, derive_rng(seed, 6, i), cfg) for i, stub in enumerate(stubs)]


# ---------------------------------------------------------------------------
# Session logs (continuous streams with prompted touches)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParticipantSpec:
    user_id: str = "p01"
    duration_s: float = 1800.0
    n_prompts: int = 30
    min_gap_s: float = 10.0
    parts: Tuple[str, ...] = ("ear", "nose", "eye", "cheek", "chin")
    placement: str = "mid"

    def __post_init__(self) -> None:
        if self.n_prompts < 1:
            raise ValueError("need at least one prompt")
        unknown = [p for p in self.parts if p not in TOUCH_PARTS]
        if unknown:
            raise ValueError(f"unknown facial parts {unknown}")
        if self.placement not in PLACEMENTS:
            raise ValueError(f"unknown placement {self.placement!r}")


@dataclass(frozen=True)
class PromptLog:
    """A continuous session stream plus the prompt schedule that drove it."""

    stream: np.ndarray                      # (n, 4): t, ax, ay, az
    prompts: Tuple[Tuple[float, str], ...]  # (prompt time, facial part)
    user_id: str = "p01"
    placement: str = "mid"


def _prompt_times(spec: ParticipantSpec, cfg: GenConfig, rng: np.random.Generator) -> np.ndarray:
    lo = cfg.prompt_margin_start_s
    hi = spec.duration_s - cfg.prompt_margin_end_s
    slack = (hi - lo) - (spec.n_prompts - 1) * spec.min_gap_s
    if slack < 0:
        raise ValueError("session too short for the prompt count at this min gap")
    u = np.sort(rng.random(spec.n_prompts))
    return lo + u * slack + np.arange(spec.n_prompts) * spec.min_gap_s


def session_log(
    spec: ParticipantSpec, rng: np.random.Generator, cfg: GenConfig = GenConfig()
) -> PromptLog:
    """Synthesize a session: background activity with touches at prompts.

    Prompts fall at random times (minimum gap enforced); each injects a
    touch of a randomly chosen part/side/manner. Motion starts a short
    reaction delay after the prompt, holds through a dwell, then eases
    back to the background.
    """
    rate = cfg.rate_hz
    n = int(round(spec.duration_s * rate))
    t = np.arange(n) / rate

    times = _prompt_times(spec, cfg, rng)
    part_choices = [spec.parts[i] for i in rng.integers(0, len(spec.parts), size=spec.n_prompts)]

    # background: random activity segments back to back
    data = np.empty((n, 3))
    cursor = 0
    while cursor < n:
        activity = ACTIVITIES[rng.integers(0, len(ACTIVITIES))]
        seg_n = min(int(round(rng.uniform(cfg.segment_lo_s, cfg.segment_hi_s) * rate)), n - cursor)
        t_seg = np.arange(seg_n) / rate
        base, extra = _activity_curves(t_seg, activity, spec.placement, cfg, rng)
        sigma = math.hypot(cfg.noise_sigma, extra)
        data[cursor : cursor + seg_n] = base + rng.normal(0.0, sigma, size=(seg_n, 3))
        cursor += seg_n

    # inject a touch at each prompt
    inject_s = cfg.trial_s + cfg.dwell_s + cfg.release_s
    for prompt_t, part in zip(times, part_choices):
        side = ("left", "right")[rng.integers(0, 2)] if part in SYMMETRIC_PARTS else "center"
        manner = MANNERS[rng.integers(0, len(MANNERS))]
        behavior = Touch(part=part, side=side, manner=manner)
        onset_t = prompt_t + rng.uniform(cfg.reaction_lo_s, cfg.reaction_hi_s)

        i0 = int(math.ceil(onset_t * rate - 1e-9))
        i1 = min(i0 + int(round(inject_s * rate)), n)
        rel = t[i0:i1] - onset_t
        held = np.minimum(rel, cfg.trial_s)
        base, scale = _touch_curves(held, behavior, spec.placement, cfg)
        touch = base + rng.normal(0.0, 1.0, size=base.shape) * (cfg.noise_sigma * scale)[:, None]

        # ease back to the background after the dwell, and blend in at the start
        w_out = _smoothstep((rel - (cfg.trial_s + cfg.dwell_s)) / cfg.release_s)[:, None]
        w_in = np.clip(rel / cfg.blend_s, 0.0, 1.0)[:, None] if cfg.blend_s > 0 else 1.0
        bg = data[i0:i1]
        data[i0:i1] = (1.0 - w_out) * (bg + w_in * (touch - bg)) + w_out * bg

    stream = np.column_stack([t, data])
    return PromptLog(
        stream=stream,
        prompts=tuple(zip(times.tolist(), part_choices)),
        user_id=spec.user_id,
        placement=spec.placement,
    )


def label_frames(
    prompts: Sequence[Tuple[float, str]],
    start_times: Sequence[float],
    label_window_s: float = 3.0,
) -> np.ndarray:
    """+1 for frames starting inside [p, p + label_window) of any prompt."""
    starts = np.asarray(start_times, dtype=np.float64)
    y = np.full(len(starts), -1, dtype=np.int64)
    for p, _ in prompts:
        y[(starts >= p) & (starts < p + label_window_s)] = 1
    return y


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def save_trials(trials: Sequence[TrialRecord], path) -> None:
    """Line-delimited JSON, one trial per line, lossless float round-trip."""
    with open(path, "w") as fh:
        for tr in trials:
            if tr.window is None:
                raise ValueError("cannot save a stub trial with no samples")
            doc: Dict = {
                "user_id": tr.user_id,
                "session": tr.session,
                "placement": tr.placement,
                "rate_hz": tr.window.rate_hz,
            }
            if isinstance(tr.behavior, Touch):
                doc["label"] = "touch"
                doc["part"] = tr.behavior.part
                doc["side"] = tr.behavior.side
                doc["manner"] = tr.behavior.manner
            else:
                doc["label"] = "no_touch"
                doc["activity"] = tr.behavior.activity
            t_rel = tr.window.t_rel
            doc["samples"] = [
                [t_rel[i], *tr.window.data[i].tolist()] for i in range(len(tr.window))
            ]
            fh.write(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def load_trials(path) -> List[TrialRecord]:
    """Parse and validate a trial file; errors name the offending line."""
    trials: List[TrialRecord] = []
    expected_shape: Optional[Tuple[int, float]] = None
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as e:
                raise TrialFormatError(f"{path}: line {line_no}: invalid JSON ({e.msg})") from None
            try:
                trial = _parse_trial(doc)
            except (KeyError, TypeError) as e:
                raise TrialFormatError(f"{path}: line {line_no}: missing or bad field {e}") from None
            except ValueError as e:
                raise TrialFormatError(f"{path}: line {line_no}: {e}") from None
            assert trial.window is not None
            shape = (len(trial.window), trial.window.rate_hz)
            if expected_shape is None:
                expected_shape = shape
            elif shape != expected_shape:
                raise TrialFormatError(
                    f"{path}: line {line_no}: trial has {shape[0]} samples at {shape[1]} Hz, "
                    f"but earlier trials have {expected_shape[0]} at {expected_shape[1]} Hz"
                )
            trials.append(trial)
    if not trials:
        raise TrialFormatError(f"{path}: no trials in file")
    return trials


def _parse_trial(doc: dict) -> TrialRecord:
    label = doc["label"]
    if label == "touch":
        behavior: Touch | NoTouch = Touch(
            part=doc["part"], side=doc["side"], manner=doc["manner"]
        )
    elif label == "no_touch":
        behavior = NoTouch(activity=doc["activity"])
    else:
        raise ValueError(f"unknown label {label!r}")
    rate = float(doc["rate_hz"])
    samples = np.asarray(doc["samples"], dtype=np.float64)
    if samples.ndim != 2 or samples.shape[1] != 4:
        raise ValueError("samples must be a list of [t, ax, ay, az] rows")
    if len(samples) == 0:
        raise ValueError("trial has no samples")
    if not np.isfinite(samples).all():
        raise ValueError("samples contain non-finite values")
    expected_t = np.arange(len(samples)) / rate
    if np.abs(samples[:, 0] - expected_t).max() > 1e-9:
        raise ValueError("sample times must be uniform from 0 at rate_hz")
    window = Window(data=samples[:, 1:4], start_t=0.0, rate_hz=rate)
    return TrialRecord(
        user_id=str(doc["user_id"]),
        session=int(doc["session"]),
        placement=str(doc["placement"]),
        behavior=behavior,
        window=window,
    )


def write_prompts_csv(prompts: Sequence[Tuple[float, str]], path) -> None:
    pd.DataFrame(list(prompts), columns=["t", "part"]).to_csv(path, index=False)


def read_prompts_csv(path) -> Tuple[Tuple[float, str], ...]:
    df = pd.read_csv(path, float_precision="round_trip")
    if list(df.columns) != ["t", "part"]:
        raise ValueError(f"{path}: expected columns t,part")
    prompts = []
    for _, row in df.iterrows():
        part = str(row["part"])
        if part not in TOUCH_PARTS:
            raise ValueError(f"{path}: unknown facial part {part!r}")
        prompts.append((float(row["t"]), part))
    return tuple(prompts)
