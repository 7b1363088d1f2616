import numpy as np
import pytest

from facetouch import evaluate as ev
from facetouch.dataset import GenConfig, ParticipantSpec, session_log
from facetouch.ensemble import (
    DEFAULT_PREFIX_INSTANTS,
    DetectionEvent,
    single_instant_ensemble,
)
from facetouch.forest import Hyperparams
from facetouch.seeds import derive_rng


def grid_starts(duration_s, stride_s=0.25):
    n = int(round((duration_s - 1.5) / stride_s)) + 1
    return [k * stride_s for k in range(n)]


def test_score_events_hand_worked_case():
    starts = grid_starts(30.0)
    prompts = [(10.0, "nose")]
    events = [
        DetectionEvent(9.0, 1.5, -1.0, {}),    # fires before the prompt: FP
        DetectionEvent(10.5, 1.3, 2.0, {}),    # first hit, decided early
        DetectionEvent(11.0, 1.5, 2.0, {}),    # duplicate inside the window
    ]
    res = ev.score_events(events, prompts, starts, user_id="u9")
    assert res.user_id == "u9"
    assert res.n_prompts == 1
    assert res.n_detected == 1
    assert res.recall == 1.0
    assert res.early_histogram == {1.3: 1}
    assert res.n_false_positive_events == 1
    # 115 quarter-second starts total, 12 of them inside [10, 13)
    assert res.n_frames == 115
    assert res.n_negative_frames == 103
    assert res.fpr == pytest.approx(1.0 / 103.0)


def test_never_firing_detector_scores_zero():
    res = ev.score_events([], [(5.0, "ear")], grid_starts(20.0))
    assert res.recall == 0.0
    assert res.fpr == 0.0
    assert res.early_histogram == {}


def test_always_firing_detector_scores_one_everywhere(make_constant_ensemble):
    from facetouch.dataset import PromptLog

    ens = make_constant_ensemble({1.5: 1})
    n = 3000
    stream = np.column_stack([np.arange(n) / 100.0, np.zeros((n, 3))])
    log = PromptLog(stream=stream, prompts=((10.0, "nose"),), user_id="p01")
    res = ev.evaluate_session(log, ens, refractory_s=0.0)
    assert res.recall == 1.0
    assert res.fpr == 1.0
    assert sum(res.early_histogram.values()) == res.n_detected


def test_aggregate_pools_counts():
    a = ev.SessionResult("a", 10, 9, 100, 80, 2, {1.0: 4, 1.5: 5}, ())
    b = ev.SessionResult("b", 10, 10, 100, 90, 0, {1.5: 10}, ())
    total = ev.aggregate([a, b])
    assert total.user_id == "overall"
    assert total.n_prompts == 20
    assert total.n_detected == 19
    assert total.n_negative_frames == 170
    assert total.n_false_positive_events == 2
    assert total.early_histogram == {1.0: 4, 1.5: 15}
    assert sum(total.early_histogram.values()) == total.n_detected
    with pytest.raises(ValueError):
        ev.aggregate([])


def test_evaluate_session_on_synthetic_log(tiny_ensemble):
    spec = ParticipantSpec(duration_s=120.0, n_prompts=3)
    log = session_log(spec, derive_rng(31, 0), GenConfig())
    res = ev.evaluate_session(log, tiny_ensemble)
    assert res.n_prompts == 3
    assert 0.0 <= res.recall <= 1.0
    assert set(res.early_histogram) <= set(tiny_ensemble.instants)
    assert sum(res.early_histogram.values()) == res.n_detected
    for e in res.events:
        assert e.decided_at_t in tiny_ensemble.instants


def test_compare_full_window_against_itself(tiny_ensemble):
    solo = single_instant_ensemble(tiny_ensemble)
    spec = ParticipantSpec(duration_s=90.0, n_prompts=2)
    log = session_log(spec, derive_rng(32, 0), GenConfig())
    ens_res, full_res = ev.compare_full_window(log, solo)
    assert ens_res == full_res


def test_f1_curve_shape_and_quality(small_trials, tiny_hp):
    curve = ev.f1_curve(small_trials, seed=3, hp_by_t=tiny_hp,
                        instants=(1.0, 1.5))
    assert set(curve) == {1.0, 1.5}
    for v in curve.values():
        assert 0.9 <= v <= 1.0  # the synthetic classes are far apart

    with pytest.raises(ValueError):
        ev.f1_curve([], seed=0, hp_by_t=tiny_hp, instants=(1.5,))
    stubs = [tr.__class__(user_id=tr.user_id, session=tr.session,
                          placement=tr.placement, behavior=tr.behavior)
             for tr in small_trials[:4]]
    with pytest.raises(ValueError):
        ev.f1_curve(stubs, seed=0, hp_by_t=tiny_hp, instants=(1.5,))


def test_f1_curve_is_seed_deterministic(small_trials, tiny_hp):
    a = ev.f1_curve(small_trials, seed=5, hp_by_t=tiny_hp, instants=(1.5,))
    b = ev.f1_curve(small_trials, seed=5, hp_by_t=tiny_hp, instants=(1.5,))
    assert a == b


def test_report_table_and_kv_lines():
    r = ev.SessionResult("p01", 30, 27, 7000, 6500, 13, {1.0: 20, 1.5: 7}, ())
    overall = ev.aggregate([r])
    table = ev.format_report_table([r], overall)
    assert "p01" in table and "overall" in table
    assert "27/30" in table
    assert "0.900" in table
    assert "0.20%" in table

    hist = ev.format_early_histogram(overall, DEFAULT_PREFIX_INSTANTS)
    assert "t=1.00 s: 20" in hist
    assert "t=1.50 s: 7" in hist
    assert "t=1.20 s: 0" in hist

    kv = ev.report_kv_lines([r], overall)
    assert "p01_recall = 0.9" in kv
    assert "overall_detected = 27" in kv
    assert "overall_decided_at_1.0 = 20" in kv

    tagged = ev.report_kv_lines([r], overall, prefix="full_window_")
    assert "full_window_p01_recall = 0.9" in tagged


def test_f1_curve_csv_roundtrip(tmp_path):
    curve = {1.0: 0.8125, 1.5: 0.90625}
    path = tmp_path / "curve.csv"
    ev.write_f1_curve_csv(curve, path)
    assert ev.read_f1_curve_csv(path) == curve
    path.write_text("instant,f1\n1.0,0.5\n")
    with pytest.raises(ValueError):
        ev.read_f1_curve_csv(path)


def test_early_histogram_csv(tmp_path):
    import pandas as pd

    path = tmp_path / "hist.csv"
    ev.write_early_histogram_csv({1.0: 3, 1.5: 2}, DEFAULT_PREFIX_INSTANTS, path)
    df = pd.read_csv(path)
    assert list(df.columns) == ["t", "count"]
    assert len(df) == 6
    assert df["count"].tolist() == [3, 0, 0, 0, 0, 2]


def test_shuffled_label_baseline_centers_near_half(small_trials):
    # sanity floor for the detectability curve: labels with no signal
    import dataclasses

    hp = {1.5: Hyperparams(n_estimators=15, max_depth=5)}
    rng = np.random.default_rng(0)
    scores = []
    for s in range(6):
        behaviors = [tr.behavior for tr in small_trials]
        rng.shuffle(behaviors)
        shuffled = [dataclasses.replace(tr, behavior=b)
                    for tr, b in zip(small_trials, behaviors)]
        curve = ev.f1_curve(shuffled, seed=s, hp_by_t=hp, instants=(1.5,))
        scores.append(curve[1.5])
    assert 0.3 <= float(np.mean(scores)) <= 0.7
