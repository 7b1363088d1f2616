from collections import Counter

import numpy as np
import pytest

from facetouch import dataset as ds
from facetouch.seeds import derive_rng


def quiet_cfg(**overrides):
    """Background flat at the rest orientation, no noise anywhere."""
    base = dict(noise_sigma=0.0, mag_amp_g=0.0, jj_amp_g=0.0,
                typing_jitter_g=0.0, speak_amp_g=0.0, wash_amp_g=0.0)
    base.update(overrides)
    return ds.GenConfig(**base)


def test_manifest_counts(trials366):
    assert len(trials366) == 366
    touch = [tr for tr in trials366 if tr.is_touch]
    rest = [tr for tr in trials366 if not tr.is_touch]
    assert len(touch) == 216
    assert len(rest) == 150
    assert {tr.label_sign for tr in touch} == {1}
    assert {tr.label_sign for tr in rest} == {-1}


def test_manifest_per_session_structure(trials366):
    for session in (1, 2, 3):
        sess = [tr for tr in trials366 if tr.session == session]
        assert len(sess) == 122
        placements = {tr.placement for tr in sess}
        assert len(placements) == 1

        parts = Counter(tr.behavior.part for tr in sess if tr.is_touch)
        assert set(parts) == set(ds.TOUCH_PARTS)
        assert set(parts.values()) == {8}

        for part in ds.SYMMETRIC_PARTS:
            sides = Counter(tr.behavior.side for tr in sess
                            if tr.is_touch and tr.behavior.part == part)
            assert sides == {"left": 4, "right": 4}

        for part in ds.TOUCH_PARTS:
            manners = Counter(tr.behavior.manner for tr in sess
                              if tr.is_touch and tr.behavior.part == part)
            assert sorted(manners.values()) == [4, 4]

        acts = Counter(tr.behavior.activity for tr in sess if not tr.is_touch)
        assert set(acts) == set(ds.ACTIVITIES)
        assert set(acts.values()) == {10}

    assert len({tr.placement for tr in trials366}) == 3


def test_manifest_counts_hold_for_many_seeds():
    for seed in range(10):
        stubs = ds.protocol_manifest(seed, "uX")
        assert len(stubs) == 366
        assert sum(tr.is_touch for tr in stubs) == 216


def test_manifest_is_seed_deterministic():
    a = ds.protocol_manifest(5)
    b = ds.protocol_manifest(5)
    assert [tr.behavior for tr in a] == [tr.behavior for tr in b]
    c = ds.protocol_manifest(6)
    assert [tr.behavior for tr in a] != [tr.behavior for tr in c]


def test_synth_trial_shapes(trials366):
    tr = trials366[0]
    assert tr.window is not None
    assert tr.window.data.shape == (150, 3)
    assert tr.window.rate_hz == 100.0
    assert np.isfinite(tr.window.data).all()


def test_synth_trial_is_rng_deterministic(gen_cfg):
    stub = ds.protocol_manifest(3)[0]
    a = ds.synth_trial(stub, derive_rng(42, 0), gen_cfg)
    b = ds.synth_trial(stub, derive_rng(42, 0), gen_cfg)
    assert np.array_equal(a.window.data, b.window.data)
    c = ds.synth_trial(stub, derive_rng(43, 0), gen_cfg)
    assert not np.array_equal(a.window.data, c.window.data)


def test_touch_template_settles_on_contact():
    cfg = quiet_cfg()
    rng = derive_rng(0, 0)
    for manner in ("lingering", "transient"):
        stub = ds.TrialRecord(user_id="u", session=1, placement="mid",
                              behavior=ds.Touch(part="nose", manner=manner))
        tr = ds.synth_trial(stub, rng, cfg)
        tail = tr.window.data[100:, 0]  # final 0.5 s of the X axis
        assert 0.8 <= tail.mean() <= 1.0, manner


def test_part_z_targets_are_separated():
    cfg = ds.GenConfig()
    targets = {}
    for part in ds.TOUCH_PARTS:
        sides = ("left", "right") if part in ds.SYMMETRIC_PARTS else ("center",)
        for side in sides:
            targets[(part, side)] = ds.part_z_target(cfg, part, side)
    keys = list(targets)
    for i, a in enumerate(keys):
        for b in keys[i + 1:]:
            if a[0] == b[0]:
                continue
            gap = abs(targets[a] - targets[b])
            assert gap >= 3.0 * cfg.noise_sigma, (a, b, gap)


def test_jumping_jacks_oscillate_in_band():
    cfg = quiet_cfg(jj_amp_g=0.80)
    rest_y = cfg.rest("mid")[1]
    stub = ds.TrialRecord(user_id="u", session=2, placement="mid",
                          behavior=ds.NoTouch(activity="jumping_jacks"))
    rng = derive_rng(1, 0)
    for _ in range(5):
        tr = ds.synth_trial(stub, rng, cfg)
        y = tr.window.data[:, 1] - rest_y
        nonzero = y[y != 0.0]
        crossings = int(np.sum(np.signbit(nonzero[:-1]) != np.signbit(nonzero[1:])))
        # 1.5 s of a 1.8..2.4 Hz sine crosses zero 2f*1.5 times, give or take one
        assert 4 <= crossings <= 9, crossings


def test_typing_is_much_stiller_than_jumping():
    cfg = ds.GenConfig()
    rng = derive_rng(2, 0)
    mk = lambda act: ds.TrialRecord(user_id="u", session=1, placement="mid",
                                    behavior=ds.NoTouch(activity=act))
    typing = ds.synth_trial(mk("typing"), rng, cfg)
    jj = ds.synth_trial(mk("jumping_jacks"), rng, cfg)
    assert typing.window.data[:, 1].std() < jj.window.data[:, 1].std()


def test_trials_jsonl_roundtrip(tmp_path, trials366):
    subset = trials366[:12] + trials366[-12:]
    path = tmp_path / "trials.jsonl"
    ds.save_trials(subset, path)
    back = ds.load_trials(path)
    assert len(back) == 24
    for orig, got in zip(subset, back):
        assert got.behavior == orig.behavior
        assert got.user_id == orig.user_id
        assert got.session == orig.session
        assert got.placement == orig.placement
        assert np.array_equal(got.window.data, orig.window.data)


def test_load_trials_error_reporting(tmp_path, trials366):
    path = tmp_path / "bad.jsonl"

    ds.save_trials(trials366[:2], path)
    lines = path.read_text().splitlines()
    import json

    doc = json.loads(lines[1])
    doc["samples"] = doc["samples"][:149]
    lines[1] = json.dumps(doc)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ds.TrialFormatError, match="line 2"):
        ds.load_trials(path)

    doc = json.loads(lines[0])
    assert doc["label"] == "touch"
    doc["part"] = "neck"
    path.write_text(json.dumps(doc) + "\n")
    with pytest.raises(ds.TrialFormatError, match="line 1"):
        ds.load_trials(path)

    path.write_text("{not json\n")
    with pytest.raises(ds.TrialFormatError, match="line 1"):
        ds.load_trials(path)

    path.write_text("")
    with pytest.raises(ds.TrialFormatError):
        ds.load_trials(path)


def test_gen_config_file_roundtrip(tmp_path):
    cfg = ds.GenConfig(noise_sigma=0.07, jj_amp_g=0.5)
    path = tmp_path / "gen.cfg"
    cfg.to_file(path)
    assert ds.GenConfig.from_file(path) == cfg

    path.write_text("noise_sigma = 0.05\nwobble = 3\n")
    with pytest.raises(ValueError, match="line 2"):
        ds.GenConfig.from_file(path)
    path.write_text("noise_sigma = loud\n")
    with pytest.raises(ValueError, match="line 1"):
        ds.GenConfig.from_file(path)


def test_gen_config_validation():
    with pytest.raises(ValueError):
        ds.GenConfig(noise_sigma=-0.1)
    with pytest.raises(ValueError):
        ds.GenConfig(ramp_start_s=1.2, ramp_end_s=1.0)
    with pytest.raises(ValueError):
        ds.GenConfig(reaction_lo_s=2.0, reaction_hi_s=1.0)
    with pytest.raises(ValueError):
        ds.GenConfig().rest("pocket")


def test_behavior_validation():
    with pytest.raises(ValueError):
        ds.Touch(part="neck")
    with pytest.raises(ValueError):
        ds.Touch(part="ear")  # symmetric part needs an explicit side
    with pytest.raises(ValueError):
        ds.Touch(part="nose", side="left")
    with pytest.raises(ValueError):
        ds.Touch(part="nose", manner="double_tap")
    with pytest.raises(ValueError):
        ds.NoTouch(activity="sleeping")
    with pytest.raises(ValueError):
        ds.TrialRecord(user_id="u", session=1, placement="wrist",
                       behavior=ds.NoTouch(activity="typing"))


def test_prompt_times_honor_margins_and_gaps():
    cfg = ds.GenConfig()
    spec = ds.ParticipantSpec(duration_s=600.0, n_prompts=20)
    for seed in range(5):
        times = ds._prompt_times(spec, cfg, derive_rng(seed, 0))
        assert len(times) == 20
        assert times[0] >= cfg.prompt_margin_start_s
        assert times[-1] <= spec.duration_s - cfg.prompt_margin_end_s
        assert np.all(np.diff(times) >= spec.min_gap_s - 1e-9)


def test_session_log_shapes_and_determinism(gen_cfg):
    spec = ds.ParticipantSpec(duration_s=120.0, n_prompts=4)
    log = ds.session_log(spec, derive_rng(9, 0), gen_cfg)
    assert log.stream.shape == (12000, 4)
    assert np.array_equal(log.stream[:, 0], np.arange(12000) / 100.0)
    assert len(log.prompts) == 4
    assert all(part in spec.parts for _, part in log.prompts)

    again = ds.session_log(spec, derive_rng(9, 0), gen_cfg)
    assert np.array_equal(again.stream, log.stream)
    assert again.prompts == log.prompts


def test_session_touch_motion_lags_the_prompt():
    cfg = quiet_cfg()
    spec = ds.ParticipantSpec(duration_s=40.0, n_prompts=1, parts=("nose",))
    for seed in range(4):
        log = ds.session_log(spec, derive_rng(seed, 0), cfg)
        p = log.prompts[0][0]
        rest = cfg.rest(spec.placement)
        dev = np.abs(log.stream[:, 1:4] - rest).max(axis=1)
        t = log.stream[:, 0]
        before = dev[t < p + cfg.reaction_lo_s - 1e-9]
        assert before.max() == 0.0
        first = t[dev > 0.2][0]
        assert p + cfg.reaction_lo_s <= first <= p + cfg.reaction_hi_s + 1.0


def test_label_frames_reference_case():
    starts = np.arange(0, 60, 0.25)
    y = ds.label_frames([(10.0, "nose")], starts)
    pos = starts[y == 1]
    assert pos[0] == 10.0
    assert pos[-1] == 12.75
    assert len(pos) == 12
    assert y[np.where(starts == 9.75)[0][0]] == -1
    assert y[np.where(starts == 13.0)[0][0]] == -1

    y2 = ds.label_frames([], starts)
    assert np.all(y2 == -1)

    y3 = ds.label_frames([(5.0, "ear"), (20.0, "chin")], starts)
    assert int((y3 == 1).sum()) == 24


def test_prompts_csv_roundtrip(tmp_path):
    prompts = ((12.5, "nose"), (30.25, "ear"))
    path = tmp_path / "prompts.csv"
    ds.write_prompts_csv(prompts, path)
    assert ds.read_prompts_csv(path) == prompts

    path.write_text("t,part\n4.0,neck\n")
    with pytest.raises(ValueError):
        ds.read_prompts_csv(path)


def test_synth_trials_carries_stub_metadata(trials366):
    by_behavior = {}
    for tr in trials366:
        assert tr.user_id == "u01"
        assert tr.window is not None
        by_behavior.setdefault(type(tr.behavior).__name__, 0)
        by_behavior[type(tr.behavior).__name__] += 1
    assert by_behavior == {"Touch": 216, "NoTouch": 150}
