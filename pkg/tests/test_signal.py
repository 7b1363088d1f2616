import numpy as np
import pytest

from facetouch import signal as sig


def uniform_stream(duration_s, rate=100.0, seed=0):
    n = int(round(duration_s * rate))
    rng = np.random.default_rng(seed)
    t = np.arange(n) / rate
    return np.column_stack([t, rng.normal(size=(n, 3))])


def test_frame_schedule_sample_counts():
    sched = sig.FrameSchedule()
    assert sched.window_samples == 150
    assert sched.stride_samples == 25
    # duration arithmetic is integer, not float, so 1.5 s is never 149
    assert sig.FrameSchedule(window_s=1.5, rate_hz=100.0).window_samples == 150


def test_frame_schedule_validation():
    with pytest.raises(ValueError):
        sig.FrameSchedule(rate_hz=0.0)
    with pytest.raises(ValueError):
        sig.FrameSchedule(window_s=0.0)
    with pytest.raises(ValueError):
        sig.FrameSchedule(stride_s=0.001)


def test_slide_ten_seconds_gives_35_windows():
    stream = uniform_stream(10.0)
    windows = sig.slide(stream)
    assert len(windows) == 35
    starts = [w.start_t for w in windows]
    assert starts[0] == 0.0
    assert starts[-1] == 8.5
    assert np.allclose(np.diff(starts), 0.25)


def test_slide_windows_are_exact_slices():
    stream = uniform_stream(4.0, seed=3)
    for k, w in enumerate(sig.slide(stream)):
        lo = k * 25
        assert np.array_equal(w.data, stream[lo : lo + 150, 1:4])
        assert w.start_t == stream[lo, 0]
        assert len(w) == 150


def test_slide_requires_uniform_stream():
    stream = uniform_stream(3.0)
    stream[40, 0] += 0.002
    with pytest.raises(sig.StreamError):
        sig.slide(stream)


def test_resample_is_identity_on_uniform_streams():
    stream = uniform_stream(5.0, seed=1)
    out, gaps = sig.resample_uniform(stream)
    assert gaps == []
    assert np.array_equal(out, stream)  # bit-equal, not merely close


def test_resample_linear_interpolation_values():
    stream = np.array([
        [0.00, 1.0, -1.0, 0.5],
        [0.02, 3.0, 1.0, 0.5],
    ])
    out, gaps = sig.resample_uniform(stream, 100.0)
    assert gaps == []
    assert out.shape == (3, 4)
    assert np.array_equal(out[0], stream[0])
    assert np.array_equal(out[2], stream[1])
    assert out[1, 0] == 0.01
    assert out[1, 1] == 2.0
    assert out[1, 2] == 0.0
    assert out[1, 3] == 0.5


def test_resample_reports_gaps_but_interpolates():
    rate = 100.0
    t = np.concatenate([np.arange(0, 11) / rate, np.arange(40, 241) / rate])
    stream = np.column_stack([t, np.ones((len(t), 3))])
    out, gaps = sig.resample_uniform(stream, rate)
    assert len(out) == 241
    assert len(gaps) == 1
    assert gaps[0].start_t == pytest.approx(0.10)
    assert gaps[0].end_t == pytest.approx(0.40)
    assert gaps[0].duration_s == pytest.approx(0.30)

    flags = sig.windows_clear_of_gaps(sig.slide(out), gaps)
    assert flags == [False, False, True, True]


def test_resample_rejects_bad_streams():
    with pytest.raises(sig.StreamError):
        sig.resample_uniform(np.zeros((0, 4)))
    with pytest.raises(sig.StreamError):
        sig.resample_uniform(np.zeros((5, 3)))
    bad = uniform_stream(1.0)
    bad[3, 2] = np.nan
    with pytest.raises(sig.StreamError):
        sig.resample_uniform(bad)
    bad = uniform_stream(1.0)
    bad[4, 0] = bad[3, 0]
    with pytest.raises(sig.StreamError):
        sig.resample_uniform(bad)
    # a lone sample off the grid cannot be placed
    with pytest.raises(sig.StreamError):
        sig.resample_uniform(np.array([[0.0042, 1.0, 1.0, 1.0]]), 100.0)


def test_grid_resampler_matches_batch_bit_for_bit():
    rng = np.random.default_rng(8)
    dt = rng.uniform(0.004, 0.02, size=400)
    dt[100] = 0.3  # force one reportable gap
    dt[250] = 0.09
    t = np.cumsum(dt) + 0.123
    stream = np.column_stack([t, rng.normal(size=(400, 3))])

    batch, batch_gaps = sig.resample_uniform(stream, 100.0)

    inc = sig.GridResampler(100.0)
    rows = []
    for row in stream:
        rows.extend(inc.push(*row))
    got = np.vstack(rows)

    assert np.array_equal(got, batch)
    assert [(g.start_t, g.end_t) for g in inc.gaps] == [
        (g.start_t, g.end_t) for g in batch_gaps
    ]


def test_grid_resampler_rejects_regressions():
    inc = sig.GridResampler()
    inc.push(0.0, 1.0, 1.0, 1.0)
    with pytest.raises(sig.StreamError):
        inc.push(0.0, 1.0, 1.0, 1.0)
    with pytest.raises(sig.StreamError):
        inc.push(0.5, np.inf, 0.0, 0.0)


def test_prefix_sample_counts():
    w = sig.slide(uniform_stream(2.0, seed=2))[0]
    assert len(sig.prefix(w, 1.0)) == 100
    assert len(sig.prefix(w, 1.1)) == 110
    p = sig.prefix(w, 1.5)
    assert np.array_equal(p.data, w.data)
    assert p.start_t == w.start_t


def test_prefix_concatenation_reconstructs_window():
    w = sig.slide(uniform_stream(2.0, seed=4))[1]
    for tenths in range(1, 16):
        t = tenths / 10.0
        head = sig.prefix(w, t)
        rebuilt = np.concatenate([head.data, w.data[len(head):]])
        assert np.array_equal(rebuilt, w.data)


def test_prefix_bounds_errors():
    w = sig.slide(uniform_stream(2.0))[0]
    with pytest.raises(ValueError):
        sig.prefix(w, 1.6)
    with pytest.raises(ValueError):
        sig.prefix(w, 0.001)


def test_bin_for_viz_partitions_window():
    w = sig.slide(uniform_stream(2.0, seed=5))[0]
    bins = sig.bin_for_viz(w, 15)
    assert len(bins) == 15
    assert all(len(b) == 10 for b in bins)
    assert np.array_equal(np.vstack(bins), w.data)
    with pytest.raises(ValueError):
        sig.bin_for_viz(w, 14)
    with pytest.raises(ValueError):
        sig.bin_for_viz(w, 0)


def test_window_shape_validation():
    with pytest.raises(ValueError):
        sig.Window(data=np.zeros((5, 4)), start_t=0.0)
    with pytest.raises(ValueError):
        sig.Window(data=np.zeros((0, 3)), start_t=0.0)
    w = sig.window_from_samples(uniform_stream(1.0, seed=6))
    assert len(w) == 100
    assert w.duration_s == 1.0
    assert np.array_equal(w.t_rel, np.arange(100) / 100.0)


def test_stream_csv_roundtrip(tmp_path):
    stream = uniform_stream(1.0, seed=7)
    path = tmp_path / "s.csv"
    sig.write_stream_csv(stream, path)
    back = sig.read_stream_csv(path)
    assert np.array_equal(back, stream)

    with open(path) as fh:
        assert fh.readline().strip() == "t,ax,ay,az"


def test_read_stream_csv_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time,x,y,z\n0.0,1,1,1\n")
    with pytest.raises(sig.StreamError):
        sig.read_stream_csv(path)


def test_parse_stream_line_errors_carry_line_numbers():
    assert sig.parse_stream_line("0.5,1,2,3", 7) == (0.5, 1.0, 2.0, 3.0)
    with pytest.raises(sig.StreamError, match="line 7"):
        sig.parse_stream_line("0.5,1,2", 7)
    with pytest.raises(sig.StreamError, match="line 12"):
        sig.parse_stream_line("0.5,one,2,3", 12)
