"""Segmentation count formula and majority-coverage labeling."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eegmotor.dataset import TaskClass
from eegmotor.edf import Event
from eegmotor.windows import (LabeledWindow, MotionClass, WindowSpec,
                              label_windows, segment)

FS = 160.0


def enumerate_starts(length, window_len, stride):
    """Oracle: walk the starts one by one."""
    out = []
    s = 0
    while s + window_len <= length:
        out.append(s)
        s += stride
    return out


class TestWindowSpec:
    def test_defaults(self):
        spec = WindowSpec()
        assert spec.window_len == 560
        assert spec.stride == 1

    def test_from_seconds_default_window(self):
        spec = WindowSpec.from_seconds(3.5, FS)
        assert spec.window_len == 560
        assert spec.stride == 1

    def test_overlap_conversion(self):
        # 2 s at 50% overlap -> stride 160
        spec = WindowSpec.from_seconds(2.0, FS, overlap_pct=50.0)
        assert spec.window_len == 320
        assert spec.stride == 160

    def test_overlap_99pct_never_reaches_zero_stride(self):
        spec = WindowSpec.from_seconds(3.5, FS, overlap_pct=99.0)
        assert spec.stride == max(1, round(560 * 0.01))

    def test_stride_and_overlap_mutually_exclusive(self):
        with pytest.raises(ValueError, match="mutually exclusive"):
            WindowSpec.from_seconds(2.0, FS, stride=3, overlap_pct=50.0)

    def test_invalid_specs(self):
        with pytest.raises(ValueError):
            WindowSpec(window_len=1)
        with pytest.raises(ValueError):
            WindowSpec(window_len=10, stride=0)
        with pytest.raises(ValueError):
            WindowSpec(window_len=10, stride=11)
        with pytest.raises(ValueError):
            WindowSpec.from_seconds(2.0, FS, overlap_pct=100.0)


class TestSegment:
    def test_stride_one_count(self):
        starts = segment(19200, WindowSpec(window_len=560, stride=1))
        assert len(starts) == 18641
        assert starts[0] == 0 and starts[-1] == 18640

    def test_short_signal_yields_nothing(self):
        assert len(segment(500, WindowSpec(window_len=560))) == 0

    def test_half_overlap_count(self):
        starts = segment(19200, WindowSpec(window_len=560, stride=280))
        assert len(starts) == 67

    def test_negative_length_rejected(self):
        with pytest.raises(ValueError):
            segment(-1, WindowSpec())

    @given(
        length=st.integers(0, 5000),
        window_len=st.integers(2, 800),
        stride_frac=st.integers(1, 800),
    )
    @settings(max_examples=300, deadline=None)
    def test_count_formula_matches_enumeration(self, length, window_len,
                                               stride_frac):
        stride = min(stride_frac, window_len)
        spec = WindowSpec(window_len=window_len, stride=stride)
        starts = segment(length, spec)
        assert list(starts) == enumerate_starts(length, window_len, stride)


def make_events(spans):
    return [Event(label=label, onset=onset, duration=duration)
            for onset, duration, label in spans]


class TestLabelWindows:
    def test_window_inside_t1_of_imagery_run(self):
        events = make_events([(0, 2, "T0"), (2, 2, "T1"), (4, 2, "T0")])
        starts = np.array([int(2.5 * FS)])  # fully inside the T1 span
        windows, counters = label_windows(starts, events,
                                          TaskClass.MOTOR_IMAGERY, FS,
                                          window_len=80, subject=1, run=4)
        assert counters["kept"] == 1
        assert windows[0].label is MotionClass.MI_LEFT
        assert windows[0].event_index == 1

    def test_execution_t2_maps_to_me_right(self):
        events = make_events([(0, 2, "T2")])
        windows, _ = label_windows(np.array([0]), events,
                                   TaskClass.MOTOR_EXECUTION, FS,
                                   window_len=160, subject=1, run=3)
        assert windows[0].label is MotionClass.ME_RIGHT

    def test_rest_majority_dropped(self):
        # window 90% inside T0, 10% inside T1
        events = make_events([(0, 9, "T0"), (9, 4, "T1")])
        start = int(9 * FS) - 144  # 144 rest samples + 16 task samples
        windows, counters = label_windows(np.array([start]), events,
                                          TaskClass.MOTOR_IMAGERY, FS,
                                          window_len=160)
        assert not windows
        assert counters["dropped_rest"] == 1

    def test_exact_tie_dropped(self):
        events = make_events([(0, 1, "T1"), (1, 1, "T2")])
        start = int(FS) - 80  # exactly half T1, half T2
        windows, counters = label_windows(np.array([start]), events,
                                          TaskClass.MOTOR_IMAGERY, FS,
                                          window_len=160)
        assert not windows
        assert counters["dropped_tie"] == 1

    def test_uncovered_window_dropped(self):
        events = make_events([(0, 1, "T1")])
        windows, counters = label_windows(np.array([int(5 * FS)]), events,
                                          TaskClass.MOTOR_IMAGERY, FS,
                                          window_len=160)
        assert not windows
        assert counters["dropped_uncovered"] == 1

    def test_counters_partition_total(self):
        events = make_events([(0, 2, "T0"), (2, 2, "T1"), (4, 2, "T0"),
                              (6, 2, "T2"), (8, 2, "T0")])
        starts = segment(int(10 * FS), WindowSpec(window_len=320, stride=7))
        windows, counters = label_windows(starts, events,
                                          TaskClass.MOTOR_EXECUTION, FS,
                                          window_len=320)
        assert sum(counters.values()) == len(starts)
        assert counters["kept"] == len(windows)

    def test_windows_lie_within_run(self):
        events = make_events([(0, 2, "T1"), (2, 2, "T0")])
        length = int(4 * FS)
        starts = segment(length, WindowSpec(window_len=160, stride=9))
        windows, _ = label_windows(starts, events, TaskClass.MOTOR_IMAGERY,
                                   FS, window_len=160)
        assert all(w.start + 160 <= length for w in windows)

    def test_decreasing_stride_never_loses_windows(self):
        events = make_events([(0, 2, "T0"), (2, 2, "T1"), (4, 2, "T0"),
                              (6, 2, "T2"), (8, 2, "T0")])
        length = int(10 * FS)
        kept = []
        for stride in (200, 100, 50, 20, 5, 1):
            starts = segment(length, WindowSpec(window_len=320, stride=stride))
            windows, _ = label_windows(starts, events,
                                       TaskClass.MOTOR_IMAGERY, FS,
                                       window_len=320)
            kept.append(len(windows))
        assert kept == sorted(kept)

    def test_trial_key_follows_majority_event(self):
        events = make_events([(0, 2, "T0"), (2, 2, "T1"), (4, 2, "T0"),
                              (6, 2, "T1"), (8, 2, "T0")])
        start = int(6.5 * FS)  # sits in the second T1 trial (event index 3)
        windows, _ = label_windows(np.array([start]), events,
                                   TaskClass.MOTOR_IMAGERY, FS,
                                   window_len=80, subject=1, run=4)
        assert windows[0].trial_key == (1, 4, 3)

    def test_view_slices_signal(self):
        signal = np.arange(2 * 1000).reshape(2, 1000).astype(float)
        w = LabeledWindow(subject=1, run=3, start=17,
                          label=MotionClass.ME_LEFT, event_index=0)
        view = w.view(signal, window_len=5)
        np.testing.assert_array_equal(view, signal[:, 17:22])
