"""Byte-level EDF parsing and TAL event extraction."""

import numpy as np
import pytest

from eegmotor.edf import (EdfParseError, EventError, extract_events,
                          parse_edf, parse_header)
from helpers import (CORPUS_LABELS, SignalDef, annotation_records_for,
                     build_edf, synth_run_bytes, tal)


def simple_signal(label="sig1", n_records=2, spr=4, **kw):
    values = np.arange(n_records * spr, dtype=np.int16) - 3
    defaults = dict(physical_min=-500.0, physical_max=500.0,
                    digital_min=-32768, digital_max=32767)
    defaults.update(kw)
    return SignalDef(label=label, digital=values, samples_per_record=spr,
                     **defaults)


def test_parse_corpus_like_run():
    data = synth_run_bytes("imagery", seed=3, n_trials=4)
    header, recording, stream = parse_edf(data)
    assert header.signal_count == 65  # 64 EEG + 1 annotation
    assert recording.fs == 160.0
    assert len(recording.channels) == 64
    assert recording.channels == [l.strip() for l in CORPUS_LABELS]
    assert stream  # annotation bytes present
    events = extract_events(stream)
    assert events and events[0].onset == 0.0
    assert {e.label for e in events} <= {"T0", "T1", "T2"}


def test_identity_scaling_returns_raw_digital_values():
    sig = simple_signal(physical_min=-32768.0, physical_max=32767.0)
    header, rec, _ = parse_edf(build_edf([sig], 2, 1.0))
    np.testing.assert_array_equal(rec.data[0], sig.digital.astype(float))


def test_affine_scaling_matches_independent_evaluation():
    # oracle: evaluate the linear map in exact fractions
    from fractions import Fraction

    sig = SignalDef(label="x", digital=np.array([0, -2048, 2047], np.int16),
                    samples_per_record=3, physical_min=-1000.0,
                    physical_max=1000.0, digital_min=-2048, digital_max=2047)
    _, rec, _ = parse_edf(build_edf([sig], 1, 1.0))
    for digital, got in zip([0, -2048, 2047], rec.data[0]):
        expected = Fraction(digital + 2048) * Fraction(2000, 4095) - 1000
        assert got == pytest.approx(float(expected), abs=1e-12)
    # the zero-digital sample sits at about 0.2442 uV
    assert rec.data[0][0] == pytest.approx(0.2442, abs=1e-4)


def test_scaling_is_affine_and_monotone():
    sig = simple_signal(physical_min=-100.0, physical_max=100.0)
    _, rec, _ = parse_edf(build_edf([sig], 2, 1.0))
    decoded = rec.data[0]
    diffs = np.diff(decoded)
    assert np.all(diffs > 0)  # monotone in the digital value
    assert np.allclose(diffs, diffs[0], rtol=1e-12)  # constant slope


def test_round_trip_preserves_header_and_samples():
    sig = simple_signal(n_records=3, spr=5, physical_min=-250.0,
                        physical_max=250.0)
    original = build_edf([sig], 3, 1.0)
    header, rec, _ = parse_edf(original)

    gain = (header.signals[0].physical_max - header.signals[0].physical_min) \
        / (header.signals[0].digital_max - header.signals[0].digital_min)
    digital = np.round((rec.data[0] - header.signals[0].physical_min) / gain
                       + header.signals[0].digital_min).astype(np.int16)
    rebuilt = build_edf(
        [SignalDef(label=header.signals[0].label, digital=digital,
                   samples_per_record=header.signals[0].samples_per_record,
                   physical_min=header.signals[0].physical_min,
                   physical_max=header.signals[0].physical_max,
                   digital_min=header.signals[0].digital_min,
                   digital_max=header.signals[0].digital_max,
                   unit=header.signals[0].unit)],
        header.record_count, header.record_duration,
    )
    assert rebuilt == original
    header2, rec2, _ = parse_edf(rebuilt)
    assert header2 == header
    np.testing.assert_array_equal(rec2.data, rec.data)


def test_unknown_record_count_resolved_from_size():
    sig = simple_signal(n_records=4, spr=4)
    data = build_edf([sig], 4, 0.5, record_count_field=-1)
    header, rec, _ = parse_edf(data)
    assert header.record_count == 4
    assert rec.n_samples == 16
    assert rec.fs == 8.0  # 4 samples per 0.5 s record


def test_digital_range_error():
    sig = simple_signal(digital_min=100, digital_max=100)
    with pytest.raises(EdfParseError, match="digital_max"):
        parse_edf(build_edf([sig], 2, 1.0))


def test_truncated_payload_rejected():
    data = build_edf([simple_signal()], 2, 1.0)
    with pytest.raises(EdfParseError, match="payload"):
        parse_edf(data[:-2])


def test_bad_header_byte_count_rejected():
    data = build_edf([simple_signal()], 2, 1.0, header_bytes_override=300)
    with pytest.raises(EdfParseError, match="header byte count"):
        parse_header(data)


def test_two_annotation_signals_rejected():
    sig = simple_signal()
    bad = SignalDef(label="EDF Annotations", digital=np.zeros(8, np.int16),
                    samples_per_record=4, physical_min=-1.0, physical_max=1.0)
    with pytest.raises(EdfParseError, match="annotation"):
        parse_edf(build_edf([sig, bad], 2, 1.0,
                            annotation_records=[b"+0\x14\x14\x00"] * 2,
                            annotation_spr=8))


def test_mixed_sampling_rates_rejected():
    a = simple_signal(label="a", spr=4)
    b = simple_signal(label="b", spr=8)
    b.digital = np.arange(16, dtype=np.int16)
    with pytest.raises(EdfParseError, match="mixed sampling"):
        parse_edf(build_edf([a, b], 2, 1.0))


class TestTal:
    def test_timekeeping_only_stream_is_empty(self):
        assert extract_events(b"+0\x14\x14\x00") == []

    def test_event_with_duration(self):
        events = extract_events(b"+4.2\x152.1\x14T1\x14\x00")
        assert len(events) == 1
        assert events[0].label == "T1"
        assert events[0].onset == pytest.approx(4.2)
        assert events[0].duration == pytest.approx(2.1)

    def test_event_without_duration(self):
        events = extract_events(b"+3\x14T2\x14\x00")
        assert events[0].duration == 0.0

    def test_events_sorted_by_onset(self):
        stream = tal(5.0, 1.0, ("T2",)) + tal(1.0, 1.0, ("T1",))
        events = extract_events(stream)
        assert [e.onset for e in events] == [1.0, 5.0]

    def test_unknown_label_aborts(self):
        with pytest.raises(EventError, match="T9"):
            extract_events(b"+1\x14T9\x14\x00")

    def test_missing_terminator_rejected(self):
        with pytest.raises(EventError, match="terminated"):
            extract_events(b"+1\x14T1\x00")

    def test_bad_onset_rejected(self):
        with pytest.raises(EventError):
            extract_events(b"1.0\x14T1\x14\x00")


def test_corpus_like_events_tile_run_without_overlap():
    data = synth_run_bytes("execution", seed=11, n_trials=6)
    _, rec, stream = parse_edf(data)
    events = extract_events(stream)
    assert events[0].onset == 0.0
    for prev, cur in zip(events, events[1:]):
        assert cur.onset == pytest.approx(prev.end)
    assert events[-1].end <= rec.duration_sec + 1e-9


def test_annotation_records_layout():
    records = annotation_records_for([(1.5, 0.5, "T1")], 3, 1.0)
    assert len(records) == 3
    assert records[1] == b"+1\x14\x14\x00"
    assert b"T1" in records[0]
