"""Corpus access: montage selection, task runs, fetch cache."""

import json

import numpy as np
import pytest

from eegmotor.dataset import (PAPER_MONTAGE, FetchError, TaskClass,
                              fetch_subject, normalize_channel_name,
                              read_run, run_filename, runs_for_task,
                              select_channels, task_for_run)
from eegmotor.edf import parse_edf
from helpers import synth_run_bytes, write_synthetic_subject


def test_run_sets():
    assert runs_for_task(TaskClass.MOTOR_EXECUTION) == {3, 7, 11}
    assert runs_for_task(TaskClass.MOTOR_IMAGERY) == {4, 8, 12}
    assert not (runs_for_task(TaskClass.MOTOR_EXECUTION)
                & runs_for_task(TaskClass.MOTOR_IMAGERY))
    assert task_for_run(8) is TaskClass.MOTOR_IMAGERY
    with pytest.raises(ValueError):
        task_for_run(1)


def test_montage_has_46_unique_names():
    assert len(PAPER_MONTAGE) == 46
    assert len({normalize_channel_name(n) for n in PAPER_MONTAGE}) == 46


def test_channel_name_normalization():
    assert normalize_channel_name("Fc5..") == "FC5"
    assert normalize_channel_name(" Cpz. ") == "CPZ"


@pytest.fixture()
def recording():
    _, rec, _ = parse_edf(synth_run_bytes("imagery", seed=5, n_trials=2))
    return rec


def test_select_channels_montage_order(recording):
    selected = select_channels(recording, PAPER_MONTAGE)
    assert len(selected.channels) == 46
    normalized = [normalize_channel_name(c) for c in selected.channels]
    assert normalized == [normalize_channel_name(c) for c in PAPER_MONTAGE]
    # data rows moved with their channels
    idx = recording.channels.index(selected.channels[0])
    np.testing.assert_array_equal(selected.data[0], recording.data[idx])


def test_select_channels_is_projection(recording):
    once = select_channels(recording, PAPER_MONTAGE)
    twice = select_channels(once, PAPER_MONTAGE)
    assert twice.channels == once.channels
    np.testing.assert_array_equal(twice.data, once.data)


def test_select_identity_montage(recording):
    same = select_channels(recording, recording.channels)
    assert same.channels == recording.channels
    np.testing.assert_array_equal(same.data, recording.data)


def test_select_missing_channel(recording):
    with pytest.raises(KeyError, match="XX9"):
        select_channels(recording, ["XX9"])


def test_fetch_from_local_source(tmp_path):
    source = write_synthetic_subject(tmp_path / "src", subject=1, n_trials=2)
    cache = tmp_path / "cache"
    paths = fetch_subject(1, source=source, cache_dir=cache)
    assert len(paths) == 14
    assert [p.name for p in paths] == [run_filename(1, r) for r in range(1, 15)]
    assert all(p.is_file() for p in paths)
    manifest = json.loads((cache / "S001" / "manifest.json").read_text())
    assert manifest["source"] == str(source)
    assert len(manifest["files"]) == 14
    for name, entry in manifest["files"].items():
        assert entry["bytes"] == (cache / "S001" / name).stat().st_size


def test_fetch_warm_cache_touches_nothing(tmp_path, monkeypatch):
    source = write_synthetic_subject(tmp_path / "src", subject=1, n_trials=2)
    cache = tmp_path / "cache"
    fetch_subject(1, source=source, cache_dir=cache)

    import eegmotor.dataset as ds

    def boom(*args, **kwargs):
        raise AssertionError("warm cache must not fetch")

    monkeypatch.setattr(ds, "_fetch_one", boom)
    paths = fetch_subject(1, source=source, cache_dir=cache)
    assert len(paths) == 14


def test_fetch_rejects_out_of_range_subject(tmp_path):
    with pytest.raises(ValueError, match="subject_id"):
        fetch_subject(0, source=tmp_path, cache_dir=tmp_path / "c")
    with pytest.raises(ValueError, match="subject_id"):
        fetch_subject(110, source=tmp_path, cache_dir=tmp_path / "c")


def test_fetch_missing_file_errors(tmp_path):
    source = tmp_path / "src"
    source.mkdir()
    with pytest.raises(FetchError, match="not found"):
        fetch_subject(1, source=source, cache_dir=tmp_path / "cache")


def test_fetch_checksum_mismatch(tmp_path):
    source = write_synthetic_subject(tmp_path / "src", subject=1, n_trials=2)
    lines = [f"{'0' * 64}  S001/{run_filename(1, r)}" for r in range(1, 15)]
    (source / "SHA256SUMS.txt").write_text("\n".join(lines))
    with pytest.raises(FetchError, match="checksum"):
        fetch_subject(1, source=source, cache_dir=tmp_path / "cache")


def test_fetch_checksum_match_accepted(tmp_path):
    import hashlib

    source = write_synthetic_subject(tmp_path / "src", subject=1, n_trials=2)
    lines = []
    for r in range(1, 15):
        digest = hashlib.sha256(
            (source / "S001" / run_filename(1, r)).read_bytes()
        ).hexdigest()
        lines.append(f"{digest}  S001/{run_filename(1, r)}")
    (source / "SHA256SUMS.txt").write_text("\n".join(lines))
    paths = fetch_subject(1, source=source, cache_dir=tmp_path / "cache")
    assert len(paths) == 14


def test_read_run_attaches_ids_and_events(tmp_path):
    source = write_synthetic_subject(tmp_path / "src", subject=2, n_trials=2)
    rec = read_run(source / "S002" / run_filename(2, 4))
    assert rec.subject_id == 2
    assert rec.run_id == 4
    assert rec.events
    assert all(e.end <= rec.duration_sec + 1e-6 for e in rec.events)
