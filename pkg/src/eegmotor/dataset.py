"""PhysioNet motor movement/imagery corpus access: fetch, montage, run selection.

The corpus holds 109 subjects x 14 runs of 64-channel EEG at 160 Hz in EDF+
files named S{sss}R{rr}.edf. Runs 3/7/11 are motor execution, 4/8/12 motor
imagery; the remaining runs (baselines, fist/feet tasks) are unused here.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import shutil
import urllib.error
import urllib.request
from dataclasses import replace
from enum import Enum
from pathlib import Path

from .edf import EventError, Recording, extract_events, parse_edf

DEFAULT_SOURCE = "https://physionet.org/files/eegmmidb/1.0.0/"
CACHE_ENV_VAR = "EEGMOTOR_CACHE"
CHECKSUM_FILENAME = "SHA256SUMS.txt"
MANIFEST_FILENAME = "manifest.json"

N_SUBJECTS = 109
N_RUNS = 14

# 46 electrodes: the 23 scalp-sensor pairs selected around the motor cortex
# and the visual/decision pathway, expanded left/right.
PAPER_MONTAGE: tuple[str, ...] = (
    "FC5", "FC6", "FC3", "FC4", "FC1", "FC2",
    "C3", "C4",
    "CP5", "CP6", "CP3", "CP4", "CP1", "CP2",
    "FP1", "FP2",
    "AF7", "AF8", "AF3", "AF4",
    "PO7", "PO8",
    "O1", "O2",
    "F5", "F6", "F7", "F8", "F1", "F2",
    "T7", "T8", "T9", "T10",
    "TP7", "TP8",
    "P5", "P6", "P3", "P4", "P1", "P2",
    "PO3", "PO4",
    "Cz", "CPz",
)


class TaskClass(Enum):
    MOTOR_EXECUTION = "execution"
    MOTOR_IMAGERY = "imagery"


_TASK_RUNS = {
    TaskClass.MOTOR_EXECUTION: frozenset({3, 7, 11}),
    TaskClass.MOTOR_IMAGERY: frozenset({4, 8, 12}),
}


class FetchError(RuntimeError):
    """Source unreachable, file missing, or download inconsistent."""


def runs_for_task(task: TaskClass) -> frozenset[int]:
    return _TASK_RUNS[task]


def task_for_run(run_id: int) -> TaskClass:
    for task, runs in _TASK_RUNS.items():
        if run_id in runs:
            return task
    raise ValueError(f"run {run_id} is not a left/right-hand task run")


def normalize_channel_name(name: str) -> str:
    """Corpus labels are dot-padded ("Fc5.."); compare case-insensitively."""
    return name.strip().strip(".").upper()


def run_filename(subject_id: int, run_id: int) -> str:
    return f"S{subject_id:03d}R{run_id:02d}.edf"


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV_VAR)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "eegmotor"


def select_channels(recording: Recording, montage) -> Recording:
    """Restrict and reorder channels to montage order; data otherwise untouched."""
    lookup = {}
    for idx, name in enumerate(recording.channels):
        key = normalize_channel_name(name)
        if key in lookup:
            raise ValueError(f"duplicate channel {name!r} after normalization")
        lookup[key] = idx
    indices = []
    for name in montage:
        key = normalize_channel_name(name)
        if key not in lookup:
            raise KeyError(
                f"montage channel {name!r} not present in recording "
                f"({len(recording.channels)} channels)"
            )
        indices.append(lookup[key])
    return replace(
        recording,
        channels=[recording.channels[i] for i in indices],
        data=recording.data[indices],
    )


def read_run(path, subject_id: int | None = None, run_id: int | None = None) -> Recording:
    """Parse one run file and attach its events and subject/run ids."""
    path = Path(path)
    if subject_id is None or run_id is None:
        match = re.fullmatch(r"S(\d{3})R(\d{2})\.edf", path.name)
        if match:
            subject_id = subject_id or int(match.group(1))
            run_id = run_id or int(match.group(2))
    _, recording, annotation_stream = parse_edf(path.read_bytes())
    events = extract_events(annotation_stream)
    for event in events:
        if event.onset > recording.duration_sec + 1e-6:
            raise EventError(
                f"{path.name}: event at {event.onset} s beyond recording end "
                f"({recording.duration_sec:.3f} s)"
            )
        if event.end > recording.duration_sec + 1.0 / recording.fs + 1e-6:
            raise EventError(
                f"{path.name}: event span {event.onset}+{event.duration} s "
                f"exceeds recording length {recording.duration_sec:.3f} s"
            )
    recording.events = events
    recording.subject_id = subject_id
    recording.run_id = run_id
    return recording


def _load_checksums(source: str) -> dict[str, str]:
    """Read a SHA256SUMS.txt next to the source, if one exists."""
    text = None
    if _is_url(source):
        try:
            with urllib.request.urlopen(source.rstrip("/") + "/" + CHECKSUM_FILENAME, timeout=30) as resp:
                text = resp.read().decode("utf-8", "replace")
        except (urllib.error.URLError, OSError):
            return {}
    else:
        path = Path(source) / CHECKSUM_FILENAME
        if path.is_file():
            text = path.read_text()
    if not text:
        return {}
    sums = {}
    for line in text.splitlines():
        parts = line.split()
        if len(parts) >= 2:
            digest, name = parts[0], parts[-1]
            sums[Path(name).name] = digest
    return sums


def _is_url(source: str) -> bool:
    return str(source).startswith(("http://", "https://"))


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _fetch_one(source: str, subject_dir_name: str, filename: str, dest: Path) -> None:
    tmp = dest.with_suffix(".part")
    if _is_url(source):
        url = f"{source.rstrip('/')}/{subject_dir_name}/{filename}"
        try:
            with urllib.request.urlopen(url, timeout=120) as resp, open(tmp, "wb") as out:
                expected = resp.headers.get("Content-Length")
                shutil.copyfileobj(resp, out)
            if expected is not None and tmp.stat().st_size != int(expected):
                got = tmp.stat().st_size
                tmp.unlink(missing_ok=True)
                raise FetchError(
                    f"truncated download of {url}: got {got} of {expected} bytes"
                )
        except (urllib.error.URLError, OSError) as exc:
            tmp.unlink(missing_ok=True)
            raise FetchError(f"cannot fetch {url}: {exc}") from exc
    else:
        src_dir = Path(source)
        for candidate in (src_dir / subject_dir_name / filename, src_dir / filename):
            if candidate.is_file():
                shutil.copyfile(candidate, tmp)
                break
        else:
            raise FetchError(f"{filename} not found under {src_dir}")
    os.replace(tmp, dest)


def fetch_subject(subject_id: int, source: str | Path = DEFAULT_SOURCE,
                  cache_dir: str | Path | None = None) -> list[Path]:
    """Ensure all 14 run files of one subject are cached; return their paths.

    Files already in the cache are left untouched (no network traffic).
    Newly fetched files are checksum-verified when the source publishes a
    SHA256SUMS.txt. A manifest records the source and per-file byte counts.
    """
    if not 1 <= subject_id <= N_SUBJECTS:
        raise ValueError(f"subject_id must be in 1..{N_SUBJECTS}, got {subject_id}")
    source = str(source)
    cache_dir = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    subject_dir_name = f"S{subject_id:03d}"
    subject_dir = cache_dir / subject_dir_name
    subject_dir.mkdir(parents=True, exist_ok=True)

    manifest_path = subject_dir / MANIFEST_FILENAME
    manifest = {"source": source, "files": {}}
    if manifest_path.is_file():
        try:
            manifest = json.loads(manifest_path.read_text())
            manifest.setdefault("files", {})
        except json.JSONDecodeError:
            manifest = {"source": source, "files": {}}

    checksums: dict[str, str] | None = None
    paths = []
    fetched_any = False
    for run_id in range(1, N_RUNS + 1):
        filename = run_filename(subject_id, run_id)
        dest = subject_dir / filename
        if not dest.is_file():
            if checksums is None:
                checksums = _load_checksums(source)
            _fetch_one(source, subject_dir_name, filename, dest)
            fetched_any = True
            digest = _sha256(dest)
            if filename in checksums and checksums[filename] != digest:
                dest.unlink()
                raise FetchError(
                    f"checksum mismatch for {filename}: expected "
                    f"{checksums[filename]}, got {digest}"
                )
            manifest["files"][filename] = {
                "bytes": dest.stat().st_size,
                "sha256": digest,
            }
        paths.append(dest)
    if fetched_any or not manifest_path.is_file():
        manifest["source"] = source
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return paths
