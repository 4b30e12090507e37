"""Synthetic EDF+ builders for tests: byte-level writer and a fake subject.

The fake subject mimics the corpus layout (64 channels at 160 Hz, T0/T1/T2
annotations, S{sss}R{rr}.edf filenames) with class-dependent oscillations so
the full pipeline has something learnable, plus occasional high-kurtosis
frontal spikes for the ICA detector to find.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

FS = 160.0

# PhysioNet-style dot-padded labels, 64 channels
CORPUS_LABELS = [
    "Fc5.", "Fc3.", "Fc1.", "Fcz.", "Fc2.", "Fc4.", "Fc6.",
    "C5..", "C3..", "C1..", "Cz..", "C2..", "C4..", "C6..",
    "Cp5.", "Cp3.", "Cp1.", "Cpz.", "Cp2.", "Cp4.", "Cp6.",
    "Fp1.", "Fpz.", "Fp2.",
    "Af7.", "Af3.", "Afz.", "Af4.", "Af8.",
    "F7..", "F5..", "F3..", "F1..", "Fz..", "F2..", "F4..", "F6..", "F8..",
    "Ft7.", "Ft8.",
    "T7..", "T8..", "T9..", "T10.",
    "Tp7.", "Tp8.",
    "P7..", "P5..", "P3..", "P1..", "Pz..", "P2..", "P4..", "P6..", "P8..",
    "Po7.", "Po3.", "Poz.", "Po4.", "Po8.",
    "O1..", "Oz..", "O2..", "Iz..",
]


@dataclass
class SignalDef:
    label: str
    digital: np.ndarray           # int16 values, length n_records * spr
    samples_per_record: int
    physical_min: float = -500.0
    physical_max: float = 500.0
    digital_min: int = -32768
    digital_max: int = 32767
    unit: str = "uV"


def _field(value, width: int) -> bytes:
    text = str(value)
    if len(text) > width:
        raise ValueError(f"field {text!r} wider than {width}")
    return text.ljust(width).encode("latin-1")


def build_edf(signals: list[SignalDef], n_records: int, record_duration: float,
              annotation_records: list[bytes] | None = None,
              annotation_spr: int = 256, record_count_field: int | None = None,
              header_bytes_override: int | None = None,
              version: str = "0", reserved: str | None = None) -> bytes:
    """Assemble EDF/EDF+ bytes from digital signal definitions."""
    all_signals = list(signals)
    annot_index = None
    if annotation_records is not None:
        if len(annotation_records) != n_records:
            raise ValueError("need one annotation block per record")
        annot_index = len(all_signals)
        all_signals.append(SignalDef(
            label="EDF Annotations",
            digital=np.zeros(0, dtype=np.int16),
            samples_per_record=annotation_spr,
            physical_min=-1.0, physical_max=1.0,
            digital_min=-32768, digital_max=32767, unit="",
        ))
    ns = len(all_signals)
    header_bytes = 256 + ns * 256
    if reserved is None:
        reserved = "EDF+C" if annotation_records is not None else ""

    duration_text = (f"{record_duration:g}")
    head = b"".join([
        _field(version, 8),
        _field("X X X X", 80),
        _field("Startdate 01-JAN-2000 X X X", 80),
        _field("01.01.00", 8),
        _field("00.00.00", 8),
        _field(header_bytes_override if header_bytes_override is not None
               else header_bytes, 8),
        _field(reserved, 44),
        _field(n_records if record_count_field is None else record_count_field, 8),
        _field(duration_text, 8),
        _field(ns, 4),
    ])
    columns = [
        b"".join(_field(s.label, 16) for s in all_signals),
        b"".join(_field("", 80) for _ in all_signals),
        b"".join(_field(s.unit, 8) for s in all_signals),
        b"".join(_field(f"{s.physical_min:g}", 8) for s in all_signals),
        b"".join(_field(f"{s.physical_max:g}", 8) for s in all_signals),
        b"".join(_field(s.digital_min, 8) for s in all_signals),
        b"".join(_field(s.digital_max, 8) for s in all_signals),
        b"".join(_field("", 80) for _ in all_signals),
        b"".join(_field(s.samples_per_record, 8) for s in all_signals),
        b"".join(_field("", 32) for _ in all_signals),
    ]

    records = []
    for r in range(n_records):
        for i, s in enumerate(all_signals):
            if i == annot_index:
                block = annotation_records[r]
                if len(block) > 2 * annotation_spr:
                    raise ValueError(
                        f"annotation block of {len(block)} bytes exceeds record"
                    )
                records.append(block.ljust(2 * annotation_spr, b"\x00"))
            else:
                spr = s.samples_per_record
                chunk = np.asarray(s.digital[r * spr : (r + 1) * spr],
                                   dtype="<i2")
                if chunk.size != spr:
                    raise ValueError(f"signal {s.label}: not enough samples")
                records.append(chunk.tobytes())
    return head + b"".join(columns) + b"".join(records)


def tal(onset: float, duration: float | None = None,
        labels: tuple[str, ...] = ()) -> bytes:
    text = f"{onset:+g}"
    if duration is not None:
        text += "\x15" + f"{duration:g}"
    out = text.encode("ascii") + b"\x14"
    for label in labels:
        out += label.encode("ascii") + b"\x14"
    if not labels:
        out += b"\x14"
    return out + b"\x00"


def annotation_records_for(events, n_records: int, record_duration: float,
                           ) -> list[bytes]:
    """Timekeeping TAL per record; all event TALs ride in the first record."""
    records = []
    for r in range(n_records):
        block = tal(r * record_duration)
        if r == 0:
            for onset, duration, label in events:
                block += tal(onset, duration, (label,))
        records.append(block)
    return records


def digital_from_physical(phys: np.ndarray, s: SignalDef) -> np.ndarray:
    gain = (s.physical_max - s.physical_min) / (s.digital_max - s.digital_min)
    digital = np.round((phys - s.physical_min) / gain) + s.digital_min
    return np.clip(digital, s.digital_min, s.digital_max).astype(np.int16)


# (frequency Hz, contralateral channel prefixes) per class signature
CLASS_SIGNATURES = {
    ("execution", "T1"): (12.0, ("C4..", "Cp4.", "C6..")),
    ("execution", "T2"): (9.0, ("C3..", "Cp3.", "C5..")),
    ("imagery", "T1"): (24.0, ("C4..", "Cp4.", "C6..")),
    ("imagery", "T2"): (18.0, ("C3..", "Cp3.", "C5..")),
}


def synth_run_events(n_trials: int, rest_sec: float, task_sec: float,
                     ) -> list[tuple[float, float, str]]:
    events = [(0.0, rest_sec, "T0")]
    t = rest_sec
    for i in range(n_trials):
        label = "T1" if i % 2 == 0 else "T2"
        events.append((t, task_sec, label))
        t += task_sec
        events.append((t, rest_sec, "T0"))
        t += rest_sec
    return events


def synth_run_bytes(task: str | None, seed: int,
                    n_trials: int = 8, rest_sec: float = 2.0,
                    task_sec: float = 2.0, blink_amp: float = 150.0) -> bytes:
    """One corpus-like run; task None produces a short rest-only baseline."""
    rng = np.random.default_rng(seed)
    if task is None:
        events = [(0.0, 4.0, "T0")]
        total_sec = 4.0
    else:
        events = synth_run_events(n_trials, rest_sec, task_sec)
        total_sec = events[-1][0] + events[-1][1]
    n_records = int(round(total_sec))
    n_samples = int(n_records * FS)
    t = np.arange(n_samples) / FS

    data = rng.normal(0.0, 10.0, size=(len(CORPUS_LABELS), n_samples))
    # common alpha-ish background
    data += 5.0 * np.sin(2 * np.pi * 10.3 * t + rng.uniform(0, 2 * np.pi))

    if task is not None:
        for onset, duration, label in events:
            if label == "T0":
                continue
            freq, channel_names = CLASS_SIGNATURES[(task, label)]
            lo, hi = int(onset * FS), int((onset + duration) * FS)
            burst = 30.0 * np.sin(2 * np.pi * freq * t[lo:hi])
            for name in channel_names:
                data[CORPUS_LABELS.index(name), lo:hi] += burst
        # sparse frontal spikes: a blink-like, high-kurtosis contaminant
        n_blinks = max(2, n_samples // int(6 * FS))
        for _ in range(n_blinks):
            center = rng.integers(int(FS), n_samples - int(FS))
            span = int(0.25 * FS)
            window = np.hanning(2 * span)
            for name in ("Fp1.", "Fpz.", "Fp2."):
                data[CORPUS_LABELS.index(name),
                     center - span : center + span] += blink_amp * window

    signals = []
    for i, label in enumerate(CORPUS_LABELS):
        s = SignalDef(label=label, digital=np.zeros(0, np.int16),
                      samples_per_record=int(FS))
        s.digital = digital_from_physical(data[i], s)
        signals.append(s)
    return build_edf(
        signals, n_records, 1.0,
        annotation_records=annotation_records_for(events, n_records, 1.0),
    )


def write_synthetic_subject(source_dir, subject: int = 1, seed: int = 7,
                            n_trials: int = 8) -> Path:
    """All 14 run files for one subject under source_dir/S{sss}/."""
    from eegmotor.dataset import run_filename, runs_for_task, TaskClass

    source_dir = Path(source_dir)
    subject_dir = source_dir / f"S{subject:03d}"
    subject_dir.mkdir(parents=True, exist_ok=True)
    execution = runs_for_task(TaskClass.MOTOR_EXECUTION)
    imagery = runs_for_task(TaskClass.MOTOR_IMAGERY)
    for run in range(1, 15):
        if run in execution:
            task = "execution"
        elif run in imagery:
            task = "imagery"
        else:
            task = None
        payload = synth_run_bytes(task, seed=seed * 1000 + run,
                                  n_trials=n_trials)
        (subject_dir / run_filename(subject, run)).write_bytes(payload)
    return source_dir


def brute_force_time_features(x, population=False):
    """Direct-summation oracle for the five time-domain features."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    mu = sum(x) / n
    var = sum((v - mu) ** 2 for v in x) / n
    inner = var if population else sum((v - mu) ** 2 for v in x) / (n - 1)
    skew = (sum((v - mu) ** 3 for v in x) / n) / inner**1.5
    kurt = (sum((v - mu) ** 4 for v in x) / n) / inner**2 - 3.0
    area = sum(abs(v) for v in x)
    return mu, var, skew, kurt, area


def small_pipeline_config(source_dir, out_dir, cache_dir, subjects=(1,),
                          epochs: int = 6, seed: int = 0):
    """A fast synthetic-data pipeline config for end-to-end tests."""
    from eegmotor.pipeline import config_from_dict

    return config_from_dict({
        "data": {"source": str(source_dir), "cache_dir": str(cache_dir)},
        "ica": {"n_components": 20},
        "window": {"window_sec": 2.0, "stride": 40},
        "train": {"epochs": epochs, "batch_size": 32, "hidden": [48, 24]},
        "subjects": list(subjects),
        "seed": seed,
        "out_dir": str(out_dir),
    })
