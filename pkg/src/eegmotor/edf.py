"""EDF/EDF+ reading: fixed header, signal headers, 16-bit samples, TAL annotations.

Layout handled here (all header fields are space-padded ASCII):

  bytes 0..255            fixed header (version, ids, dates, record count, ...)
  bytes 256..256+ns*256   per-signal headers, field-major (ns labels, then
                          ns transducers, ...)
  data records            int16 little-endian, channel blocks concatenated
                          per record; physical value recovered by the affine
                          map (d - dmin) * (pmax - pmin) / (dmax - dmin) + pmin

EDF+ files carry one "EDF Annotations" signal whose byte stream is a list of
TALs: ``+onset[\\x15duration]\\x14label\\x14...\\x14\\x00``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

ANNOTATION_LABEL = "EDF Annotations"
EVENT_LABELS = ("T0", "T1", "T2")

_FIXED_HEADER_BYTES = 256
_SIGNAL_HEADER_BYTES = 256


class EdfParseError(ValueError):
    """Malformed EDF byte stream."""


class EventError(ValueError):
    """Undecodable or out-of-vocabulary annotation."""


@dataclass(frozen=True)
class EdfSignalHeader:
    label: str
    transducer: str
    unit: str
    physical_min: float
    physical_max: float
    digital_min: int
    digital_max: int
    prefilter: str
    samples_per_record: int

    @property
    def is_annotation(self) -> bool:
        return self.label == ANNOTATION_LABEL

    @property
    def gain(self) -> float:
        return (self.physical_max - self.physical_min) / (
            self.digital_max - self.digital_min
        )


@dataclass(frozen=True)
class EdfHeader:
    version: str
    patient_id: str
    recording_id: str
    start_date: str
    start_time: str
    header_bytes: int
    reserved: str
    record_count: int
    record_duration: float
    signals: tuple[EdfSignalHeader, ...]

    @property
    def signal_count(self) -> int:
        return len(self.signals)

    @property
    def record_sample_total(self) -> int:
        return sum(s.samples_per_record for s in self.signals)


@dataclass(frozen=True)
class Event:
    """A single T0/T1/T2 annotation span."""

    label: str
    onset: float
    duration: float

    def __post_init__(self):
        if self.label not in EVENT_LABELS:
            raise EventError(f"unknown event label {self.label!r}")
        if self.onset < 0 or self.duration < 0:
            raise EventError(
                f"negative onset/duration: {self.onset}, {self.duration}"
            )

    @property
    def end(self) -> float:
        return self.onset + self.duration


@dataclass
class Recording:
    """Multi-channel physical-unit signal with events.

    `data` is channel-major, shape (n_channels, n_samples), in µV.
    """

    channels: list[str]
    fs: float
    data: np.ndarray
    events: list[Event] = field(default_factory=list)
    subject_id: int | None = None
    run_id: int | None = None

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[0] != len(self.channels):
            raise ValueError(
                f"data shape {self.data.shape} does not match "
                f"{len(self.channels)} channels"
            )
        if len(set(self.channels)) != len(self.channels):
            raise ValueError("channel names are not unique")

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration_sec(self) -> float:
        return self.n_samples / self.fs


def _ascii(data: bytes, offset: int, length: int) -> str:
    return data[offset : offset + length].decode("latin-1").strip()


def _ascii_int(data: bytes, offset: int, length: int, what: str) -> int:
    text = _ascii(data, offset, length)
    try:
        return int(text)
    except ValueError as exc:
        raise EdfParseError(f"non-integer {what}: {text!r}") from exc


def _ascii_float(data: bytes, offset: int, length: int, what: str) -> float:
    text = _ascii(data, offset, length)
    try:
        return float(text)
    except ValueError as exc:
        raise EdfParseError(f"non-numeric {what}: {text!r}") from exc


def parse_header(data: bytes) -> EdfHeader:
    """Decode the fixed and per-signal headers."""
    if len(data) < _FIXED_HEADER_BYTES:
        raise EdfParseError(f"file too short for EDF header: {len(data)} bytes")
    ns = _ascii_int(data, 252, 4, "signal count")
    if ns < 1:
        raise EdfParseError(f"signal count must be >= 1, got {ns}")
    header_bytes = _ascii_int(data, 184, 8, "header byte count")
    expected_header = _FIXED_HEADER_BYTES + ns * _SIGNAL_HEADER_BYTES
    if header_bytes != expected_header:
        raise EdfParseError(
            f"header byte count {header_bytes} != 256 + {ns}*256"
        )
    if len(data) < expected_header:
        raise EdfParseError("file truncated inside signal headers")

    record_count = _ascii_int(data, 236, 8, "record count")
    if record_count < -1 or record_count == 0:
        raise EdfParseError(f"record count must be >= 1 or -1, got {record_count}")
    record_duration = _ascii_float(data, 244, 8, "record duration")
    if record_duration <= 0:
        raise EdfParseError(f"record duration must be > 0, got {record_duration}")

    # Per-signal headers are stored field-major: ns labels, ns transducers, ...
    base = _FIXED_HEADER_BYTES

    def column(width: int) -> list[str]:
        nonlocal base
        out = [_ascii(data, base + i * width, width) for i in range(ns)]
        base += ns * width
        return out

    labels = column(16)
    transducers = column(80)
    units = column(8)
    pmin_raw, pmax_raw = column(8), column(8)
    dmin_raw, dmax_raw = column(8), column(8)
    prefilters = column(80)
    samples_raw = column(8)
    column(32)  # per-signal reserved

    signals = []
    for i in range(ns):
        try:
            pmin, pmax = float(pmin_raw[i]), float(pmax_raw[i])
            dmin, dmax = int(dmin_raw[i]), int(dmax_raw[i])
            spr = int(samples_raw[i])
        except ValueError as exc:
            raise EdfParseError(f"bad numeric field in signal {i} header") from exc
        if dmax <= dmin:
            raise EdfParseError(
                f"signal {labels[i]!r}: digital_max {dmax} <= digital_min {dmin}"
            )
        if spr < 1:
            raise EdfParseError(f"signal {labels[i]!r}: samples_per_record {spr} < 1")
        if pmax == pmin:
            raise EdfParseError(f"signal {labels[i]!r}: empty physical range")
        signals.append(
            EdfSignalHeader(
                label=labels[i],
                transducer=transducers[i],
                unit=units[i],
                physical_min=pmin,
                physical_max=pmax,
                digital_min=dmin,
                digital_max=dmax,
                prefilter=prefilters[i],
                samples_per_record=spr,
            )
        )

    annotation_count = sum(s.is_annotation for s in signals)
    if annotation_count > 1:
        raise EdfParseError(
            f"expected exactly one annotation signal, found {annotation_count}"
        )

    return EdfHeader(
        version=_ascii(data, 0, 8),
        patient_id=_ascii(data, 8, 80),
        recording_id=_ascii(data, 88, 80),
        start_date=_ascii(data, 168, 8),
        start_time=_ascii(data, 176, 8),
        header_bytes=header_bytes,
        reserved=_ascii(data, 192, 44),
        record_count=record_count,
        record_duration=record_duration,
        signals=tuple(signals),
    )


def parse_edf(data: bytes) -> tuple[EdfHeader, Recording, bytes]:
    """Decode a complete EDF/EDF+ byte stream.

    Returns the header, the Recording (events not yet extracted), and the raw
    annotation byte stream (b"" when the file has no annotation signal).
    A record count of -1 is resolved from the file size.
    """
    header = parse_header(data)
    record_bytes = 2 * header.record_sample_total
    payload = len(data) - header.header_bytes

    record_count = header.record_count
    if record_count == -1:
        if payload % record_bytes != 0:
            raise EdfParseError(
                f"payload of {payload} bytes is not a multiple of the "
                f"{record_bytes}-byte record size"
            )
        record_count = payload // record_bytes
        if record_count < 1:
            raise EdfParseError("no data records present")
        header = replace(header, record_count=record_count)
    elif payload != record_count * record_bytes:
        raise EdfParseError(
            f"expected {record_count} records of {record_bytes} bytes, "
            f"found {payload} payload bytes"
        )

    raw = np.frombuffer(
        data,
        dtype="<i2",
        count=record_count * header.record_sample_total,
        offset=header.header_bytes,
    ).reshape(record_count, header.record_sample_total)

    offsets = np.cumsum([0] + [s.samples_per_record for s in header.signals])
    channels: list[str] = []
    series: list[np.ndarray] = []
    fs: float | None = None
    annotation_stream = b""

    for i, sig in enumerate(header.signals):
        block = raw[:, offsets[i] : offsets[i + 1]]
        if sig.is_annotation:
            annotation_stream = block.tobytes()
            continue
        sig_fs = sig.samples_per_record / header.record_duration
        if fs is None:
            fs = sig_fs
        elif sig_fs != fs:
            raise EdfParseError(
                f"mixed sampling rates: {sig_fs} Hz vs {fs} Hz"
            )
        digital = block.reshape(-1).astype(np.float64)
        physical = (digital - sig.digital_min) * sig.gain + sig.physical_min
        channels.append(sig.label.strip())
        series.append(physical)

    if fs is None:
        raise EdfParseError("file contains no signal channels")

    recording = Recording(
        channels=channels, fs=fs, data=np.vstack(series), events=[]
    )
    return header, recording, annotation_stream


def extract_events(stream: bytes) -> list[Event]:
    """Decode T0/T1/T2 events from a TAL annotation byte stream.

    Timekeeping TALs (no label) are dropped; any label outside {T0, T1, T2}
    aborts with EventError, since the corpus guarantees only those codes and
    anything else signals corruption. Events are returned sorted by onset.
    """
    events: list[Event] = []
    for chunk in stream.split(b"\x00"):
        if not chunk:
            continue  # zero padding between/after TALs
        if not chunk.endswith(b"\x14"):
            raise EventError(f"TAL not terminated by 0x14: {chunk!r}")
        parts = chunk.split(b"\x14")
        time_field = parts[0]
        labels = [p for p in parts[1:-1]]
        if not time_field.startswith((b"+", b"-")):
            raise EventError(f"TAL onset missing sign: {chunk!r}")
        onset_field, _, duration_field = time_field.partition(b"\x15")
        try:
            onset = float(onset_field)
            duration = float(duration_field) if duration_field else 0.0
        except ValueError as exc:
            raise EventError(f"bad TAL time field: {time_field!r}") from exc
        for label_bytes in labels:
            if not label_bytes:
                continue  # timekeeping TAL
            label = label_bytes.decode("latin-1")
            if label not in EVENT_LABELS:
                raise EventError(
                    f"unexpected annotation label {label!r} at {onset} s "
                    f"(expected one of {EVENT_LABELS})"
                )
            events.append(Event(label=label, onset=onset, duration=duration))
    events.sort(key=lambda e: (e.onset, e.label))
    return events
