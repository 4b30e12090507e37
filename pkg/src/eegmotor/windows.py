"""Sliding-window segmentation and four-class labeling from annotations.

Default protocol: 560-sample windows (3.5 s at 160 Hz) with stride 1. Each
window takes the label of the annotation covering the majority of its
samples; rest-majority (T0) windows and exact coverage ties are dropped, so
the emitted label set matches the classifier's four classes.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .dataset import TaskClass
from .edf import Event


class MotionClass(IntEnum):
    ME_LEFT = 0
    ME_RIGHT = 1
    MI_LEFT = 2
    MI_RIGHT = 3


_CLASS_BY_TASK_AND_SIDE = {
    (TaskClass.MOTOR_EXECUTION, "T1"): MotionClass.ME_LEFT,
    (TaskClass.MOTOR_EXECUTION, "T2"): MotionClass.ME_RIGHT,
    (TaskClass.MOTOR_IMAGERY, "T1"): MotionClass.MI_LEFT,
    (TaskClass.MOTOR_IMAGERY, "T2"): MotionClass.MI_RIGHT,
}


@dataclass(frozen=True)
class WindowSpec:
    window_len: int = 560
    stride: int = 1

    def __post_init__(self):
        if self.window_len < 2:
            raise ValueError(f"window_len must be >= 2, got {self.window_len}")
        if not 1 <= self.stride <= self.window_len:
            raise ValueError(
                f"stride must be in [1, window_len], got {self.stride}"
            )

    @classmethod
    def from_seconds(cls, window_sec: float, fs: float, stride: int | None = None,
                     overlap_pct: float | None = None) -> "WindowSpec":
        """Build a spec from seconds, with stride given directly or as overlap %."""
        if stride is not None and overlap_pct is not None:
            raise ValueError("stride and overlap_pct are mutually exclusive")
        window_len = int(round(window_sec * fs))
        if overlap_pct is not None:
            if not 0 <= overlap_pct < 100:
                raise ValueError(f"overlap_pct must be in [0, 100), got {overlap_pct}")
            stride = max(1, round(window_len * (1.0 - overlap_pct / 100.0)))
        return cls(window_len=window_len, stride=stride if stride is not None else 1)


@dataclass(frozen=True)
class LabeledWindow:
    """One labeled window; (subject, run, event_index) is its trial key."""

    subject: int
    run: int
    start: int
    label: MotionClass
    event_index: int

    def view(self, signal: np.ndarray, window_len: int) -> np.ndarray:
        """Channel-major slice view of this window over a run's signal."""
        return signal[:, self.start : self.start + window_len]

    @property
    def trial_key(self) -> tuple[int, int, int]:
        return (self.subject, self.run, self.event_index)


def segment(length: int, spec: WindowSpec) -> np.ndarray:
    """Window start indices: {0, s, 2s, ...}, floor((L - W) / s) + 1 of them."""
    if length < 0:
        raise ValueError(f"length must be >= 0, got {length}")
    if length < spec.window_len:
        return np.empty(0, dtype=np.int64)
    count = (length - spec.window_len) // spec.stride + 1
    return np.arange(count, dtype=np.int64) * spec.stride


def label_windows(starts: np.ndarray, events: list[Event], task: TaskClass,
                  fs: float, window_len: int, subject: int = 0, run: int = 0,
                  ) -> tuple[list[LabeledWindow], dict[str, int]]:
    """Assign a four-class label to each window start, dropping rest and ties.

    Coverage is counted in samples against the (sorted, non-overlapping)
    event spans. The returned counters satisfy
    kept + dropped_rest + dropped_tie + dropped_uncovered == len(starts).
    """
    starts = np.asarray(starts, dtype=np.int64)
    counters = {"kept": 0, "dropped_rest": 0, "dropped_tie": 0,
                "dropped_uncovered": 0}
    if len(starts) == 0:
        return [], counters

    if not events:
        counters["dropped_uncovered"] = len(starts)
        return [], counters

    ev_start = np.array([int(round(e.onset * fs)) for e in events], dtype=np.int64)
    ev_end = np.array([int(round(e.end * fs)) for e in events], dtype=np.int64)
    ev_label = np.array([("T0", "T1", "T2").index(e.label) for e in events])

    w_start = starts[:, None]
    w_end = w_start + window_len
    # samples of window i covered by event j
    coverage = np.clip(
        np.minimum(w_end, ev_end[None, :]) - np.maximum(w_start, ev_start[None, :]),
        0, None,
    )
    label_coverage = np.zeros((len(starts), 3), dtype=np.int64)
    for code in range(3):
        cols = ev_label == code
        if np.any(cols):
            label_coverage[:, code] = coverage[:, cols].sum(axis=1)

    best = label_coverage.max(axis=1)
    majority = label_coverage.argmax(axis=1)
    tie = (label_coverage == best[:, None]).sum(axis=1) > 1

    windows: list[LabeledWindow] = []
    for i, start in enumerate(starts):
        if best[i] == 0:
            counters["dropped_uncovered"] += 1
            continue
        if tie[i]:
            counters["dropped_tie"] += 1
            continue
        if majority[i] == 0:  # rest-majority
            counters["dropped_rest"] += 1
            continue
        side = "T1" if majority[i] == 1 else "T2"
        # trial key: the majority-label event with the largest coverage
        candidate = np.where(ev_label == majority[i], coverage[i], -1)
        event_index = int(np.argmax(candidate))
        windows.append(
            LabeledWindow(
                subject=subject,
                run=run,
                start=int(start),
                label=_CLASS_BY_TASK_AND_SIDE[(task, side)],
                event_index=event_index,
            )
        )
        counters["kept"] += 1
    return windows, counters
