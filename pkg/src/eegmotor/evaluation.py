"""Splitting, confusion-matrix metrics, per-subject harness, window sweep.

The window-random split mirrors the original protocol (which, with stride-1
windows, leaks neighboring windows across the split); the trial-wise split
keeps every window of a trial on one side and gives the honest number. Both
are reported.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .validation import as_label_vector
from .windows import MotionClass


class SplitMode(Enum):
    WINDOW_RANDOM = "window-random"
    TRIAL_WISE = "trial-wise"


@dataclass(frozen=True)
class SplitSpec:
    ratio: float = 0.8
    mode: SplitMode = SplitMode.WINDOW_RANDOM
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.ratio < 1:
            raise ValueError(f"ratio must be in (0, 1), got {self.ratio}")


def split_dataset(n_rows: int, spec: SplitSpec, trial_keys: np.ndarray | None = None,
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint, exhaustive (train, eval) row indices.

    WINDOW_RANDOM: seeded shuffle, first ratio*N rows train. TRIAL_WISE:
    whole trials (rows sharing a trial key) land on one side; trials are
    accumulated in seeded-shuffled order until the train side reaches the
    ratio.
    """
    if n_rows < 2:
        raise ValueError(f"need at least 2 rows to split, got {n_rows}")
    rng = np.random.default_rng(spec.seed)
    if spec.mode == SplitMode.WINDOW_RANDOM:
        order = rng.permutation(n_rows)
        n_train = int(spec.ratio * n_rows)
        n_train = min(max(n_train, 1), n_rows - 1)
        return np.sort(order[:n_train]), np.sort(order[n_train:])

    if trial_keys is None:
        raise ValueError("trial-wise split requires trial keys")
    trial_keys = np.asarray(trial_keys)
    if trial_keys.shape[0] != n_rows:
        raise ValueError("one trial key per row required")
    keys_view = np.ascontiguousarray(trial_keys).view(
        [("", trial_keys.dtype)] * trial_keys.shape[1]
    ).ravel()
    unique_keys, inverse = np.unique(keys_view, return_inverse=True)
    n_trials = len(unique_keys)
    if n_trials < 2:
        raise ValueError(
            f"trial-wise split needs at least 2 trials, got {n_trials}"
        )
    trial_order = rng.permutation(n_trials)
    counts = np.bincount(inverse, minlength=n_trials)
    target = spec.ratio * n_rows
    train_trials = []
    running = 0
    for t in trial_order:
        if running >= target:
            break
        train_trials.append(t)
        running += counts[t]
    if len(train_trials) == n_trials:  # keep the eval side non-empty
        train_trials.pop()
    train_mask = np.isin(inverse, train_trials)
    return np.flatnonzero(train_mask), np.flatnonzero(~train_mask)


@dataclass
class MetricsReport:
    """Per-class one-vs-rest precision/recall/F1 with supports and accuracy."""

    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    accuracy: float
    unpredicted_classes: list[int] = field(default_factory=list)

    @property
    def n_classes(self) -> int:
        return len(self.precision)


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def confusion_and_metrics(y_true, y_pred, n_classes: int = 4,
                          ) -> tuple[np.ndarray, MetricsReport]:
    """Confusion matrix (rows true, columns predicted) and derived metrics.

    Classes never predicted get precision 0 and are listed in
    `unpredicted_classes`.
    """
    y_true = as_label_vector(y_true, n_classes, "y_true")
    y_pred = as_label_vector(y_pred, n_classes, "y_pred")
    if len(y_true) != len(y_pred):
        raise ValueError(
            f"length mismatch: {len(y_true)} true vs {len(y_pred)} predicted"
        )
    matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(matrix, (y_true, y_pred), 1)

    support = matrix.sum(axis=1)
    predicted = matrix.sum(axis=0)
    diag = np.diag(matrix).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(predicted > 0, diag / predicted, 0.0)
        recall = np.where(support > 0, diag / support, 0.0)
    f1 = np.array([f1_score(p, r) for p, r in zip(precision, recall)])
    total = matrix.sum()
    report = MetricsReport(
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
        accuracy=float(diag.sum() / total) if total else 0.0,
        unpredicted_classes=[int(c) for c in np.flatnonzero(predicted == 0)],
    )
    return matrix, report


def class_names() -> list[str]:
    return [c.name for c in MotionClass]


@dataclass
class SubjectResult:
    subject: int
    train_accuracy: float
    eval_accuracy: float
    trialwise_accuracy: float
    report: MetricsReport | None
    error: str | None = None


@dataclass
class SweepRow:
    window_sec: float
    overlap_pct: float
    stride: int
    train_accuracy: float
    eval_accuracy: float
    n_windows: int
    wall_time_sec: float


def subject_seed(global_seed: int, subject_id: int) -> int:
    """Stable per-subject seed decorrelated from the global one."""
    return int(
        np.random.SeedSequence([int(global_seed), int(subject_id)])
        .generate_state(1)[0]
    )


def intra_subject_evaluate(subjects, config) -> tuple[list[SubjectResult], dict]:
    """Run the full per-subject pipeline for each subject independently.

    Failures are captured per subject without aborting the rest. Returns the
    per-subject results plus aggregate mean/std of the window-random eval
    accuracy over the subjects that completed.
    """
    from . import pipeline  # runtime import; pipeline builds on this module

    subjects = list(subjects)
    if not subjects:
        raise ValueError("subject list is empty")
    results: list[SubjectResult] = []
    for sid in subjects:
        sub_config = replace(
            config, subjects=(int(sid),), seed=subject_seed(config.seed, sid)
        )
        try:
            outcome = pipeline.run_subject(sub_config, int(sid))
            results.append(
                SubjectResult(
                    subject=int(sid),
                    train_accuracy=outcome.train_accuracy,
                    eval_accuracy=outcome.eval_accuracy,
                    trialwise_accuracy=outcome.trialwise_accuracy,
                    report=outcome.report,
                )
            )
        except Exception as exc:  # keep other subjects running
            results.append(
                SubjectResult(
                    subject=int(sid),
                    train_accuracy=float("nan"),
                    eval_accuracy=float("nan"),
                    trialwise_accuracy=float("nan"),
                    report=None,
                    error=f"{type(exc).__name__}: {exc}",
                )
            )
    finished = [r.eval_accuracy for r in results if r.error is None]
    aggregate = {
        "n_completed": len(finished),
        "mean_accuracy": float(np.mean(finished)) if finished else float("nan"),
        "std_accuracy": float(np.std(finished)) if finished else float("nan"),
    }
    return results, aggregate


DEFAULT_SWEEP = (
    (0.5, 90.0), (1.0, 75.0), (1.0, 90.0), (2.0, 75.0), (2.0, 90.0),
    (2.5, 75.0), (2.5, 90.0), (3.5, 50.0), (3.5, 99.0), (4.0, 90.0),
)


def window_sweep(configs, subject: int, base_config) -> list[SweepRow]:
    """Train/evaluate once per (window seconds, overlap %) configuration."""
    from . import pipeline

    rows: list[SweepRow] = []
    for i, (window_sec, overlap_pct) in enumerate(configs):
        if not 0 <= overlap_pct < 100:
            raise ValueError(
                f"overlap must be in [0, 100)%, got {overlap_pct}"
            )
        cfg = replace(
            base_config,
            subjects=(subject,),
            window=replace(base_config.window, window_sec=window_sec,
                           stride=None, overlap_pct=overlap_pct),
            seed=subject_seed(base_config.seed, 1000 + i),
        )
        start = time.perf_counter()
        outcome = pipeline.run_subject(cfg, subject)
        elapsed = time.perf_counter() - start
        rows.append(
            SweepRow(
                window_sec=window_sec,
                overlap_pct=overlap_pct,
                stride=outcome.window_spec.stride,
                train_accuracy=outcome.train_accuracy,
                eval_accuracy=outcome.eval_accuracy,
                n_windows=outcome.n_windows,
                wall_time_sec=elapsed,
            )
        )
    return rows
