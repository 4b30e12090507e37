"""Per-window features: five time-domain statistics plus two PSD peaks.

Per channel and window: mean and variance with population (1/N)
normalization; skewness and kurtosis with a mixed normalization (1/N third
and fourth central moments over an inner 1/(N-1) variance), kurtosis in the
excess convention; absolute area as the plain sum of |x|; and the peak
frequency/amplitude of a Welch power spectral density restricted to the
0.5-40 Hz band. 46 channels x 7 features = 322 columns, channel-major.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .validation import as_float_matrix, check_fitted
from .windows import LabeledWindow, MotionClass

TIME_FEATURE_NAMES = ("mean", "variance", "skewness", "kurtosis", "abs_area")
FREQ_FEATURE_NAMES = ("peak_freq", "peak_amp")
FEATURE_MODES = ("time", "frequency", "both")

PSD_BAND = (0.5, 40.0)
WELCH_SEGMENT = 256
WELCH_OVERLAP = 128

# relative floor under which a window is treated as constant
_DEGENERATE_RTOL = 1e-12


@dataclass(frozen=True)
class TimeFeatures:
    mean: float
    variance: float
    skewness: float
    kurtosis: float
    abs_area: float
    degenerate: bool = False


@dataclass(frozen=True)
class PsdFeatures:
    peak_frequency: float
    peak_amplitude: float


def moment_stats(x: np.ndarray, population: bool = False,
                 ) -> tuple[float, float, float, float, bool]:
    """(mean, population variance, skewness, excess kurtosis, degenerate).

    Default normalization is the mixed one: 1/N central moments over an
    inner 1/(N-1) variance. `population` switches the inner variance to 1/N.
    Zero-variance input yields skewness = kurtosis = 0 with the degenerate
    flag set.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    mean = x.mean()
    d = x - mean
    m2 = np.sum(d * d) / n
    if m2 == 0.0:
        return float(mean), 0.0, 0.0, 0.0, True
    m3 = np.sum(d * d * d) / n
    m4 = np.sum(d * d * d * d) / n
    inner = m2 if population else np.sum(d * d) / (n - 1)
    skew = m3 / inner**1.5
    kurt = m4 / inner**2 - 3.0
    return float(mean), float(m2), float(skew), float(kurt), False


def time_features(x: np.ndarray, population: bool = False) -> TimeFeatures:
    """Reference single-window implementation of the five time features."""
    x = np.asarray(x, dtype=np.float64)
    mean, var, skew, kurt, degenerate = moment_stats(x, population=population)
    return TimeFeatures(
        mean=mean,
        variance=var,
        skewness=skew,
        kurtosis=kurt,
        abs_area=float(np.sum(np.abs(x))),
        degenerate=degenerate,
    )


def sliding_time_features(X: np.ndarray, starts: np.ndarray, window_len: int,
                          population: bool = False) -> np.ndarray:
    """Time features for every (window, channel), via cumulative power sums.

    X is channel-major (n_channels, n_samples). Returns
    (n_windows, n_channels, 5) ordered as TIME_FEATURE_NAMES. Matches
    `time_features` per window to float rounding.
    """
    X = np.asarray(X, dtype=np.float64)
    starts = np.asarray(starts, dtype=np.int64)
    n = window_len
    # channel-demeaned power sums keep the fourth-power cumsums conditioned
    offset = X.mean(axis=1, keepdims=True)
    y = X - offset

    def padded_cumsum(a):
        c = np.empty((a.shape[0], a.shape[1] + 1))
        c[:, 0] = 0.0
        np.cumsum(a, axis=1, out=c[:, 1:])
        return c

    c1 = padded_cumsum(y)
    c2 = padded_cumsum(y * y)
    c3 = padded_cumsum(y**3)
    c4 = padded_cumsum(y**4)
    cabs = padded_cumsum(np.abs(X))

    lo, hi = starts, starts + n
    s1 = (c1[:, hi] - c1[:, lo]).T  # (n_windows, n_channels)
    s2 = (c2[:, hi] - c2[:, lo]).T
    s3 = (c3[:, hi] - c3[:, lo]).T
    s4 = (c4[:, hi] - c4[:, lo]).T
    abs_area = (cabs[:, hi] - cabs[:, lo]).T

    ybar = s1 / n
    m2_sum = np.maximum(s2 - s1 * ybar, 0.0)  # sum of squared deviations
    m3_sum = s3 - 3.0 * ybar * s2 + 2.0 * ybar**2 * s1
    m4_sum = s4 - 4.0 * ybar * s3 + 6.0 * ybar**2 * s2 - 3.0 * ybar**3 * s1

    degenerate = m2_sum <= _DEGENERATE_RTOL * np.maximum(s2, 0.0)
    inner = m2_sum / (n if population else n - 1)
    safe_inner = np.where(degenerate, 1.0, inner)
    skew = np.where(degenerate, 0.0, (m3_sum / n) / safe_inner**1.5)
    kurt = np.where(degenerate, 0.0, (m4_sum / n) / safe_inner**2 - 3.0)

    out = np.empty(s1.shape + (5,))
    out[..., 0] = ybar + offset.reshape(1, -1)
    out[..., 1] = m2_sum / n
    out[..., 2] = skew
    out[..., 3] = kurt
    out[..., 4] = abs_area
    return out


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann taper."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def welch_psd(x: np.ndarray, fs: float, segment: int = WELCH_SEGMENT,
              overlap: int = WELCH_OVERLAP) -> tuple[np.ndarray, np.ndarray]:
    """Welch one-sided PSD: averaged Hann-tapered, demeaned periodograms.

    Density scaling, so sum(psd) * df approximates the signal variance.
    Raises when the input is shorter than one segment.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected 1-D input, got shape {x.shape}")
    if segment < 2 or not 0 <= overlap < segment:
        raise ValueError(f"invalid segment/overlap: {segment}/{overlap}")
    if x.size < segment:
        raise ValueError(
            f"input of {x.size} samples is shorter than one {segment}-sample segment"
        )
    step = segment - overlap
    win = hann_window(segment)
    scale = 1.0 / (fs * np.sum(win * win))
    freqs = np.fft.rfftfreq(segment, d=1.0 / fs)
    acc = np.zeros(freqs.size)
    n_segments = (x.size - segment) // step + 1
    for j in range(n_segments):
        seg = x[j * step : j * step + segment]
        spec = np.fft.rfft(win * (seg - seg.mean()))
        acc += spec.real**2 + spec.imag**2
    psd = acc * (scale / n_segments)
    psd[1:] *= 2.0
    if segment % 2 == 0:
        psd[-1] /= 2.0  # Nyquist bin is not mirrored
    return freqs, psd


def psd_peak_features(freqs: np.ndarray, psd: np.ndarray,
                      band: tuple[float, float] = PSD_BAND) -> PsdFeatures:
    """Band-limited PSD peak; ties resolve to the lower frequency.

    An all-zero PSD in the band maps to (0 Hz, 0).
    """
    freqs = np.asarray(freqs, dtype=np.float64)
    psd = np.asarray(psd, dtype=np.float64)
    if np.any(psd < 0):
        raise ValueError("PSD must be non-negative")
    mask = (freqs >= band[0]) & (freqs <= band[1])
    if not np.any(mask):
        raise ValueError(f"no PSD bins inside band {band}")
    band_psd = psd[mask]
    peak = int(np.argmax(band_psd))  # argmax takes the first (lowest) bin on ties
    if band_psd[peak] == 0.0:
        return PsdFeatures(peak_frequency=0.0, peak_amplitude=0.0)
    return PsdFeatures(
        peak_frequency=float(freqs[mask][peak]),
        peak_amplitude=float(band_psd[peak]),
    )


def sliding_psd_features(X: np.ndarray, starts: np.ndarray, window_len: int,
                         fs: float, segment: int = WELCH_SEGMENT,
                         overlap: int = WELCH_OVERLAP,
                         band: tuple[float, float] = PSD_BAND) -> np.ndarray:
    """PSD peak features for every (window, channel).

    Shares the periodogram of each segment offset across the windows that
    contain it, which keeps stride-1 extraction tractable. Matches the
    per-window `welch_psd` + `psd_peak_features` route to float rounding.
    Returns (n_windows, n_channels, 2) ordered as FREQ_FEATURE_NAMES.
    """
    X = np.asarray(X, dtype=np.float64)
    starts = np.asarray(starts, dtype=np.int64)
    if window_len < segment:
        raise ValueError(
            f"window_len {window_len} is shorter than one {segment}-sample segment"
        )
    step = segment - overlap
    n_seg = (window_len - segment) // step + 1
    win = hann_window(segment)
    scale = 1.0 / (fs * np.sum(win * win))
    freqs = np.fft.rfftfreq(segment, d=1.0 / fs)
    mask = (freqs >= band[0]) & (freqs <= band[1])
    band_freqs = freqs[mask]
    one_sided = np.where(
        (np.arange(freqs.size) == 0)
        | ((segment % 2 == 0) & (np.arange(freqs.size) == freqs.size - 1)),
        1.0, 2.0,
    )[mask]

    n_windows, n_channels = starts.size, X.shape[0]
    out = np.empty((n_windows, n_channels, 2))
    if n_windows == 0:
        return out
    last_offset = int(starts.max()) + window_len - segment
    win_fft = np.fft.rfft(win)

    for ch in range(n_channels):
        x = X[ch]
        segs = np.lib.stride_tricks.sliding_window_view(x, segment)[: last_offset + 1]
        spec = np.fft.rfft(segs * win, axis=1)
        # demeaning a segment shifts its windowed FFT by mean * FFT(win)
        means = segs.mean(axis=1)
        spec -= means[:, None] * win_fft[None, :]
        period = (spec.real**2 + spec.imag**2)[:, mask]
        acc = period[starts]
        for j in range(1, n_seg):
            acc = acc + period[starts + j * step]
        band_psd = acc * (one_sided[None, :] * (scale / n_seg))
        peak = np.argmax(band_psd, axis=1)
        amp = band_psd[np.arange(n_windows), peak]
        freq = np.where(amp == 0.0, 0.0, band_freqs[peak])
        out[:, ch, 0] = freq
        out[:, ch, 1] = amp
    return out


def feature_names(mode: str) -> tuple[str, ...]:
    if mode == "time":
        return TIME_FEATURE_NAMES
    if mode == "frequency":
        return FREQ_FEATURE_NAMES
    if mode == "both":
        return TIME_FEATURE_NAMES + FREQ_FEATURE_NAMES
    raise ValueError(f"feature mode must be one of {FEATURE_MODES}, got {mode!r}")


def column_names(channels: Sequence[str], mode: str = "both") -> tuple[str, ...]:
    return tuple(
        f"ch.{ch}.{feat}" for ch in channels for feat in feature_names(mode)
    )


@dataclass
class FeatureMatrix:
    """Per-window feature rows with labels and trial bookkeeping."""

    X: np.ndarray                 # (n_windows, n_channels * n_features)
    labels: np.ndarray            # (n_windows,) MotionClass codes
    columns: tuple[str, ...]
    subjects: np.ndarray
    runs: np.ndarray
    starts: np.ndarray
    event_ids: np.ndarray

    @property
    def trial_keys(self) -> np.ndarray:
        return np.stack([self.subjects, self.runs, self.event_ids], axis=1)

    def __len__(self) -> int:
        return self.X.shape[0]


def assemble_feature_matrix(windows: Iterable[LabeledWindow],
                            signals: Mapping[tuple[int, int], np.ndarray],
                            channels: Sequence[str], fs: float, window_len: int,
                            mode: str = "both",
                            segment: int = WELCH_SEGMENT,
                            overlap: int = WELCH_OVERLAP,
                            population_moments: bool = False) -> FeatureMatrix:
    """Build the (windows x 322) matrix, channel-major within each row.

    Row order is lexicographic in (subject, run, start). `signals` maps
    (subject, run) to that run's cleaned channel-major array; every run must
    share the channel count and ordering of `channels`.
    """
    names = feature_names(mode)
    ordered = sorted(windows, key=lambda w: (w.subject, w.run, w.start))
    n_channels = len(channels)
    blocks: list[np.ndarray] = []
    labels: list[int] = []
    meta: list[tuple[int, int, int, int]] = []

    by_run: dict[tuple[int, int], list[LabeledWindow]] = {}
    for w in ordered:
        by_run.setdefault((w.subject, w.run), []).append(w)

    for key in sorted(by_run):
        run_windows = by_run[key]
        if key not in signals:
            raise KeyError(f"no signal provided for subject/run {key}")
        X = np.asarray(signals[key], dtype=np.float64)
        if X.shape[0] != n_channels:
            raise ValueError(
                f"run {key} has {X.shape[0]} channels, expected {n_channels}"
            )
        starts = np.array([w.start for w in run_windows], dtype=np.int64)
        parts = []
        if mode in ("time", "both"):
            parts.append(
                sliding_time_features(X, starts, window_len,
                                      population=population_moments)
            )
        if mode in ("frequency", "both"):
            parts.append(
                sliding_psd_features(X, starts, window_len, fs,
                                     segment=segment, overlap=overlap)
            )
        feats = parts[0] if len(parts) == 1 else np.concatenate(parts, axis=2)
        blocks.append(feats.reshape(len(run_windows), n_channels * len(names)))
        labels.extend(int(w.label) for w in run_windows)
        meta.extend((w.subject, w.run, w.start, w.event_index) for w in run_windows)

    if blocks:
        X_all = np.concatenate(blocks, axis=0)
    else:
        X_all = np.empty((0, n_channels * len(names)))
    if not np.all(np.isfinite(X_all)):
        raise ValueError("feature matrix contains NaN/Inf")
    meta_arr = (
        np.array(meta, dtype=np.int64) if meta else np.empty((0, 4), dtype=np.int64)
    )
    return FeatureMatrix(
        X=X_all,
        labels=np.array(labels, dtype=np.int64),
        columns=column_names(channels, mode),
        subjects=meta_arr[:, 0],
        runs=meta_arr[:, 1],
        starts=meta_arr[:, 2],
        event_ids=meta_arr[:, 3],
    )


class FeatureNormalizer(TransformerMixin, BaseEstimator):
    """Column z-scoring: z = (x - mean) / std, constant columns map to 0."""

    def __init__(self):
        self.mean_ = None
        self.scale_ = None

    def fit(self, X, y=None):
        X = as_float_matrix(X)
        if X.shape[0] < 2:
            raise ValueError(f"need at least 2 rows to fit, got {X.shape[0]}")
        self.mean_ = X.mean(axis=0)
        self.scale_ = X.std(axis=0)
        return self

    def transform(self, X):
        check_fitted(self, "mean_")
        X = as_float_matrix(X)
        if X.shape[1] != self.mean_.size:
            raise ValueError(
                f"X has {X.shape[1]} columns, normalizer was fitted on "
                f"{self.mean_.size}"
            )
        safe = np.where(self.scale_ > 0, self.scale_, 1.0)
        inv = np.where(self.scale_ > 0, 1.0 / safe, 0.0)
        return (X - self.mean_) * inv

    def to_text(self) -> str:
        check_fitted(self, "mean_")
        lines = ["column_index\tmean\tstd"]
        for i, (m, s) in enumerate(zip(self.mean_, self.scale_)):
            lines.append(f"{i}\t{float(m)!r}\t{float(s)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FeatureNormalizer":
        rows = [line.split("\t") for line in text.strip().splitlines()[1:]]
        norm = cls()
        norm.mean_ = np.array([float(r[1]) for r in rows])
        norm.scale_ = np.array([float(r[2]) for r in rows])
        return norm


def labels_to_names(labels: np.ndarray) -> list[str]:
    return [MotionClass(int(code)).name for code in labels]
