"""Preprocessing filters: 50 Hz notch, 0.5-40 Hz band-pass, 1 Hz ICA high-pass.

Designs are IIR biquad cascades (second-order sections): the notch is a
single unit-DC-gain biquad, band-pass and high-pass are Butterworth designs
obtained through the bilinear transform with frequency prewarping. All
application is zero-phase (forward-backward) so event timing is preserved.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import signal as sps


class FilterKind(Enum):
    NOTCH = "notch"
    BANDPASS = "bandpass"
    HIGHPASS = "highpass"


class FilterDesignError(ValueError):
    """Invalid critical frequencies or filter parameters."""


@dataclass(frozen=True)
class FilterSpec:
    kind: FilterKind
    fs: float
    f0: float | None = None          # notch / high-pass corner
    low: float | None = None         # band-pass edges
    high: float | None = None
    q: float = 30.0                  # notch sharpness (-3 dB width ~ f0/q)
    order: int = 4                   # Butterworth order

    def __post_init__(self):
        if self.fs <= 0:
            raise FilterDesignError(f"fs must be > 0, got {self.fs}")
        nyquist = self.fs / 2.0
        if self.kind in (FilterKind.NOTCH, FilterKind.HIGHPASS):
            if self.f0 is None or not 0 < self.f0 < nyquist:
                raise FilterDesignError(
                    f"{self.kind.value} frequency must lie in (0, {nyquist}), "
                    f"got {self.f0}"
                )
        if self.kind == FilterKind.NOTCH and self.q <= 0:
            raise FilterDesignError(f"notch Q must be > 0, got {self.q}")
        if self.kind == FilterKind.BANDPASS:
            if self.low is None or self.high is None:
                raise FilterDesignError("band-pass needs both low and high")
            if not 0 < self.low < self.high:
                raise FilterDesignError(
                    f"band edges must satisfy 0 < low < high, got "
                    f"({self.low}, {self.high})"
                )
            if self.high >= nyquist:
                raise FilterDesignError(
                    f"band-pass high edge {self.high} >= Nyquist {nyquist}"
                )
        if self.kind in (FilterKind.BANDPASS, FilterKind.HIGHPASS) and self.order < 1:
            raise FilterDesignError(f"order must be >= 1, got {self.order}")

    @classmethod
    def notch(cls, f0: float, fs: float, q: float = 30.0) -> "FilterSpec":
        return cls(kind=FilterKind.NOTCH, fs=fs, f0=f0, q=q)

    @classmethod
    def bandpass(cls, low: float, high: float, fs: float, order: int = 4) -> "FilterSpec":
        return cls(kind=FilterKind.BANDPASS, fs=fs, low=low, high=high, order=order)

    @classmethod
    def highpass(cls, f0: float, fs: float, order: int = 4) -> "FilterSpec":
        return cls(kind=FilterKind.HIGHPASS, fs=fs, f0=f0, order=order)


@dataclass(frozen=True)
class BiquadCascade:
    """Ordered second-order sections, scipy sos layout (b0 b1 b2 a0 a1 a2)."""

    sections: np.ndarray

    def __post_init__(self):
        sos = np.asarray(self.sections, dtype=np.float64)
        if sos.ndim != 2 or sos.shape[1] != 6:
            raise ValueError(f"sections must have shape (n, 6), got {sos.shape}")
        object.__setattr__(self, "sections", sos)
        for i, section in enumerate(sos):
            poles = np.roots(section[3:])
            if poles.size and np.max(np.abs(poles)) >= 1.0:
                raise FilterDesignError(
                    f"section {i} is unstable (|pole| = {np.max(np.abs(poles)):.6f})"
                )

    @property
    def order(self) -> int:
        return 2 * len(self.sections)


def design_filter(spec: FilterSpec) -> BiquadCascade:
    """Design the biquad cascade for a validated FilterSpec."""
    if spec.kind == FilterKind.NOTCH:
        b, a = sps.iirnotch(spec.f0, spec.q, fs=spec.fs)
        sos = sps.tf2sos(b, a)
    elif spec.kind == FilterKind.BANDPASS:
        sos = sps.butter(
            spec.order, [spec.low, spec.high], btype="bandpass",
            output="sos", fs=spec.fs,
        )
    elif spec.kind == FilterKind.HIGHPASS:
        sos = sps.butter(
            spec.order, spec.f0, btype="highpass", output="sos", fs=spec.fs
        )
    else:  # pragma: no cover - enum is closed
        raise FilterDesignError(f"unknown filter kind {spec.kind}")
    return BiquadCascade(sections=sos)


def filter_zero_phase(x: np.ndarray, cascade: BiquadCascade) -> np.ndarray:
    """Forward-backward filtering along the last axis.

    Zero net phase, output length equals input length; the signal is extended
    by reflection over 3x the cascade order before filtering so edges stay
    usable. Requires len(x) > 3 * order.
    """
    x = np.asarray(x, dtype=np.float64)
    padlen = 3 * cascade.order
    if x.shape[-1] <= padlen:
        raise ValueError(
            f"signal length {x.shape[-1]} too short for zero-phase filtering "
            f"(needs > {padlen} samples)"
        )
    return sps.sosfiltfilt(cascade.sections, x, axis=-1, padtype="even", padlen=padlen)
