"""Filter design and zero-phase application, checked against an analytic
transfer-function oracle evaluated on the unit circle."""

import numpy as np
import pytest
from scipy import signal as sps

from eegmotor.filters import (BiquadCascade, FilterDesignError, FilterSpec,
                              design_filter, filter_zero_phase)

FS = 160.0


def gain_at(cascade: BiquadCascade, freq: float, fs: float = FS) -> float:
    """Oracle: |H| from the section coefficients at z = exp(j*2*pi*f/fs)."""
    z = np.exp(1j * 2 * np.pi * freq / fs)
    h = 1.0 + 0.0j
    for b0, b1, b2, a0, a1, a2 in cascade.sections:
        h *= (b0 + b1 / z + b2 / z**2) / (a0 + a1 / z + a2 / z**2)
    return abs(h)


class TestNotchDesign:
    def setup_method(self):
        self.cascade = design_filter(FilterSpec.notch(50.0, FS, q=30.0))

    def test_single_biquad(self):
        assert len(self.cascade.sections) == 1

    def test_null_at_center(self):
        assert gain_at(self.cascade, 50.0) < 1e-10

    def test_attenuation_at_least_40_db(self):
        assert -20 * np.log10(gain_at(self.cascade, 50.0) + 1e-300) >= 40.0

    def test_unit_gain_at_dc_and_nyquist(self):
        assert gain_at(self.cascade, 0.0) == pytest.approx(1.0, abs=1e-9)
        assert gain_at(self.cascade, FS / 2) == pytest.approx(1.0, abs=1e-9)

    def test_passband_nearly_untouched(self):
        assert gain_at(self.cascade, 10.0) >= 0.99


class TestBandpassDesign:
    def setup_method(self):
        self.cascade = design_filter(FilterSpec.bandpass(0.5, 40.0, FS, order=4))

    def test_passband_and_stopband(self):
        assert gain_at(self.cascade, 20.0) >= 0.9
        assert gain_at(self.cascade, 60.0) <= 0.1

    def test_stopband_attenuation_beyond_55hz(self):
        freqs = np.linspace(55.0, 79.9, 60)
        gains_db = [-20 * np.log10(gain_at(self.cascade, f) + 1e-300)
                    for f in freqs]
        assert min(gains_db) >= 20.0

    def test_sections_match_order(self):
        assert len(self.cascade.sections) == 4  # butterworth order 4 bandpass


def test_highpass_design():
    cascade = design_filter(FilterSpec.highpass(1.0, FS, order=4))
    assert gain_at(cascade, 0.01) < 1e-6
    assert gain_at(cascade, 10.0) >= 0.99


def test_all_designs_stable():
    for spec in (FilterSpec.notch(50.0, FS), FilterSpec.notch(60.0, FS),
                 FilterSpec.bandpass(0.5, 40.0, FS),
                 FilterSpec.highpass(1.0, FS)):
        cascade = design_filter(spec)
        for section in cascade.sections:
            poles = np.roots(section[3:])
            assert np.max(np.abs(poles)) < 1.0


def test_impulse_response_decays():
    for spec in (FilterSpec.notch(50.0, FS),
                 FilterSpec.bandpass(0.5, 40.0, FS)):
        cascade = design_filter(spec)
        impulse = np.zeros(8000)
        impulse[0] = 1.0
        response = sps.sosfilt(cascade.sections, impulse)
        assert np.max(np.abs(response[-100:])) < 1e-8


@pytest.mark.parametrize("make", [
    lambda: FilterSpec.bandpass(0.5, 80.0, FS),       # high edge at nyquist
    lambda: FilterSpec.bandpass(40.0, 10.0, FS),      # low >= high
    lambda: FilterSpec.bandpass(0.0, 40.0, FS),       # zero low edge
    lambda: FilterSpec.notch(80.0, FS),               # f0 at nyquist
    lambda: FilterSpec.notch(50.0, FS, q=0.0),        # bad Q
    lambda: FilterSpec.highpass(1.0, FS, order=0),    # bad order
])
def test_invalid_specs_rejected(make):
    with pytest.raises(FilterDesignError):
        make()


def test_unstable_cascade_rejected():
    with pytest.raises(FilterDesignError, match="unstable"):
        BiquadCascade(sections=np.array([[1.0, 0, 0, 1.0, -2.1, 1.05]]))


class TestZeroPhase:
    def setup_method(self):
        self.notch = design_filter(FilterSpec.notch(50.0, FS, q=30.0))
        self.band = design_filter(FilterSpec.bandpass(0.5, 40.0, FS))

    def test_zero_signal(self):
        out = filter_zero_phase(np.zeros(1000), self.notch)
        assert out.shape == (1000,)
        np.testing.assert_allclose(out, 0.0)

    def test_dc_through_notch_unchanged(self):
        x = np.full(1000, 3.7)
        np.testing.assert_allclose(filter_zero_phase(x, self.notch), x,
                                   atol=1e-9)

    def test_50hz_sine_removed(self):
        t = np.arange(int(10 * FS)) / FS
        x = np.sin(2 * np.pi * 50.0 * t)
        y = filter_zero_phase(x, self.notch)
        steady = slice(int(FS), int(9 * FS))
        rms_ratio = np.sqrt(np.mean(y[steady] ** 2) / np.mean(x[steady] ** 2))
        assert rms_ratio <= 0.01

    def test_zero_phase_lag(self):
        rng = np.random.default_rng(0)
        t = np.arange(4000) / FS
        x = np.sin(2 * np.pi * 7.0 * t) + 0.2 * rng.standard_normal(4000)
        y = filter_zero_phase(x, self.band)
        lags = sps.correlation_lags(len(x), len(y))
        corr = sps.correlate(x - x.mean(), y - y.mean())
        assert lags[np.argmax(corr)] == 0

    def test_linearity(self):
        rng = np.random.default_rng(1)
        x, y = rng.standard_normal((2, 2000))
        a, b = 2.5, -1.25
        left = filter_zero_phase(a * x + b * y, self.band)
        right = a * filter_zero_phase(x, self.band) \
            + b * filter_zero_phase(y, self.band)
        np.testing.assert_allclose(left, right, atol=1e-9)

    def test_output_length_and_multichannel(self):
        x = np.random.default_rng(2).standard_normal((3, 500))
        y = filter_zero_phase(x, self.band)
        assert y.shape == x.shape

    def test_too_short_signal(self):
        with pytest.raises(ValueError, match="too short"):
            filter_zero_phase(np.zeros(10), self.band)
