"""Band-pass filtering, oversampling and baseline estimation.

The fast-ripple band filter is a Butterworth design realized as cascaded
biquads (second-order sections). Filtering is causal: one forward pass from a
zero initial state.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import List

import numpy as np
from scipy import signal

from .errors import InvalidFilterSpec, NonFiniteSample, SignalTooShort

OVERSAMPLED_RATE = 35_000


@dataclass(frozen=True)
class FilterSpec:
    sample_rate: float
    low_cut: float = 250.0
    high_cut: float = 500.0
    # Butterworth design order per band edge; a band-pass has 2*order poles
    design_order: int = 2

    def validate(self):
        if self.design_order < 1:
            raise InvalidFilterSpec(f"design order must be >= 1, got {self.design_order}")
        nyq = self.sample_rate / 2
        if not 0 < self.low_cut < self.high_cut:
            raise InvalidFilterSpec(f"need 0 < low_cut < high_cut, got {self.low_cut}, {self.high_cut}")
        if self.high_cut >= nyq:
            raise InvalidFilterSpec(f"band edge {self.high_cut} Hz at or above Nyquist ({nyq} Hz)")


@dataclass(frozen=True)
class FilterCoefficients:
    sos: np.ndarray  # (n_sections, 6): b0 b1 b2 a0 a1 a2
    sample_rate: float

    @property
    def poles(self) -> np.ndarray:
        return np.concatenate([np.roots(sec[3:]) for sec in self.sos])

    def response(self, freqs) -> np.ndarray:
        _, h = signal.sosfreqz(self.sos, worN=np.atleast_1d(np.asarray(freqs, float)), fs=self.sample_rate)
        return h


def design_bandpass(spec: FilterSpec) -> FilterCoefficients:
    spec.validate()
    sos = signal.butter(spec.design_order, [spec.low_cut, spec.high_cut], btype="bandpass",
                        fs=spec.sample_rate, output="sos")
    return FilterCoefficients(np.ascontiguousarray(sos), float(spec.sample_rate))


def check_finite(samples: np.ndarray) -> None:
    bad = np.flatnonzero(~np.isfinite(samples))
    if bad.size:
        raise NonFiniteSample(int(bad[0]))


def filter_signal(samples, coeffs: FilterCoefficients) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    check_finite(x)
    return signal.sosfilt(coeffs.sos, x)


def _as_fraction(rate) -> Fraction:
    return Fraction(rate).limit_denominator(1_000_000)


def oversampled_length(n_in: int, rate_in: float, rate_out: float = OVERSAMPLED_RATE) -> int:
    """floor(duration * rate_out) with duration = n_in / rate_in, computed exactly."""
    return int(n_in * _as_fraction(rate_out) // _as_fraction(rate_in))


def oversample(samples, rate_in: float, rate_out: float = OVERSAMPLED_RATE) -> np.ndarray:
    """Linear interpolation onto the grid k / rate_out.

    Output timestamps are exact rationals, so every output tick that coincides
    with an input timestamp returns that input sample bit-exactly. Ticks after
    the last input sample hold its value.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot oversample an empty signal")
    fin, fout = _as_fraction(rate_in), _as_fraction(rate_out)
    n_out = int(x.size * fout // fin)
    # position of tick k in input samples is k * fin / fout = k * p / q
    ratio = fin / fout
    p, q = ratio.numerator, ratio.denominator
    k = np.arange(n_out, dtype=np.int64)
    num = k * p
    idx = num // q
    frac = (num % q) / q
    nxt = np.minimum(idx + 1, x.size - 1)
    idx = np.minimum(idx, x.size - 1)
    lo = x[idx]
    return lo + frac * (x[nxt] - lo)


@dataclass(frozen=True)
class BaselineEstimate:
    amplitude: float
    window_start: float
    sub_window_maxima: tuple


def estimate_baseline(filtered, rate: float = OVERSAMPLED_RATE, window: float = 1.0,
                      sub_window: float = 0.050, start: float = 0.0) -> BaselineEstimate:
    """Mean of the lowest quartile of per-sub-window absolute maxima."""
    x = np.asarray(filtered, dtype=np.float64)
    i0 = int(round(start * rate))
    n_win = int(round(window * rate))
    n_sub = int(round(sub_window * rate))
    n_parts = n_win // n_sub
    if x.size - i0 < n_win or n_parts < 1:
        raise SignalTooShort(f"need {window} s of signal from t={start}, have {(x.size - i0) / rate:.4f} s")
    maxima = np.abs(x[i0:i0 + n_parts * n_sub]).reshape(n_parts, n_sub).max(axis=1)
    maxima.sort()
    n_low = max(1, n_parts // 4)
    return BaselineEstimate(float(maxima[:n_low].mean()), float(start), tuple(float(m) for m in maxima))


def first_clean_window(duration: float, excluded, window: float = 1.0, step: float = 0.05) -> float:
    """Start time of the first window that does not overlap an excluded interval."""
    t = 0.0
    spans = sorted(excluded)
    while t + window <= duration + 1e-12:
        hit = [e for s, e in spans if s < t + window and e > t]
        if not hit:
            return t
        # jump past the offending interval, aligned to the step grid
        t = max(t + step, np.ceil(max(hit) / step) * step)
    raise SignalTooShort(f"no artifact-free {window} s window in {duration:.3f} s")


def rolling_thresholds(filtered, rate: float = OVERSAMPLED_RATE, window: float = 1.0,
                       sub_window: float = 0.050, fraction: float = 0.5) -> np.ndarray:
    """Per-sample threshold: each second uses the baseline of the previous one.

    The first window uses its own baseline since nothing precedes it.
    """
    x = np.asarray(filtered, dtype=np.float64)
    n_win = int(round(window * rate))
    n_full = x.size // n_win
    if n_full < 1:
        raise SignalTooShort(f"need {window} s of signal for a rolling baseline")
    base: List[float] = [estimate_baseline(x, rate, window, sub_window, start=w * window).amplitude
                         for w in range(n_full)]
    per_window = [base[0]] + base[:-1]
    out = np.empty(x.size)
    for w in range(n_full):
        out[w * n_win:(w + 1) * n_win] = fraction * per_window[w]
    out[n_full * n_win:] = fraction * base[-1]
    return out
