import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snn_hfo import dsp
from snn_hfo.errors import InvalidFilterSpec, NonFiniteSample, SignalTooShort

from oracles import baseline_bruteforce, biquad_recursion, butterworth_bandpass_gain, sos_response

FS = 2000.0


@pytest.fixture(scope="module")
def coeffs():
    return dsp.design_bandpass(dsp.FilterSpec(FS))


def test_dc_gain_vanishes(coeffs):
    assert abs(sos_response(coeffs.sos, 0.0, FS)) < 1e-6


@pytest.mark.parametrize("f", [250.0, 500.0])
def test_band_edges_near_half_power(coeffs, f):
    g = abs(sos_response(coeffs.sos, f, FS))
    assert g == pytest.approx(1 / math.sqrt(2), abs=0.02)


def test_centre_gain(coeffs):
    assert abs(sos_response(coeffs.sos, math.sqrt(250 * 500), FS)) >= 0.98


@pytest.mark.parametrize("f", [50.0, 200.0, 300.0, 353.6, 420.0, 600.0, 900.0])
def test_response_matches_closed_form(coeffs, f):
    assert abs(sos_response(coeffs.sos, f, FS)) == pytest.approx(
        butterworth_bandpass_gain(f, 250.0, 500.0, 2, FS), abs=1e-9)


def test_four_poles_for_design_order_two(coeffs):
    assert coeffs.poles.size == 4


@pytest.mark.parametrize("fs", [2000.0, 35000.0])
def test_poles_inside_unit_circle(fs):
    c = dsp.design_bandpass(dsp.FilterSpec(fs))
    assert np.all(np.abs(c.poles) < 1.0)


def test_band_edge_at_nyquist_rejected():
    with pytest.raises(InvalidFilterSpec):
        dsp.design_bandpass(dsp.FilterSpec(1000.0, 250.0, 500.0))


def test_zero_input_gives_zero_output(coeffs):
    assert np.array_equal(dsp.filter_signal(np.zeros(100), coeffs), np.zeros(100))


def test_impulse_response_matches_recursion(coeffs):
    x = np.zeros(200)
    x[0] = 1.0
    np.testing.assert_allclose(dsp.filter_signal(x, coeffs), biquad_recursion(coeffs.sos, x), atol=1e-12)


def test_sinusoid_steady_state(coeffs):
    t = np.arange(4000) / FS
    y = dsp.filter_signal(np.sin(2 * np.pi * 350 * t), coeffs)
    expected = abs(sos_response(coeffs.sos, 350.0, FS))
    assert np.max(np.abs(y[2000:])) == pytest.approx(expected, rel=0.03)


def test_non_finite_sample_reports_index(coeffs):
    x = np.zeros(10)
    x[7] = np.nan
    with pytest.raises(NonFiniteSample) as info:
        dsp.filter_signal(x, coeffs)
    assert info.value.index == 7


def test_oversample_constant():
    y = dsp.oversample(np.full(40, 3.5), FS)
    assert y.size == 700
    assert np.all(y == 3.5)


def test_oversample_two_samples_linear():
    y = dsp.oversample([0.0, 1.0], FS)
    # 2 samples at 2 kHz last 1 ms -> 35 output ticks
    assert y.size == 35
    k = np.arange(18)
    np.testing.assert_allclose(y[:18], k * 2000 / 35000, atol=1e-15)
    assert np.all(y[18:] == 1.0)


def test_oversample_floor_length():
    assert dsp.oversampled_length(3, FS) == 52  # floor(1.5 ms * 35 kHz) = 52.5 -> 52


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=60))
@settings(max_examples=50, deadline=None)
def test_oversample_reproduces_input_at_source_timestamps(values):
    x = np.array(values)
    y = dsp.oversample(x, FS)
    # input sample 2m sits exactly on output tick 35m
    for m in range(0, x.size, 2):
        if 35 * m // 2 < y.size:
            assert y[35 * m // 2] == x[m]


def test_oversample_empty_raises():
    with pytest.raises(ValueError):
        dsp.oversample([], FS)


def test_baseline_of_ramp_maxima():
    rate = 1000.0
    x = np.zeros(1000)
    for k in range(20):
        x[k * 50 + 10] = (k * 7 % 20) + 1  # maxima 1..20 in shuffled order
    est = dsp.estimate_baseline(x, rate)
    assert len(est.sub_window_maxima) == 20
    assert est.amplitude == pytest.approx(3.0)


def test_baseline_of_sinusoid():
    rate = 35000.0
    t = np.arange(35000) / rate
    est = dsp.estimate_baseline(2.5 * np.sin(2 * np.pi * 100 * t), rate)
    assert est.amplitude == pytest.approx(2.5, rel=0.01)


def test_baseline_matches_bruteforce():
    rng = np.random.default_rng(4)
    x = rng.standard_normal(40000)
    assert dsp.estimate_baseline(x, 35000.0, start=0.1).amplitude == pytest.approx(
        baseline_bruteforce(list(x), 35000.0, start=0.1), rel=1e-12)


def test_baseline_too_short():
    with pytest.raises(SignalTooShort):
        dsp.estimate_baseline(np.ones(100), 35000.0)


@given(st.floats(0.01, 100.0), st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_baseline_scale_and_sign(a, seed):
    x = np.random.default_rng(seed).standard_normal(2000)
    b = dsp.estimate_baseline(x, 2000.0).amplitude
    assert dsp.estimate_baseline(a * x, 2000.0).amplitude == pytest.approx(a * b, rel=1e-12)
    assert dsp.estimate_baseline(-x, 2000.0).amplitude == b


def test_rolling_thresholds_use_previous_second():
    rate = 1000.0
    x = np.concatenate([np.full(1000, 1.0), np.full(1000, 4.0), np.full(500, 9.0)])
    thr = dsp.rolling_thresholds(x, rate, fraction=0.5)
    assert thr[0] == 0.5 and thr[999] == 0.5
    assert thr[1000] == 0.5 and thr[1999] == 0.5
    assert thr[2000] == 2.0


def test_first_clean_window_skips_exclusions():
    assert dsp.first_clean_window(10.0, [(0.5, 1.2)]) == pytest.approx(1.2)
    with pytest.raises(SignalTooShort):
        dsp.first_clean_window(1.5, [(0.2, 1.0)])
