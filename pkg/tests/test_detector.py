import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snn_hfo.detector import (EVENT_COLUMNS, HfoEvent, compute_rates, drop_excluded, extract_events, max_rate,
                              read_rates_csv, write_events_csv, write_rates_csv)
from snn_hfo.errors import InvalidDuration
from snn_hfo.network import SpikeRaster

from oracles import mark_and_merge

W = 0.015
TICK = 1 / 35000


def _spans(events):
    return [(e.start, e.end) for e in events]


def test_two_spikes_one_window():
    ev = extract_events([0.001, 0.010])
    assert _spans(ev) == [(0.0, pytest.approx(0.015))]
    assert ev[0].n_spikes == 2


def test_adjacent_windows_merge():
    ev = extract_events([0.001, 0.020, 0.050])
    assert [(round(a, 9), round(b, 9)) for a, b in _spans(ev)] == [(0.0, 0.03), (0.045, 0.06)]


def test_empty_raster():
    assert extract_events([]) == []


def test_spike_on_boundary_belongs_to_later_window():
    assert _spans(extract_events([0.015])) == [(pytest.approx(0.015), pytest.approx(0.03))]


def test_offset_t0_drops_earlier_spikes():
    ev = extract_events([0.5, 1.004], t0=1.0)
    assert len(ev) == 1 and ev[0].start == 1.0


def _raster_from_ticks(ticks, neurons, n_sl=4):
    return SpikeRaster(np.asarray(neurons, np.int64), np.asarray(ticks, np.int64), n_sl, 1.0)


def test_raster_pools_second_layer_and_ignores_inhibitory_units():
    r = _raster_from_ticks([35, 70, 700, 2000], [0, 3, 4, 5])
    ev = extract_events(r, channel="c")
    assert len(ev) == 1 and ev[0].n_spikes == 2 and ev[0].channel == "c"


@given(st.lists(st.integers(0, 35000), max_size=60), st.integers(0, 2**31))
@settings(max_examples=1000, deadline=None)
def test_matches_mark_and_merge_oracle(ticks, seed):
    neurons = np.random.default_rng(seed).integers(0, 4, size=len(ticks))
    r = _raster_from_ticks(ticks, neurons)
    times = sorted({(t * TICK) for t in ticks})
    expected = mark_and_merge(times, W)
    got = _spans(extract_events(r))
    assert len(got) == len(expected)
    for (a, b), (c, d) in zip(got, expected):
        assert abs(a - c) < 1e-12 and abs(b - d) < 1e-12


@given(st.lists(st.integers(0, 35000), min_size=1, max_size=40), st.integers(0, 2**31))
@settings(max_examples=200, deadline=None)
def test_duplicating_spikes_changes_nothing(ticks, seed):
    rng = np.random.default_rng(seed)
    neurons = rng.integers(0, 4, size=len(ticks))
    dup = rng.integers(0, len(ticks), size=5)
    a = extract_events(_raster_from_ticks(ticks, neurons))
    b = extract_events(_raster_from_ticks(list(ticks) + [ticks[i] for i in dup],
                                          list(neurons) + [neurons[i] for i in dup]))
    assert a == b


@given(st.lists(st.floats(0, 2.0), max_size=50), st.integers(2, 6))
@settings(max_examples=200, deadline=None)
def test_event_count_non_increasing_for_nested_windows(times, m):
    # a window that is an integer multiple of another is a union of its tiles
    assert len(extract_events(times, window=m * 0.005)) <= len(extract_events(times, window=0.005))


@given(st.lists(st.floats(0, 2.0), max_size=50))
@settings(max_examples=200, deadline=None)
def test_events_are_separated_and_tiled(times):
    ev = extract_events(times)
    for e in ev:
        k = e.duration / W
        assert e.duration > 0 and abs(k - round(k)) < 1e-9
    for a, b in zip(ev, ev[1:]):
        assert b.start - a.end >= W - 1e-9


def test_drop_excluded_overlap():
    ev = [HfoEvent("c", 0.0, 0.015, 1), HfoEvent("c", 0.03, 0.06, 2), HfoEvent("c", 0.1, 0.115, 1)]
    kept = drop_excluded(ev, [(0.05, 0.1)])
    assert kept == [ev[0], ev[2]]


def test_rate_arithmetic():
    ev = {"a": [HfoEvent("a", 0, W, 1)] * 12, "b": []}
    rep = compute_rates(ev, {"b": 2.0, "a": 3.0})
    assert [r.channel for r in rep] == ["a", "b"]
    assert rep[0].rate == 4.0 and rep[1].rate == 0.0
    assert max_rate(rep) == 4.0


@pytest.mark.parametrize("d", [0.0, -1.0])
def test_rate_rejects_non_positive_duration(d):
    with pytest.raises(InvalidDuration):
        compute_rates({}, {"a": d})


@given(st.integers(0, 1000), st.floats(0.01, 100))
@settings(max_examples=50, deadline=None)
def test_rate_is_exact_division(n, minutes):
    rep = compute_rates({"x": [HfoEvent("x", 0, W, 1)] * n}, {"x": minutes})
    assert rep[0].rate == n / minutes


def test_csv_outputs(tmp_path):
    ev = [HfoEvent("c1", 0.0, 0.03, 4)]
    p = write_events_csv(tmp_path / "e.csv", ev, "P1", "pre")
    write_events_csv(p, ev, "P1", "post", append=True)
    lines = p.read_text().splitlines()
    assert lines[0] == ",".join(EVENT_COLUMNS)
    assert lines[1:] == ["P1,pre,c1,0.000000,0.030000,4", "P1,post,c1,0.000000,0.030000,4"]
    r = write_rates_csv(tmp_path / "r.csv", compute_rates({"c1": ev}, {"c1": 3.0}), "P1", "pre")
    rows = read_rates_csv(r)
    assert rows[0]["rate_per_min"] == pytest.approx(1 / 3)
    assert rows[0]["n_events"] == 1
