import hashlib
import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snn_hfo.errors import ChannelLengthMismatch, InvalidPair, RecordingFormatError, UnsupportedEncoding
from snn_hfo.recording import (ChannelSignal, MontageMap, Phase, Recording, apply_bipolar_montage,
                               load_recording, open_recording, write_recording)

from oracles import binary_checksums_oracle, read_binary_oracle


def _csv(path, rows, header="time,a,b"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return path


def _rec(data, rate=2000.0, labels=None, **kw):
    labels = labels or [f"c{i}" for i in range(len(data))]
    return Recording(rate, tuple(ChannelSignal(l, np.asarray(d, float)) for l, d in zip(labels, data)), **kw)


def test_csv_duration_from_sidecar_rate(tmp_path):
    rows = [f"{i / 2000},{i % 7},{-i % 5}" for i in range(4000)]
    path = _csv(tmp_path / "r.csv", rows)
    (tmp_path / "r.json").write_text(json.dumps({"sample_rate": 2000, "patient_id": "P1", "phase": "post"}))
    rec = load_recording(path)
    assert rec.duration == 2.0
    assert rec.labels == ["a", "b"]
    assert rec.patient_id == "P1" and rec.phase is Phase.POST


def test_csv_rate_inferred_from_time_column(tmp_path):
    path = _csv(tmp_path / "r.csv", [f"{i * 0.0005},{i},{i}" for i in range(10)])
    assert load_recording(path).sample_rate == pytest.approx(2000.0)


def test_csv_unequal_channel_lengths(tmp_path):
    path = _csv(tmp_path / "r.csv", ["0,1,2", "0.0005,1,2", "0.001,1"])
    with pytest.raises(ChannelLengthMismatch) as info:
        load_recording(path)
    assert "line" in str(info.value)


def test_csv_bad_header(tmp_path):
    path = _csv(tmp_path / "r.csv", ["0,1"], header="t,a")
    with pytest.raises(RecordingFormatError):
        load_recording(path)


def test_csv_non_numeric_sample(tmp_path):
    path = _csv(tmp_path / "r.csv", ["0,1,2", "0.0005,x,2"])
    with pytest.raises(UnsupportedEncoding) as info:
        load_recording(path)
    assert "line 3" in str(info.value)


def test_sidecar_unit_conversion(tmp_path):
    path = _csv(tmp_path / "r.csv", ["0,1,2", "0.0005,3,4"])
    (tmp_path / "r.json").write_text(json.dumps({"sample_rate": 2000, "unit": "mV"}))
    np.testing.assert_array_equal(load_recording(path).channel("a").samples, [1000.0, 3000.0])


def test_recording_rejects_unequal_channels():
    with pytest.raises(ChannelLengthMismatch):
        _rec([[1, 2, 3], [1, 2]])


def _write_bad_binary(path, payload_samples, n_ch=2, n_samp=4, magic=b"HFO1"):
    head = struct.pack("<4sIdQ", magic, n_ch, 2000.0, n_samp)
    labels = b"".join(struct.pack("<H", 1) + bytes([65 + k]) for k in range(n_ch))
    path.write_bytes(head + labels + np.zeros(payload_samples, "<f4").tobytes())
    return path


def test_binary_short_payload_is_length_mismatch(tmp_path):
    with pytest.raises(ChannelLengthMismatch) as info:
        load_recording(_write_bad_binary(tmp_path / "x.hfo", 7))
    assert "offset" in str(info.value)


def test_binary_bad_magic(tmp_path):
    with pytest.raises(RecordingFormatError):
        load_recording(_write_bad_binary(tmp_path / "x.hfo", 8, magic=b"ABCD"))


def test_binary_other_version_unsupported(tmp_path):
    with pytest.raises(UnsupportedEncoding):
        load_recording(_write_bad_binary(tmp_path / "x.hfo", 8, magic=b"HFO2"))


def test_binary_truncated_header(tmp_path):
    path = tmp_path / "x.hfo"
    path.write_bytes(b"HFO1\x01")
    with pytest.raises(RecordingFormatError):
        load_recording(path)


@pytest.fixture(scope="module")
def large_binary(tmp_path_factory):
    rng = np.random.default_rng(11)
    n = int(210 * 2000)
    data = (rng.standard_normal((32, n)) * 40).astype(np.float32)
    rec = _rec(data, labels=[f"{k + 1}-{k + 2}" for k in range(32)])
    path = tmp_path_factory.mktemp("bin") / "big.hfo"
    write_recording(rec, path, sidecar=False)
    return path


def test_large_binary_matches_byte_oracle(large_binary):
    rec = load_recording(large_binary)
    rate, labels, n_samp, digests = binary_checksums_oracle(large_binary)
    assert rec.duration == pytest.approx(210.0)
    assert rec.sample_rate == rate and rec.labels == labels and rec.n_samples == n_samp
    got = [hashlib.sha256(ch.samples.astype("<f4").tobytes()).hexdigest() for ch in rec.channels]
    assert got == digests


def test_small_binary_matches_value_oracle(tmp_path):
    rec = _rec(np.random.default_rng(2).standard_normal((3, 50)).astype(np.float32), labels=["x", "ü", "z"])
    path = write_recording(rec, tmp_path / "s.hfo", sidecar=False)
    rate, labels, chans = read_binary_oracle(path)
    back = load_recording(path)
    assert labels == back.labels == ["x", "ü", "z"]
    np.testing.assert_array_equal(back.data(), np.array(chans))


@given(st.integers(1, 5), st.integers(1, 60), st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_binary_round_trip_bit_exact(n_ch, n, seed):
    import tempfile
    from pathlib import Path
    data = np.random.default_rng(seed).standard_normal((n_ch, n)).astype(np.float32) * 1e3
    rec = _rec(data, rate=1234.5)
    with tempfile.TemporaryDirectory() as d:
        back = load_recording(write_recording(rec, Path(d) / "r.hfo"))
    assert back.sample_rate == 1234.5
    assert back.data().astype(np.float32).tobytes() == data.tobytes()


def test_csv_round_trip_preserves_metadata(tmp_path):
    rec = _rec([[0.5, 1.5, -2.0], [3.0, 4.0, 5.0]], patient_id="P3", phase="post",
               excluded_intervals={"c0": ((0.0, 0.001),)})
    back = open_recording(write_recording(rec, tmp_path / "r.csv"))
    np.testing.assert_array_equal(back.data(), rec.data())
    assert back.patient_id == "P3" and back.phase is Phase.POST
    assert back.intervals_for("c0") == [(0.0, 0.001)]


def test_montage_simple_pair():
    out = apply_bipolar_montage(_rec([[1, 2], [1, 1]], labels=["28", "29"]), [(0, 1)])
    assert out.labels == ["28-29"]
    np.testing.assert_array_equal(out.channels[0].samples, [0, 1])
    assert out.sample_rate == 2000.0


@pytest.mark.parametrize("pairs", [[(0, 0)], [(0, 4)], [(-1, 1)]])
def test_montage_invalid_pairs(pairs):
    with pytest.raises(InvalidPair):
        apply_bipolar_montage(_rec(np.zeros((4, 3))), pairs)


def test_montage_matches_bruteforce():
    rng = np.random.default_rng(5)
    data = rng.standard_normal((4, 100))
    pairs = [(0, 1), (1, 2), (3, 0)]
    out = apply_bipolar_montage(_rec(data), MontageMap(tuple(pairs)))
    for k, (a, c) in enumerate(pairs):
        expected = [data[a][i] - data[c][i] for i in range(100)]
        assert list(out.channels[k].samples) == expected


@given(st.integers(0, 2**31), st.floats(-100, 100, allow_nan=False))
@settings(max_examples=40, deadline=None)
def test_montage_linearity(seed, a):
    data = np.random.default_rng(seed).standard_normal((3, 20))
    pairs = [(0, 1), (2, 1)]
    lhs = apply_bipolar_montage(_rec(a * data), pairs).data()
    rhs = a * apply_bipolar_montage(_rec(data), pairs).data()
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-9)


def test_bipolar_channel_inherits_exclusion():
    rec = Recording(2000.0, (ChannelSignal("a", [1.0]), ChannelSignal("b", [2.0], excluded=True),
                             ChannelSignal("c", [3.0])))
    out = apply_bipolar_montage(rec, [(0, 1), (0, 2)])
    assert [ch.excluded for ch in out.channels] == [True, False]


def test_open_recording_applies_sidecar_montage_and_exclusion(tmp_path):
    path = _csv(tmp_path / "r.csv", ["0,1,5,2", "0.0005,2,5,1"], header="time,a,b,c")
    (tmp_path / "r.json").write_text(json.dumps(
        {"sample_rate": 2000, "montage": [[0, 1], [1, 2]], "excluded": ["b-c"]}))
    rec = open_recording(path)
    assert rec.labels == ["a-b", "b-c"]
    assert [ch.excluded for ch in rec.channels] == [False, True]
    np.testing.assert_array_equal(rec.channel("a-b").samples, [-4, -3])


def test_excluded_intervals_reduce_analyzed_duration():
    rec = _rec(np.zeros((2, 20000)), excluded_intervals={"*": ((1.0, 2.0),), "c1": ((1.5, 3.0), (9.5, 12.0))})
    assert rec.analyzed_duration("c0") == pytest.approx(9.0)
    assert rec.analyzed_duration("c1") == pytest.approx(10.0 - 2.0 - 0.5)


def test_segment_shifts_intervals():
    rec = _rec(np.arange(20000.0)[None, :], excluded_intervals={"c0": ((2.0, 3.0),)})
    seg = rec.segment(1.0, 4.0)
    assert seg.duration == pytest.approx(3.0)
    assert seg.channels[0].samples[0] == 2000.0
    assert seg.intervals_for("c0") == [(1.0, 2.0)]


def test_samples_are_read_only():
    rec = _rec([[1.0, 2.0]])
    with pytest.raises(ValueError):
        rec.channels[0].samples[0] = 5.0
