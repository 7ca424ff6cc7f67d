"""Multichannel ECoG recordings: loading, validation and re-referencing.

Two on-disk formats are supported:

CSV
    Header row ``time,<label1>,<label2>,...`` followed by one row per sample.
    Metadata (sample rate, patient, phase, montage, exclusions) lives in a
    sidecar JSON next to the file (``rec.csv`` -> ``rec.json``).

Binary (``.hfo``)
    Little-endian. Magic ``b"HFO1"``, ``u32`` channel count, ``f64`` sample
    rate, ``u64`` sample count, then one label block per channel (``u16``
    byte length followed by UTF-8 bytes), then channel-major ``f32`` samples
    in microvolts. The sidecar JSON is optional for binary files.
"""

from __future__ import annotations

import csv
import enum
import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (ChannelLengthMismatch, InvalidPair, RecordingFormatError,
                     UnsupportedEncoding)

MAGIC = b"HFO1"
_HEADER = struct.Struct("<4sIdQ")
_UNIT_SCALE = {"uV": 1.0, "mV": 1e3, "V": 1e6}


class Phase(enum.Enum):
    PRE = "pre"
    POST = "post"

    @classmethod
    def parse(cls, value) -> "Phase":
        if isinstance(value, Phase):
            return value
        text = str(value).strip().lower()
        aliases = {"pre": cls.PRE, "preresection": cls.PRE, "pre-resection": cls.PRE,
                   "post": cls.POST, "postresection": cls.POST, "post-resection": cls.POST}
        try:
            return aliases[text]
        except KeyError:
            raise ValueError(f"unknown phase {value!r}") from None


@dataclass(frozen=True)
class ChannelSignal:
    label: str
    samples: np.ndarray  # microvolts
    excluded: bool = False

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)


@dataclass(frozen=True)
class MontageMap:
    """Ordered (anode, cathode) index pairs into a referential recording."""

    pairs: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((int(a), int(c)) for a, c in self.pairs))

    def validate(self, n_channels: int) -> None:
        for k, (a, c) in enumerate(self.pairs):
            if a == c:
                raise InvalidPair(f"pair {k} references channel {a} twice")
            for idx in (a, c):
                if not 0 <= idx < n_channels:
                    raise InvalidPair(
                        f"pair {k} references channel {idx}, recording has {n_channels}")


def merge_intervals(intervals) -> List[Tuple[float, float]]:
    spans = sorted((float(s), float(e)) for s, e in intervals if e > s)
    merged: List[Tuple[float, float]] = []
    for s, e in spans:
        if merged and s <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], e))
        else:
            merged.append((s, e))
    return merged


@dataclass(frozen=True)
class Recording:
    sample_rate: float
    channels: Tuple[ChannelSignal, ...]
    patient_id: str = ""
    phase: Phase = Phase.PRE
    # label -> list of (start_s, end_s); the key "*" applies to every channel
    excluded_intervals: Dict[str, Tuple[Tuple[float, float], ...]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "phase", Phase.parse(self.phase))
        lengths = {len(ch.samples) for ch in self.channels}
        if len(lengths) > 1:
            raise ChannelLengthMismatch(f"channel lengths differ: {sorted(lengths)}")

    @property
    def n_samples(self) -> int:
        return len(self.channels[0].samples) if self.channels else 0

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    @property
    def labels(self) -> List[str]:
        return [ch.label for ch in self.channels]

    def channel(self, label: str) -> ChannelSignal:
        for ch in self.channels:
            if ch.label == label:
                return ch
        raise KeyError(label)

    def data(self) -> np.ndarray:
        """Samples as a (n_channels, n_samples) array."""
        return np.vstack([ch.samples for ch in self.channels]) if self.channels else np.empty((0, 0))

    def intervals_for(self, label: str) -> List[Tuple[float, float]]:
        spans = list(self.excluded_intervals.get("*", ())) + list(self.excluded_intervals.get(label, ()))
        clipped = [(max(0.0, s), min(self.duration, e)) for s, e in spans]
        return merge_intervals(clipped)

    def analyzed_duration(self, label: str) -> float:
        """Seconds of signal left after removing excluded intervals."""
        return self.duration - sum(e - s for s, e in self.intervals_for(label))

    def segment(self, start: float, end: float) -> "Recording":
        i0 = max(0, int(round(start * self.sample_rate)))
        i1 = min(self.n_samples, int(round(end * self.sample_rate)))
        chans = [replace(ch, samples=ch.samples[i0:i1]) for ch in self.channels]
        shifted = {k: tuple((s - start, e - start) for s, e in v if e > start and s < end)
                   for k, v in self.excluded_intervals.items()}
        return replace(self, channels=tuple(chans), excluded_intervals=shifted)


@dataclass
class Sidecar:
    sample_rate: Optional[float] = None
    patient_id: str = ""
    phase: Phase = Phase.PRE
    montage: Optional[MontageMap] = None
    excluded: Tuple[str, ...] = ()
    excluded_intervals: Dict[str, Tuple[Tuple[float, float], ...]] = field(default_factory=dict)
    unit: str = "uV"

    @classmethod
    def from_dict(cls, d: dict) -> "Sidecar":
        montage = d.get("montage")
        unit = d.get("unit", "uV")
        if unit not in _UNIT_SCALE:
            raise UnsupportedEncoding(f"unsupported unit {unit!r}")
        return cls(
            sample_rate=float(d["sample_rate"]) if d.get("sample_rate") is not None else None,
            patient_id=str(d.get("patient_id", "")),
            phase=Phase.parse(d.get("phase", "pre")),
            montage=MontageMap(tuple(map(tuple, montage))) if montage else None,
            excluded=tuple(d.get("excluded", ())),
            excluded_intervals={k: tuple((float(s), float(e)) for s, e in v)
                                for k, v in (d.get("excluded_intervals") or {}).items()},
            unit=unit,
        )

    def to_dict(self) -> dict:
        return {
            "sample_rate": self.sample_rate,
            "patient_id": self.patient_id,
            "phase": self.phase.value,
            "montage": [list(p) for p in self.montage.pairs] if self.montage else [],
            "excluded": list(self.excluded),
            "excluded_intervals": {k: [list(p) for p in v] for k, v in self.excluded_intervals.items()},
            "unit": self.unit,
        }


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def load_sidecar(path) -> Optional[Sidecar]:
    p = sidecar_path(path)
    if not p.exists():
        return None
    try:
        return Sidecar.from_dict(json.loads(p.read_text()))
    except (ValueError, KeyError, TypeError) as exc:
        raise RecordingFormatError(f"bad sidecar: {exc}", path=p) from exc


def detect_format(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix in (".hfo", ".bin"):
        return "binary"
    with open(path, "rb") as fh:
        if fh.read(4) == MAGIC:
            return "binary"
    return "csv"


def _read_csv(path, sidecar: Optional[Sidecar]):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise RecordingFormatError("empty file", path=path, location="line 1") from None
        header = [h.strip() for h in header]
        if len(header) < 2 or header[0].lower() != "time":
            raise RecordingFormatError("header must be 'time,<label>,...'", path=path, location="line 1")
        labels = header[1:]
        n = len(labels)
        columns: List[List[float]] = [[] for _ in range(n)]
        times: List[float] = []
        ended = [False] * n
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) > n + 1:
                raise RecordingFormatError(f"expected {n + 1} fields, got {len(row)}",
                                           path=path, location=f"line {lineno}")
            cells = row[1:] + [""] * (n + 1 - len(row))
            try:
                times.append(float(row[0]))
            except ValueError:
                raise RecordingFormatError(f"bad time value {row[0]!r}",
                                           path=path, location=f"line {lineno}") from None
            for j, cell in enumerate(cells):
                cell = cell.strip()
                if not cell:
                    ended[j] = True
                    continue
                if ended[j]:
                    raise ChannelLengthMismatch(f"channel {labels[j]!r} has a gap",
                                                path=path, location=f"line {lineno}")
                try:
                    columns[j].append(float(cell))
                except ValueError:
                    raise UnsupportedEncoding(f"non-numeric sample {cell!r} in {labels[j]!r}",
                                              path=path, location=f"line {lineno}") from None
        lengths = [len(c) for c in columns]
        if len(set(lengths)) > 1:
            short = int(np.argmin(lengths))
            raise ChannelLengthMismatch(
                f"channel {labels[short]!r} has {lengths[short]} samples, expected {max(lengths)}",
                path=path, location=f"line {lengths[short] + 2}")
    rate = sidecar.sample_rate if sidecar and sidecar.sample_rate else None
    if rate is None:
        if len(times) < 2:
            raise RecordingFormatError("cannot infer sample rate; provide a sidecar", path=path)
        dt = np.diff(times)
        if not np.allclose(dt, dt[0], rtol=1e-6, atol=1e-9) or dt[0] <= 0:
            raise RecordingFormatError("time column is not uniformly sampled", path=path)
        rate = 1.0 / float(np.mean(dt))
    return float(rate), labels, [np.asarray(c, dtype=np.float64) for c in columns]


def _read_binary(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise RecordingFormatError("truncated header", path=path, location="offset 0")
    magic, n_ch, rate, n_samp = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        if magic.startswith(b"HFO"):
            raise UnsupportedEncoding(f"unsupported format version {magic!r}", path=path, location="offset 0")
        raise RecordingFormatError(f"bad magic {magic!r}", path=path, location="offset 0")
    if not rate > 0:
        raise RecordingFormatError(f"sample rate must be positive, got {rate}", path=path, location="offset 8")
    offset = _HEADER.size
    labels = []
    for k in range(n_ch):
        if offset + 2 > len(raw):
            raise RecordingFormatError(f"truncated label block {k}", path=path, location=f"offset {offset}")
        (size,) = struct.unpack_from("<H", raw, offset)
        start = offset + 2
        if start + size > len(raw):
            raise RecordingFormatError(f"truncated label block {k}", path=path, location=f"offset {offset}")
        try:
            labels.append(raw[start:start + size].decode("utf-8"))
        except UnicodeDecodeError:
            raise UnsupportedEncoding(f"label {k} is not UTF-8", path=path, location=f"offset {start}") from None
        offset = start + size
    expected = n_ch * n_samp * 4
    remaining = len(raw) - offset
    if remaining != expected:
        # a payload that is not a whole number of channels is a length mismatch
        cls = ChannelLengthMismatch if remaining % 4 == 0 and remaining < expected else RecordingFormatError
        raise cls(f"sample block has {remaining} bytes, expected {expected}", path=path,
                  location=f"offset {offset}")
    block = np.frombuffer(raw, dtype="<f4", count=n_ch * n_samp, offset=offset).reshape(n_ch, n_samp)
    return float(rate), labels, [block[k].astype(np.float64) for k in range(n_ch)]


def load_recording(path, format: Optional[str] = None, sidecar: Optional[Sidecar] = None) -> Recording:
    """Read a referential recording; sidecar metadata is picked up automatically.

    The montage from the sidecar is *not* applied here, see
    :func:`apply_bipolar_montage` and :func:`open_recording`.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    fmt = format or detect_format(path)
    if sidecar is None:
        sidecar = load_sidecar(path)
    if fmt == "csv":
        rate, labels, columns = _read_csv(path, sidecar)
    elif fmt == "binary":
        rate, labels, columns = _read_binary(path)
        if sidecar and sidecar.sample_rate and not np.isclose(sidecar.sample_rate, rate):
            raise RecordingFormatError(
                f"sidecar sample_rate {sidecar.sample_rate} disagrees with header {rate}", path=path)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    scale = _UNIT_SCALE[sidecar.unit] if sidecar else 1.0
    excluded = set(sidecar.excluded) if sidecar else set()
    chans = tuple(ChannelSignal(lab, col * scale if scale != 1.0 else col, lab in excluded)
                  for lab, col in zip(labels, columns))
    return Recording(
        sample_rate=rate,
        channels=chans,
        patient_id=sidecar.patient_id if sidecar else path.stem,
        phase=sidecar.phase if sidecar else Phase.PRE,
        excluded_intervals=dict(sidecar.excluded_intervals) if sidecar else {},
    )


def apply_bipolar_montage(rec: Recording, montage: MontageMap | Sequence[Tuple[int, int]]) -> Recording:
    """Re-reference to bipolar pairs; channel i becomes ``anode - cathode``.

    A bipolar channel is excluded when either constituent is excluded.
    """
    if not isinstance(montage, MontageMap):
        montage = MontageMap(tuple(montage))
    montage.validate(len(rec.channels))
    out = []
    for a, c in montage.pairs:
        ca, cc = rec.channels[a], rec.channels[c]
        out.append(ChannelSignal(f"{ca.label}-{cc.label}", ca.samples - cc.samples,
                                 ca.excluded or cc.excluded))
    return replace(rec, channels=tuple(out))


def open_recording(path, format: Optional[str] = None) -> Recording:
    """Load a recording and apply its sidecar montage and channel exclusions."""
    sidecar = load_sidecar(path)
    rec = load_recording(path, format=format, sidecar=sidecar)
    if sidecar and sidecar.montage:
        rec = apply_bipolar_montage(rec, sidecar.montage)
    if sidecar and sidecar.excluded:
        names = set(sidecar.excluded)
        chans = tuple(replace(ch, excluded=ch.excluded or ch.label in names) for ch in rec.channels)
        rec = replace(rec, channels=chans)
    return rec


def write_recording(rec: Recording, path, format: Optional[str] = None, sidecar: bool = True) -> Path:
    """Serialize a recording; binary output round-trips float32 samples exactly."""
    path = Path(path)
    fmt = format or detect_format_for_write(path)
    if fmt == "binary":
        parts = [_HEADER.pack(MAGIC, len(rec.channels), float(rec.sample_rate), rec.n_samples)]
        for ch in rec.channels:
            enc = ch.label.encode("utf-8")
            parts.append(struct.pack("<H", len(enc)) + enc)
        parts.append(rec.data().astype("<f4").tobytes())
        path.write_bytes(b"".join(parts))
    elif fmt == "csv":
        data = rec.data()
        t = np.arange(rec.n_samples) / rec.sample_rate
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time"] + rec.labels)
            for i in range(rec.n_samples):
                w.writerow([repr(float(t[i]))] + [repr(float(v)) for v in data[:, i]])
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if sidecar:
        meta = Sidecar(
            sample_rate=rec.sample_rate,
            patient_id=rec.patient_id,
            phase=rec.phase,
            excluded=tuple(ch.label for ch in rec.channels if ch.excluded),
            excluded_intervals=dict(rec.excluded_intervals),
        )
        sidecar_path(path).write_text(json.dumps(meta.to_dict(), indent=2))
    return path


def detect_format_for_write(path) -> str:
    return "csv" if Path(path).suffix.lower() == ".csv" else "binary"
