"""Asynchronous delta modulation: signal <-> UP/DN spike trains.

The modulator is simulated on the oversampling clock with a single error
state; crossing ``+threshold`` emits UP, crossing ``-threshold`` emits DN, and
the comparator is then blocked for the refractory period. Two tracking modes
define the error:

``"input"`` (default)
    The error accumulates the sample-to-sample change of the input, is reset
    to zero on an event and held there (changes discarded) during the
    refractory period. Reconstruction drifts by whatever moved while blocked.

``"residual"``
    The error is the input minus the staircase reconstruction
    ``x[0] + threshold * (#UP - #DN)``. An event moves the reconstruction one
    step towards the input, so the error drops by one threshold. Input motion
    during the refractory period is caught up afterwards, which keeps
    :func:`decode` within ``threshold + slope * refractory`` of the input
    as long as ``slope * refractory`` does not exceed the threshold.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import List, Union

import numba
import numpy as np

from .dsp import OVERSAMPLED_RATE, check_finite

TICK = 1.0 / OVERSAMPLED_RATE
REFRACTORY = 300e-6


class Polarity(enum.IntEnum):
    UP = 1
    DN = -1


@dataclass(frozen=True)
class AdmConfig:
    threshold: float  # microvolts
    refractory: float = REFRACTORY
    tick: float = TICK
    tracking: str = "input"  # input | residual

    def __post_init__(self):
        if self.tracking not in ("residual", "input"):
            raise ValueError(f"tracking must be 'residual' or 'input', got {self.tracking!r}")
        if not self.threshold > 0:
            raise ValueError(f"threshold must be positive, got {self.threshold}")
        if not self.tick < self.refractory:
            raise ValueError("tick must be shorter than the refractory period")

    @property
    def refractory_ticks(self) -> int:
        """Ticks after an event during which the error is held at zero.

        Tracking resumes on the first tick at least one refractory period
        after the event.
        """
        return int(np.ceil(self.refractory / self.tick - 1e-9)) - 1


@dataclass(frozen=True)
class SpikeTrain:
    """Time-ordered events on the tick grid."""

    ticks: np.ndarray      # int64 tick indices
    polarity: np.ndarray   # int8, +1 UP / -1 DN
    tick: float = TICK

    def __post_init__(self):
        object.__setattr__(self, "ticks", np.asarray(self.ticks, dtype=np.int64))
        object.__setattr__(self, "polarity", np.asarray(self.polarity, dtype=np.int8))
        if self.ticks.shape != self.polarity.shape:
            raise ValueError("ticks and polarity must have the same length")

    @classmethod
    def empty(cls, tick: float = TICK) -> "SpikeTrain":
        return cls(np.empty(0, np.int64), np.empty(0, np.int8), tick)

    @classmethod
    def from_events(cls, events, tick: float = TICK) -> "SpikeTrain":
        """Build from ``(timestamp_s, polarity)`` pairs."""
        events = list(events)
        if not events:
            return cls.empty(tick)
        times = np.array([t for t, _ in events], float)
        pol = np.array([int(p) if not isinstance(p, str) else Polarity[p] for _, p in events])
        return cls(np.rint(times / tick).astype(np.int64), pol, tick)

    def __len__(self):
        return int(self.ticks.size)

    @property
    def times(self) -> np.ndarray:
        return self.ticks * self.tick

    @property
    def n_up(self) -> int:
        return int(np.count_nonzero(self.polarity > 0))

    @property
    def n_dn(self) -> int:
        return int(np.count_nonzero(self.polarity < 0))

    def up(self) -> "SpikeTrain":
        m = self.polarity > 0
        return SpikeTrain(self.ticks[m], self.polarity[m], self.tick)

    def dn(self) -> "SpikeTrain":
        m = self.polarity < 0
        return SpikeTrain(self.ticks[m], self.polarity[m], self.tick)

    def window(self, start: float, end: float) -> "SpikeTrain":
        t = self.times
        m = (t >= start) & (t < end)
        return SpikeTrain(self.ticks[m], self.polarity[m], self.tick)

    def shifted(self, n_ticks: int) -> "SpikeTrain":
        return SpikeTrain(self.ticks + n_ticks, self.polarity, self.tick)

    def events(self):
        return [(float(t), Polarity(int(p))) for t, p in zip(self.times, self.polarity)]


@numba.njit(cache=True)
def _encode_kernel(x, thr, hold_ticks, residual, out_ticks, out_pol):
    e = 0.0
    ref = x[0]
    hold = 0
    n = 0
    for k in range(1, x.size):
        if hold > 0:
            hold -= 1
            continue
        th = thr[k] if thr.size > 1 else thr[0]
        if residual:
            e = x[k] - ref
        else:
            e += x[k] - x[k - 1]
        if e > th:
            out_ticks[n] = k
            out_pol[n] = 1
            n += 1
            ref += th
            e = 0.0
            hold = hold_ticks
        elif e < -th:
            out_ticks[n] = k
            out_pol[n] = -1
            n += 1
            ref -= th
            e = 0.0
            hold = hold_ticks
    return n


def encode(signal, cfg: AdmConfig, threshold: Union[float, np.ndarray, None] = None,
           tick_offset: int = 0) -> SpikeTrain:
    """Encode a signal sampled at ``1/cfg.tick`` into an UP/DN spike train.

    ``threshold`` overrides ``cfg.threshold`` and may be a per-sample array
    (rolling baseline mode).
    """
    x = np.ascontiguousarray(signal, dtype=np.float64)
    check_finite(x)
    thr = cfg.threshold if threshold is None else threshold
    thr = np.ascontiguousarray(np.atleast_1d(thr), dtype=np.float64)
    if thr.size not in (1, x.size):
        raise ValueError("threshold array must match the signal length")
    if np.any(thr <= 0):
        raise ValueError("threshold must be positive")
    # at most one event per refractory window
    cap = x.size // (cfg.refractory_ticks + 1) + 1
    ticks = np.empty(cap, np.int64)
    pol = np.empty(cap, np.int8)
    n = _encode_kernel(x, thr, cfg.refractory_ticks, cfg.tracking == "residual", ticks, pol)
    return SpikeTrain(ticks[:n] + tick_offset, pol[:n].copy(), cfg.tick)


def decode(train: SpikeTrain, cfg: AdmConfig, initial: float = 0.0, n_samples: int | None = None,
           threshold: float | None = None) -> np.ndarray:
    """Staircase reconstruction ``initial + threshold * (#UP - #DN)``.

    Sample ``k`` includes every event with tick ``<= k``.
    """
    thr = cfg.threshold if threshold is None else threshold
    if n_samples is None:
        n_samples = int(train.ticks.max()) + 1 if len(train) else 1
    steps = np.zeros(n_samples + 1)
    np.add.at(steps, np.clip(train.ticks, 0, n_samples), train.polarity.astype(float))
    return initial + thr * np.cumsum(steps[:n_samples])


@dataclass(frozen=True)
class UpDnCycle:
    start: float
    end: float
    up_count: int
    dn_count: int


def segment_cycles(train: SpikeTrain) -> List[UpDnCycle]:
    """Greedy segmentation into maximal UP runs followed by maximal DN runs.

    Leading DN runs and a trailing UP run without a DN partner are dropped.
    """
    pol = train.polarity
    times = train.times
    cycles: List[UpDnCycle] = []
    i, n = 0, pol.size
    while i < n:
        if pol[i] < 0:
            i += 1
            continue
        s = i
        while i < n and pol[i] > 0:
            i += 1
        n_up = i - s
        if i == n:
            break
        d = i
        while i < n and pol[i] < 0:
            i += 1
        cycles.append(UpDnCycle(float(times[s]), float(times[i - 1]), n_up, i - d))
    return cycles


def write_train_csv(train: SpikeTrain, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp_s", "polarity"])
        for t, p in zip(train.times, train.polarity):
            w.writerow([f"{t:.9f}", Polarity(int(p)).name])
    return path


def read_train_csv(path, tick: float = TICK) -> SpikeTrain:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return SpikeTrain.from_events(((float(r["timestamp_s"]), r["polarity"]) for r in rows), tick)
