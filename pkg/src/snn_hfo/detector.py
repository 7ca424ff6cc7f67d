"""Second-layer spikes to HFO events and per-channel rates."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from .errors import InvalidDuration
from .network import SpikeRaster

WINDOW = 0.015


@dataclass(frozen=True)
class HfoEvent:
    channel: str
    start: float
    end: float
    n_spikes: int

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class ChannelRateReport:
    channel: str
    n_events: int
    analyzed_duration: float  # minutes
    rate: float               # events per minute


def _window_index(times: np.ndarray, window: float, t0: float) -> np.ndarray:
    # the ratio is rounded first so that spikes exactly on a boundary land in the later window
    return np.floor(np.round((times - t0) / window, 9)).astype(np.int64)


def _second_layer_spikes(raster) -> Tuple[np.ndarray, np.ndarray]:
    """(times, neuron ids) of second-layer spikes, deduplicated."""
    if isinstance(raster, SpikeRaster):
        m = raster.neuron < raster.n_second_layer
        pairs = np.unique(np.stack([raster.ticks[m], raster.neuron[m]]), axis=1)
        return pairs[0] * raster.tick, pairs[1]
    times = np.unique(np.asarray(raster, dtype=float))
    return times, np.zeros(times.size, np.int64)


def extract_events(raster, window: float = WINDOW, t0: float = 0.0, channel: str = "") -> List[HfoEvent]:
    """Mark fixed windows ``[t0 + k*window, t0 + (k+1)*window)`` that contain a
    second-layer spike and merge runs of marked windows into events.

    ``raster`` is a :class:`SpikeRaster` or a sequence of spike times in
    seconds. A spike repeated by the same neuron at the same time is counted
    once, so ``n_spikes`` is unaffected by duplication.
    """
    if window <= 0:
        raise ValueError("window must be positive")
    times, _ = _second_layer_spikes(raster)
    times = times[times >= t0]
    if times.size == 0:
        return []
    idx = _window_index(times, window, t0)
    marked, counts = np.unique(idx, return_counts=True)
    # a new run starts wherever the marked window index jumps by more than one
    breaks = np.flatnonzero(np.diff(marked) > 1) + 1
    starts = np.concatenate([[0], breaks])
    ends = np.concatenate([breaks, [marked.size]])
    events = []
    for s, e in zip(starts, ends):
        k0, k1 = int(marked[s]), int(marked[e - 1])
        events.append(HfoEvent(channel, t0 + k0 * window, t0 + (k1 + 1) * window, int(counts[s:e].sum())))
    return events


def drop_excluded(events: Iterable[HfoEvent], excluded: Sequence[Tuple[float, float]]) -> List[HfoEvent]:
    """Events that do not overlap any excluded interval."""
    keep = []
    for ev in events:
        if not any(ev.start < b and a < ev.end for a, b in excluded):
            keep.append(ev)
    return keep


def compute_rates(events: Mapping[str, Sequence[HfoEvent]], durations: Mapping[str, float]) -> List[ChannelRateReport]:
    """Events per minute for every channel in ``durations`` (minutes), sorted by label."""
    reports = []
    for label in sorted(durations):
        minutes = float(durations[label])
        if not minutes > 0:
            raise InvalidDuration(f"channel {label}: analyzed duration must be positive, got {minutes}")
        n = len(events.get(label, ()))
        reports.append(ChannelRateReport(label, n, minutes, n / minutes))
    return reports


def max_rate(reports: Sequence[ChannelRateReport]) -> float:
    return max((r.rate for r in reports), default=0.0)


EVENT_COLUMNS = ("patient", "phase", "channel", "start_s", "end_s", "n_spikes")
RATE_COLUMNS = ("patient", "phase", "channel", "n_events", "duration_min", "rate_per_min")


def write_events_csv(path, events: Iterable[HfoEvent], patient: str, phase: str, append: bool = False) -> Path:
    path = Path(path)
    new = not (append and path.exists())
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(EVENT_COLUMNS)
        for ev in events:
            w.writerow([patient, phase, ev.channel, f"{ev.start:.6f}", f"{ev.end:.6f}", ev.n_spikes])
    return path


def write_rates_csv(path, reports: Iterable[ChannelRateReport], patient: str, phase: str,
                    append: bool = False) -> Path:
    path = Path(path)
    new = not (append and path.exists())
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(RATE_COLUMNS)
        for r in reports:
            w.writerow([patient, phase, r.channel, r.n_events, repr(r.analyzed_duration), repr(r.rate)])
    return path


def read_rates_csv(path) -> List[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["n_events"] = int(r["n_events"])
        r["duration_min"] = float(r["duration_min"])
        r["rate_per_min"] = float(r["rate_per_min"])
    return rows
