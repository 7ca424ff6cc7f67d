"""Per-channel signal path: filter, oversample, baseline, encode, simulate."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import dsp
from .adm import AdmConfig, SpikeTrain, encode
from .detector import HfoEvent, drop_excluded, extract_events
from .network import Network, SpikeRaster

THRESHOLD_FRACTION = 0.5


@dataclass(frozen=True)
class FrontendConfig:
    low_hz: float = 250.0
    high_hz: float = 500.0
    order: int = 2
    baseline_mode: str = "static"     # static | rolling
    baseline_window: float = 1.0
    baseline_subwindow: float = 0.050
    threshold_fraction: float = THRESHOLD_FRACTION
    filter_stage: str = "before"      # filter before or after oversampling
    refractory: float = 300e-6
    adm_tracking: str = "input"       # input | residual

    def __post_init__(self):
        if self.baseline_mode not in ("static", "rolling"):
            raise ValueError(f"baseline mode must be static or rolling, got {self.baseline_mode!r}")
        if self.filter_stage not in ("before", "after"):
            raise ValueError(f"filter stage must be before or after, got {self.filter_stage!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "FrontendConfig":
        f = d.get("filter", {})
        b = d.get("baseline", {})
        return cls(
            low_hz=float(f.get("low_hz", 250.0)),
            high_hz=float(f.get("high_hz", 500.0)),
            order=int(f.get("order", 2)),
            filter_stage=f.get("stage", "before"),
            baseline_mode=b.get("mode", "static"),
            baseline_window=float(b.get("window_s", 1.0)),
            baseline_subwindow=float(b.get("subwindow_ms", 50.0)) / 1000.0,
            adm_tracking=d.get("adm", {}).get("tracking", "input"),
        )

    def to_dict(self) -> dict:
        return {
            "filter": {"low_hz": self.low_hz, "high_hz": self.high_hz, "order": self.order,
                       "stage": self.filter_stage},
            "baseline": {"mode": self.baseline_mode, "window_s": self.baseline_window,
                         "subwindow_ms": self.baseline_subwindow * 1000.0},
            "adm": {"tracking": self.adm_tracking},
        }


@dataclass
class EncodedChannel:
    train: SpikeTrain
    filtered: np.ndarray        # band-passed signal at the oversampled rate
    threshold: np.ndarray       # scalar (static) or per-tick (rolling)
    baseline: Optional[dsp.BaselineEstimate] = None


def bandpass_oversampled(samples, rate: float, cfg: FrontendConfig) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    dsp.check_finite(x)
    if cfg.filter_stage == "before":
        coeffs = dsp.design_bandpass(dsp.FilterSpec(rate, cfg.low_hz, cfg.high_hz, cfg.order))
        return dsp.oversample(dsp.filter_signal(x, coeffs), rate)
    up = dsp.oversample(x, rate)
    coeffs = dsp.design_bandpass(dsp.FilterSpec(dsp.OVERSAMPLED_RATE, cfg.low_hz, cfg.high_hz, cfg.order))
    return dsp.filter_signal(up, coeffs)


def encode_channel(samples, rate: float, cfg: FrontendConfig = FrontendConfig(),
                   excluded: Sequence[Tuple[float, float]] = (), start: float = 0.0) -> EncodedChannel:
    """Front end for one channel; spike ticks are relative to t=0 of ``samples``.

    ``start`` drops events before that time (used for warm-up trimming).
    """
    fs = dsp.OVERSAMPLED_RATE
    y = bandpass_oversampled(samples, rate, cfg)
    adm = AdmConfig(threshold=1.0, refractory=cfg.refractory, tracking=cfg.adm_tracking)
    if cfg.baseline_mode == "static":
        t0 = dsp.first_clean_window(len(y) / fs, excluded, cfg.baseline_window)
        base = dsp.estimate_baseline(y, fs, cfg.baseline_window, cfg.baseline_subwindow, start=t0)
        thr = np.array([cfg.threshold_fraction * base.amplitude])
    else:
        base = None
        thr = dsp.rolling_thresholds(y, fs, cfg.baseline_window, cfg.baseline_subwindow,
                                     cfg.threshold_fraction)
    i0 = int(round(start * fs))
    seg_thr = thr if thr.size == 1 else thr[i0:]
    train = encode(y[i0:], adm, threshold=seg_thr, tick_offset=i0)
    return EncodedChannel(train, y, thr, base)


def simulate_channel(network: Network, train: SpikeTrain, duration: float, seed: Optional[int] = None,
                     record: bool = False) -> SpikeRaster:
    return network.run(train.up(), train.dn(), duration, seed=seed, record=record)


@dataclass
class ChannelDetection:
    label: str
    events: List[HfoEvent]
    analyzed_duration: float    # seconds, excluded intervals removed
    n_input_spikes: int
    n_output_spikes: int


def detect_channel(samples, rate: float, label: str, network: Network,
                   cfg: FrontendConfig = FrontendConfig(),
                   excluded: Sequence[Tuple[float, float]] = (),
                   seed: Optional[int] = None) -> ChannelDetection:
    """Full chain for one channel: front end, network, windowing, exclusion."""
    duration = len(samples) / rate
    enc = encode_channel(samples, rate, cfg, excluded)
    raster = simulate_channel(network, enc.train, duration, seed=seed)
    events = drop_excluded(extract_events(raster, channel=label), excluded)
    analyzed = duration - sum(min(e, duration) - max(s, 0.0) for s, e in excluded if e > s)
    n_out = int(np.count_nonzero(raster.neuron < raster.n_second_layer))
    return ChannelDetection(label, events, analyzed, len(enc.train), n_out)
