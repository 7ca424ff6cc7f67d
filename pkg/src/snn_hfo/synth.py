"""Labeled synthetic fast-ripple events for calibration and acceptance tests.

Every snippet is a 50 ms container at 2 kHz embedded at the end of a longer
stretch of the same pink background (the *preroll*), so the front end can
estimate a baseline from a clean second before the event, exactly as it would
on a real recording.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .errors import EmptyCorpus

FS = 2000.0
CONTAINER = 0.050
PREROLL = 1.0
NOISE_UV = 1.5  # RMS of the background inside the fast-ripple band

HFO_MEDIAN_DURATION = 0.024
HFO_MIN_DURATION = 0.009
HFO_MEDIAN_FREQ = 1.0 / 2.6e-3
TRANSIENT_MEDIAN_CYCLE = 3.2e-3


class Kind(enum.Enum):
    HFO = "hfo"
    TRANSIENT = "transient"
    NOISE = "noise"


@dataclass(frozen=True)
class SnippetSpec:
    kind: Kind
    seed: int
    duration: float = CONTAINER
    hfo_freq: float = 350.0
    hfo_duration: float = HFO_MEDIAN_DURATION
    amplitude_snr: float = 4.0
    onset: Optional[float] = None   # event start inside the container; None centres it
    transient_width: float = TRANSIENT_MEDIAN_CYCLE
    noise_uv: float = NOISE_UV
    preroll: float = PREROLL

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.kind is Kind.HFO:
            if self.hfo_duration < HFO_MIN_DURATION - 1e-12:
                raise ValueError(f"HFO duration {self.hfo_duration} s below the 9 ms minimum")
            if not 250.0 <= self.hfo_freq <= 500.0:
                raise ValueError(f"HFO frequency {self.hfo_freq} Hz outside the fast-ripple band")
        if self.kind is Kind.TRANSIENT and not 2e-3 <= self.transient_width <= 5e-3:
            raise ValueError(f"transient width {self.transient_width} s outside [2, 5] ms")

    @property
    def event_duration(self) -> float:
        if self.kind is Kind.HFO:
            return self.hfo_duration
        if self.kind is Kind.TRANSIENT:
            return self.transient_width
        return 0.0

    @property
    def event_onset(self) -> float:
        if self.onset is not None:
            return self.onset
        return max(0.0, (self.duration - self.event_duration) / 2)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d


@dataclass
class Snippet:
    spec: SnippetSpec
    samples: np.ndarray   # container, microvolts at FS
    preroll: np.ndarray   # background immediately preceding the container
    event: np.ndarray     # clean event waveform on the container grid
    sample_rate: float = FS

    @property
    def label(self) -> Kind:
        return self.spec.kind

    @property
    def context(self) -> np.ndarray:
        """Preroll followed by the container, as one continuous signal."""
        return np.concatenate([self.preroll, self.samples])

    @property
    def event_interval(self):
        """(start, end) of the labeled event in container time."""
        s = self.spec.event_onset
        return s, s + self.spec.event_duration


def pink_noise(n: int, rng: np.random.Generator, fs: float = FS, band=(250.0, 500.0),
               band_rms: float = NOISE_UV) -> np.ndarray:
    """1/f noise scaled so its power inside ``band`` has RMS ``band_rms``."""
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    f = np.fft.rfftfreq(n, 1.0 / fs)
    shape = np.zeros_like(f)
    shape[1:] = 1.0 / np.sqrt(f[1:])
    spec *= shape
    x = np.fft.irfft(spec, n)
    inband = np.fft.irfft(np.where((f >= band[0]) & (f <= band[1]), spec, 0), n)
    return x * (band_rms / inband.std())


def hfo_waveform(t: np.ndarray, onset: float, duration: float, freq: float, amplitude: float,
                 phase: float) -> np.ndarray:
    """Hann-windowed sinusoid occupying [onset, onset + duration)."""
    u = (t - onset) / duration
    env = np.where((u >= 0) & (u < 1), np.sin(np.pi * np.clip(u, 0, 1)) ** 2, 0.0)
    return amplitude * env * np.sin(2 * np.pi * freq * (t - onset) + phase)


def transient_waveform(t: np.ndarray, onset: float, width: float, amplitude: float,
                       sign: float = 1.0) -> np.ndarray:
    """Biphasic sharp deflection: two opposite lobes with fast exponential rise.

    Each lobe spans half of ``width``; the rise constant is a tenth of the
    lobe and the decay a quarter, so the deflection is back near zero a few
    lobe-widths after onset.
    """
    lobe = width / 2

    def pulse(tt):
        tt = np.maximum(tt, 0.0)
        p = (1 - np.exp(-tt / (0.1 * lobe))) * np.exp(-tt / (0.25 * lobe))
        return np.where(tt > 0, p, 0.0)

    shape = pulse(t - onset) - 0.8 * pulse(t - onset - lobe)
    peak = np.max(np.abs(pulse(np.linspace(0, lobe, 200))))
    return sign * amplitude * shape / peak


def generate_snippet(spec: SnippetSpec) -> Snippet:
    """Deterministic snippet for ``spec``; the label is ``spec.kind``."""
    rng = np.random.default_rng(spec.seed)
    n_pre = int(round(spec.preroll * FS))
    n_box = int(round(spec.duration * FS))
    noise = pink_noise(n_pre + n_box, rng, band_rms=spec.noise_uv)
    t = np.arange(n_box) / FS
    phase = rng.uniform(0, 2 * np.pi)
    sign = 1.0 if rng.random() < 0.5 else -1.0
    if spec.kind is Kind.HFO:
        event = hfo_waveform(t, spec.event_onset, spec.hfo_duration, spec.hfo_freq,
                             spec.amplitude_snr * spec.noise_uv, phase)
    elif spec.kind is Kind.TRANSIENT:
        event = transient_waveform(t, spec.event_onset, spec.transient_width,
                                   spec.amplitude_snr * spec.noise_uv, sign)
    else:
        event = np.zeros(n_box)
    return Snippet(spec, noise[n_pre:] + event, noise[:n_pre], event)


# --- corpus ----------------------------------------------------------------

@dataclass(frozen=True)
class CorpusDistribution:
    """Seeded parameter distributions for :func:`generate_corpus`."""

    hfo_duration_median: float = HFO_MEDIAN_DURATION
    hfo_duration_log_sd: float = 0.3
    hfo_duration_bounds: tuple = (HFO_MIN_DURATION, 0.040)
    hfo_freq_median: float = HFO_MEDIAN_FREQ
    hfo_freq_sd: float = 40.0
    hfo_freq_bounds: tuple = (270.0, 480.0)
    hfo_snr_bounds: tuple = (15.0, 30.0)
    transient_width_median: float = TRANSIENT_MEDIAN_CYCLE
    transient_width_bounds: tuple = (2e-3, 5e-3)
    transient_snr_bounds: tuple = (6.0, 15.0)
    noise_uv: float = NOISE_UV


@dataclass
class Corpus:
    snippets: List[Snippet]
    base_seed: int
    distribution: CorpusDistribution = field(default_factory=CorpusDistribution)

    def __len__(self):
        return len(self.snippets)

    def __iter__(self):
        return iter(self.snippets)

    def of_kind(self, kind: Kind) -> List[Snippet]:
        return [s for s in self.snippets if s.label is Kind(kind)]


def draw_spec(kind: Kind, seed: int, dist: CorpusDistribution = CorpusDistribution()) -> SnippetSpec:
    rng = np.random.default_rng([seed, 7919])
    kind = Kind(kind)
    if kind is Kind.HFO:
        dur = float(np.clip(dist.hfo_duration_median * np.exp(dist.hfo_duration_log_sd * rng.standard_normal()),
                            *dist.hfo_duration_bounds))
        freq = float(np.clip(rng.normal(dist.hfo_freq_median, dist.hfo_freq_sd), *dist.hfo_freq_bounds))
        snr = float(rng.uniform(*dist.hfo_snr_bounds))
        slack = CONTAINER - dur
        onset = float(rng.uniform(0.2, 0.8) * slack)
        return SnippetSpec(kind, seed, hfo_freq=freq, hfo_duration=dur, amplitude_snr=snr, onset=onset,
                           noise_uv=dist.noise_uv)
    if kind is Kind.TRANSIENT:
        lo, hi = dist.transient_width_bounds
        width = float(np.clip(dist.transient_width_median * np.exp(0.2 * rng.standard_normal()), lo, hi))
        snr = float(rng.uniform(*dist.transient_snr_bounds))
        onset = float(rng.uniform(0.3, 0.6) * CONTAINER)
        return SnippetSpec(kind, seed, transient_width=width, amplitude_snr=snr, onset=onset,
                           noise_uv=dist.noise_uv)
    return SnippetSpec(kind, seed, noise_uv=dist.noise_uv)


def generate_corpus(n_hfo: int, n_transient: int, base_seed: int = 0, n_noise: int = 0,
                    distribution: CorpusDistribution = CorpusDistribution()) -> Corpus:
    """Labeled snippets; a pure function of the counts, seed and distribution."""
    if min(n_hfo, n_transient, n_noise) < 0:
        raise ValueError("snippet counts must be non-negative")
    if n_hfo + n_transient + n_noise == 0:
        raise EmptyCorpus("corpus needs at least one snippet")
    snippets = []
    plan = [(Kind.HFO, n_hfo), (Kind.TRANSIENT, n_transient), (Kind.NOISE, n_noise)]
    for kind_idx, (kind, n) in enumerate(plan):
        for i in range(n):
            seed = int(np.random.SeedSequence([base_seed, kind_idx, i]).generate_state(1)[0])
            snippets.append(generate_snippet(draw_spec(kind, seed, distribution)))
    return Corpus(snippets, base_seed, distribution)


def write_corpus(corpus: Corpus, out_dir) -> Path:
    """One CSV per snippet (preroll + container) and a ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, snip in enumerate(corpus):
        name = f"snippet_{i:04d}_{snip.label.value}.csv"
        ctx = snip.context
        t0 = -snip.spec.preroll
        with open(out / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "signal"])
            for k, v in enumerate(ctx):
                w.writerow([f"{t0 + k / FS:.6f}", repr(float(v))])
        start, end = snip.event_interval
        entries.append({"file": name, "label": snip.label.value, "event_start_s": start,
                        "event_end_s": end, "spec": snip.spec.to_dict()})
    manifest = {"base_seed": corpus.base_seed, "sample_rate": FS, "container_s": CONTAINER,
                "n_snippets": len(entries),
                "counts": {k.value: sum(e["label"] == k.value for e in entries) for k in Kind},
                "distribution": asdict(corpus.distribution), "snippets": entries}
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())


def event_support(snippet: Snippet, threshold: float, frontend=None):
    """(start, end) in container time where the band-passed clean event alone
    reaches the encoder threshold; ``None`` when it never does.

    This is the stretch of the spike train attributable to the event rather
    than to the background.
    """
    from .pipeline import FrontendConfig, bandpass_oversampled
    from .dsp import OVERSAMPLED_RATE

    frontend = frontend or FrontendConfig()
    clean = np.concatenate([np.zeros(snippet.preroll.size), snippet.event])
    y = bandpass_oversampled(clean, snippet.sample_rate, frontend)
    offset = int(round(snippet.spec.preroll * OVERSAMPLED_RATE))
    idx = np.flatnonzero(np.abs(y[offset:]) >= threshold)
    if idx.size == 0:
        return None
    return idx[0] / OVERSAMPLED_RATE, idx[-1] / OVERSAMPLED_RATE


# --- synthetic patient recordings ------------------------------------------

@dataclass(frozen=True)
class PlantedEvent:
    channel: str
    kind: Kind
    start: float
    end: float


def synthesize_recording(duration: float, hfo_counts: Sequence[int], seed: int,
                         transient_rate: float = 2.0, patient_id: str = "", phase: str = "pre",
                         distribution: CorpusDistribution = CorpusDistribution(),
                         clean_lead: float = PREROLL, spacing: float = 0.15):
    """Multichannel background with planted HFOs and transients.

    Channel ``k`` receives ``hfo_counts[k]`` HFOs plus transients at
    ``transient_rate`` per minute, on non-overlapping slots ``spacing`` apart
    after the first ``clean_lead`` seconds (kept event free for the baseline).

    Returns
    -------
    (Recording, list of PlantedEvent)
    """
    from .recording import ChannelSignal, Recording

    n = int(round(duration * FS))
    n_slots = int((duration - clean_lead - CONTAINER) // spacing)
    channels, planted = [], []
    t = np.arange(n) / FS
    for k, n_hfo in enumerate(hfo_counts):
        label = f"ch{k:02d}"
        rng = np.random.default_rng([seed, k])
        n_tr = int(round(transient_rate * duration / 60.0))
        if n_hfo + n_tr > n_slots:
            raise ValueError(f"{n_hfo + n_tr} events do not fit in {duration} s")
        x = pink_noise(n, rng)
        slots = np.sort(rng.choice(n_slots, size=n_hfo + n_tr, replace=False))
        kinds = np.array([Kind.HFO] * n_hfo + [Kind.TRANSIENT] * n_tr, dtype=object)
        rng.shuffle(kinds)
        for slot, kind in zip(slots, kinds):
            spec = draw_spec(kind, int(rng.integers(2**31)), distribution)
            t0 = clean_lead + slot * spacing + spec.event_onset
            if kind is Kind.HFO:
                x += hfo_waveform(t, t0, spec.hfo_duration, spec.hfo_freq,
                                  spec.amplitude_snr * spec.noise_uv, rng.uniform(0, 2 * np.pi))
            else:
                x += transient_waveform(t, t0, spec.transient_width, spec.amplitude_snr * spec.noise_uv,
                                        1.0 if rng.random() < 0.5 else -1.0)
            planted.append(PlantedEvent(label, kind, t0, t0 + spec.event_duration))
        channels.append(ChannelSignal(label, x))
    rec = Recording(FS, tuple(channels), patient_id=patient_id, phase=phase)
    return rec, planted


def write_cohort(out_dir, pre_rates: Sequence[float], post_rates: Sequence[float],
                 ilae: Sequence[int], seed: int = 0, duration: float = 210.0,
                 n_channels: int = 2, transient_rate: float = 2.0) -> Path:
    """Pseudo-patients whose busiest channel carries the requested rate (HFO/min).

    Writes ``P<i>_pre.hfo`` / ``P<i>_post.hfo`` with sidecars, an
    ``outcomes.csv`` and a ``truth.json`` listing every planted event.
    Remaining channels hold transients only.
    """
    from .recording import write_recording

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    truth = []
    with open(out / "outcomes.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["patient_id", "ilae", "followup_months"])
        for i, (pre, post, cls) in enumerate(zip(pre_rates, post_rates, ilae)):
            pid = f"P{i + 1}"
            w.writerow([pid, int(cls), 0])
            for j, (phase, rate) in enumerate((("pre", pre), ("post", post))):
                counts = [int(round(rate * duration / 60.0))] + [0] * (n_channels - 1)
                sub = int(np.random.SeedSequence([seed, i, j]).generate_state(1)[0])
                rec, planted = synthesize_recording(duration, counts, sub, transient_rate, pid, phase)
                write_recording(rec, out / f"{pid}_{phase}.hfo")
                truth += [{"patient": pid, "phase": phase, "channel": e.channel, "kind": e.kind.value,
                           "start_s": e.start, "end_s": e.end} for e in planted]
    (out / "truth.json").write_text(json.dumps(truth, indent=1))
    return out


def event_cycles(snippet: Snippet, frontend=None) -> int:
    """UP-DN cycles the encoder produces while the event is above threshold.

    The snippet's preroll sets the baseline exactly as in detection; cycles
    are counted on the part of the train inside :func:`event_support`.
    """
    from .adm import segment_cycles
    from .pipeline import FrontendConfig, encode_channel

    frontend = frontend or FrontendConfig()
    enc = encode_channel(snippet.context, snippet.sample_rate, frontend)
    sup = event_support(snippet, float(enc.threshold[0]), frontend)
    if sup is None:
        return 0
    t0 = snippet.spec.preroll
    return len(segment_cycles(enc.train.window(t0 + sup[0], t0 + sup[1] + enc.train.tick)))
